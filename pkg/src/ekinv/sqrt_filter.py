"""Deterministic mean-covariance (square-root form) iteration with inflation.

For a linear observation map H the exact Gaussian moments are
``C^{ug} = C H^T`` and ``C^{gg} = H C H^T``, and one step reads

    m+ = m + C^{ug} (C^{gg} + gamma / h_n)^{-1} (z - H m)
    C+ = C - C^{ug} (C^{gg} + gamma / h_n)^{-1} C^{gu} + alpha_n^2 Sigma

i.e. a Kalman update against the tempered noise ``gamma / h_n`` followed by
additive inflation.
"""

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as la

from .records import format_float

__all__ = [
    "MeanCovState",
    "SqrtConfig",
    "SqrtTrace",
    "sqrt_step",
    "run_sqrt",
    "quadratic_loss",
    "convexity_constant",
]

PSD_TOL = 1e-10


def _project_psd(C):
    C = 0.5 * (C + C.T)
    w, V = np.linalg.eigh(C)
    scale = max(1.0, float(np.max(np.abs(w))))
    if w[0] < -PSD_TOL * scale:
        raise np.linalg.LinAlgError(f"covariance lost positive semidefiniteness (eigenvalue {w[0]:.3e})")
    if w[0] < 0:
        C = (V * np.clip(w, 0.0, None)) @ V.T
    return C


@dataclass(frozen=True)
class MeanCovState:
    m: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.m, float))
        C = np.atleast_2d(np.asarray(self.C, float))
        if C.shape != (m.size, m.size):
            raise ValueError(f"covariance must be {m.size}x{m.size}, got {C.shape}")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "C", _project_psd(C))


def _default_alpha(n):
    return 1.0 / (n + 1)


def _default_step(n):
    return float(n + 1)


@dataclass(frozen=True)
class SqrtConfig:
    """Inflation matrix and the schedules ``alpha_n`` and ``h_n`` (n counts from 0).

    Defaults: ``h_n = n + 1`` and ``alpha_n = 1 / (n + 1)``, ``Sigma = I``.
    """

    inflation_sigma: np.ndarray = None
    alpha_schedule: Callable = field(default=_default_alpha)
    step_schedule: Callable = field(default=_default_step)
    n_max: int = 100


def sqrt_step(state, H, gamma, z, alpha_n, h_n, inflation_sigma=None):
    """One mean-covariance update; see the module docstring."""
    if not h_n > 0:
        raise ValueError(f"step size h_n must be positive, got {h_n}")
    H = np.atleast_2d(np.asarray(H, float))
    gamma = np.atleast_2d(np.asarray(gamma, float))
    m, C = state.m, state.C
    c_ug = C @ H.T
    S = H @ c_ug + gamma / h_n
    try:
        factor = la.cho_factor(S)
    except la.LinAlgError:
        raise np.linalg.LinAlgError("C^gg + gamma/h_n is not positive definite") from None
    m_new = m + c_ug @ la.cho_solve(factor, np.atleast_1d(z) - H @ m)
    C_new = C - c_ug @ la.cho_solve(factor, c_ug.T)
    if alpha_n:
        sigma = np.eye(m.size) if inflation_sigma is None else np.atleast_2d(inflation_sigma)
        C_new = C_new + alpha_n**2 * sigma
    return MeanCovState(m_new, C_new)


def quadratic_loss(m, H, gamma, z):
    """``0.5 |z - H m|^2_gamma``."""
    r = np.atleast_1d(z) - np.atleast_2d(H) @ np.atleast_1d(m)
    return 0.5 * float(r @ np.linalg.solve(np.atleast_2d(gamma), r))


def convexity_constant(H, gamma):
    """Strong-convexity constant ``lambda_min(0.5 H^T gamma^{-1} H)`` of the quadratic loss."""
    H = np.atleast_2d(H)
    Q = 0.5 * H.T @ np.linalg.solve(np.atleast_2d(gamma), H)
    return float(np.linalg.eigvalsh(0.5 * (Q + Q.T))[0])


@dataclass
class SqrtTrace:
    """Loss gap and squared mean error after each step (index 0 is the initial state)."""

    loss_gap: np.ndarray
    mean_error_sq: np.ndarray
    states: list

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("n", "loss_gap", "mean_error_sq"))
            for n, (g, e) in enumerate(zip(self.loss_gap, self.mean_error_sq)):
                w.writerow((n, format_float(g), format_float(e)))


def run_sqrt(H, gamma, z, state, cfg, u_star=None):
    """Iterate :func:`sqrt_step` and trace ``l(m_n) - l(u*)`` and ``|m_n - u*|^2``.

    ``u_star`` defaults to the least-squares minimizer of the quadratic loss.
    The gap is evaluated as ``0.5 (m - u*)^T H^T gamma^{-1} H (m - u*)``, exact
    for this loss when u* is its minimizer and free of cancellation.
    """
    H = np.atleast_2d(np.asarray(H, float))
    gamma = np.atleast_2d(np.asarray(gamma, float))
    z = np.atleast_1d(np.asarray(z, float))
    Q = H.T @ np.linalg.solve(gamma, H)
    if u_star is None:
        u_star = np.linalg.lstsq(Q, H.T @ np.linalg.solve(gamma, z), rcond=None)[0]

    def metrics(s):
        e = s.m - u_star
        return 0.5 * float(e @ Q @ e), float(e @ e)

    gaps, errs, states = [], [], [state]
    g, e = metrics(state)
    gaps.append(g)
    errs.append(e)
    for n in range(cfg.n_max):
        state = sqrt_step(state, H, gamma, z, cfg.alpha_schedule(n), cfg.step_schedule(n),
                          cfg.inflation_sigma)
        states.append(state)
        g, e = metrics(state)
        gaps.append(g)
        errs.append(e)
    return SqrtTrace(np.array(gaps), np.array(errs), states)
