"""Stochastic (perturbed-observation) ensemble Kalman filter for state estimation."""

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as la

from .ensemble import Ensemble, as_particles, compute_moments

__all__ = ["StateSpaceModel", "predict", "analysis", "kalman_gain", "run_twin", "TwinResult"]


@dataclass(frozen=True)
class StateSpaceModel:
    """``u_{n+1} = psi(u_n) + N(0, sigma)``, ``y_{n+1} = H u_{n+1} + N(0, gamma)``.

    ``psi`` maps a (J, m) stack of states row-wise.
    """

    psi: Callable
    sigma: np.ndarray
    H: np.ndarray
    gamma: np.ndarray
    m0: np.ndarray
    c0: np.ndarray

    def __post_init__(self):
        for name in ("sigma", "H", "gamma", "c0"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), float)))
        object.__setattr__(self, "m0", np.atleast_1d(np.asarray(self.m0, float)))
        m = self.m0.size
        if self.sigma.shape != (m, m) or self.c0.shape != (m, m):
            raise ValueError("sigma and c0 must be m x m")
        if self.H.shape[1] != m or self.gamma.shape != (self.H.shape[0],) * 2:
            raise ValueError("H must be mbar x m and gamma mbar x mbar")


def _gaussian_rows(rng, n, cov):
    cov = np.atleast_2d(cov)
    if not np.any(cov):
        return np.zeros((n, cov.shape[0]))
    w, V = np.linalg.eigh(cov)
    return rng.standard_normal((n, cov.shape[0])) @ (V * np.sqrt(np.clip(w, 0, None))).T


def predict(ens, model, rng):
    """Forecast step: push every particle through psi and add process noise.

    Returns the forecast ensemble and its moments (outputs ``H u``).
    """
    U = as_particles(ens)
    forecast = np.asarray(model.psi(U), float) + _gaussian_rows(rng, U.shape[0], model.sigma)
    return Ensemble(forecast), compute_moments(forecast, forecast @ model.H.T)


def kalman_gain(cov, H, gamma):
    """``K = C H^T (H C H^T + gamma)^{-1}``."""
    S = H @ cov @ H.T + gamma
    try:
        factor = la.cho_factor(S)
    except la.LinAlgError:
        raise np.linalg.LinAlgError("innovation covariance H C H^T + gamma is singular") from None
    return la.cho_solve(factor, H @ cov).T


def analysis(ens_pred, model, y, rng=None, moments=None, perturb=True):
    """Analysis step ``u_j = (I - K H) u_j + K (y + eta_j)`` with ``eta_j ~ N(0, gamma)``."""
    U = as_particles(ens_pred)
    if moments is None:
        moments = compute_moments(U, U @ model.H.T)
    K = kalman_gain(moments.cov_uu, model.H, model.gamma)
    Y = np.broadcast_to(np.atleast_1d(y), (U.shape[0], model.H.shape[0]))
    if perturb:
        Y = Y + _gaussian_rows(rng, U.shape[0], model.gamma)
    return Ensemble(U + (Y - U @ model.H.T) @ K.T)


@dataclass
class TwinResult:
    truth: np.ndarray         # (n_cycles + 1, m)
    observations: np.ndarray  # (n_cycles, mbar)
    means: np.ndarray         # (n_cycles + 1, m) analysis means
    spreads: np.ndarray
    final: Ensemble


def run_twin(model, J, n_cycles, seed_data, seed_algo):
    """Twin experiment: simulate a truth and data with ``seed_data``, filter with ``seed_algo``."""
    data_rng = np.random.default_rng([int(seed_data), 7])
    truth = [model.m0 + _gaussian_rows(data_rng, 1, model.c0)[0]]
    obs = []
    for _ in range(n_cycles):
        truth.append(np.asarray(model.psi(truth[-1][None, :]), float)[0]
                     + _gaussian_rows(data_rng, 1, model.sigma)[0])
        obs.append(model.H @ truth[-1] + _gaussian_rows(data_rng, 1, model.gamma)[0])

    rng = np.random.default_rng([int(seed_algo), 0])
    ens = Ensemble(model.m0 + _gaussian_rows(rng, J, model.c0))
    means, spreads = [ens.mean], [float(np.trace(np.atleast_2d(np.cov(ens.particles, rowvar=False))))]
    for n in range(n_cycles):
        cycle_rng = np.random.default_rng([int(seed_algo), 1, n])
        forecast, mom = predict(ens, model, cycle_rng)
        ens = analysis(forecast, model, obs[n], cycle_rng, mom)
        means.append(ens.mean)
        spreads.append(float(np.trace(np.atleast_2d(np.cov(ens.particles, rowvar=False)))))
    return TwinResult(np.array(truth), np.array(obs), np.array(means), np.array(spreads), ens)
