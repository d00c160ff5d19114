"""Regularized EKI: the inflated-gain iteration, discrepancy stopping and Tikhonov EKI.

Tikhonov EKI (TEKI) runs plain EKI on the augmented system

    z = (y, 0),   F(u) = (G(u), u),   Sigma = diag(gamma, C0 / lam),

which turns the iteration toward the minimizer of
``0.5 |y - G(u)|^2_gamma + 0.5 lam |u|^2_C0``.
"""

from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg as la

from .eki import _kalman_update, draw_perturbations, eki_step, iteration_rng
from .ensemble import Ensemble, as_particles
from .models import ForwardModel
from .records import iterate

__all__ = [
    "AugmentedModel",
    "AugmentedProblem",
    "augment",
    "teki_step",
    "run_teki",
    "regularized_gain_step",
    "run_regularized",
    "discrepancy_stop",
    "discrepancy_rule",
    "alpha_schedule",
]


class AugmentedModel(ForwardModel):
    """``u -> (G(u), u)``."""

    def __init__(self, model):
        self.base = model
        self.input_dim = model.input_dim
        self.output_dim = model.output_dim + model.input_dim

    def apply(self, u):
        u = np.asarray(u, dtype=float)
        return np.concatenate([self.base.apply(u), u])

    def apply_ensemble(self, ens):
        U = as_particles(ens)
        return np.hstack([self.base.apply_ensemble(U), U])


@dataclass(frozen=True)
class AugmentedProblem:
    model: AugmentedModel
    z: np.ndarray
    sigma: np.ndarray
    lam: float


def augment(model, y, gamma, c0, lam):
    """Build the TEKI system ``(F, z, Sigma)`` for regularization strength ``lam``.

    ``lam -> inf`` would shrink the prior block of Sigma to zero; only finite
    positive values are accepted.
    """
    if not (np.isfinite(lam) and lam > 0):
        raise ValueError(f"regularization strength must be finite and positive, got {lam}")
    y = np.atleast_1d(np.asarray(y, float))
    gamma = np.atleast_2d(np.asarray(gamma, float))
    c0 = np.atleast_2d(np.asarray(c0, float))
    d = model.input_dim
    if gamma.shape != (y.size, y.size):
        raise ValueError(f"gamma must be {y.size}x{y.size}, got {gamma.shape}")
    if c0.shape != (d, d):
        raise ValueError(f"c0 must be {d}x{d}, got {c0.shape}")
    try:
        np.linalg.cholesky(c0)
    except np.linalg.LinAlgError:
        raise ValueError("c0 must be symmetric positive definite") from None
    sigma = la.block_diag(gamma, c0 / lam)
    z = np.concatenate([y, np.zeros(d)])
    return AugmentedProblem(AugmentedModel(model), z, sigma, float(lam))


def teki_step(ens, aug, cfg, n=0, rng=None):
    """EKI step on the augmented system; perturbations are drawn from N(0, Sigma/h)."""
    return eki_step(ens, aug.model, aug.z, aug.sigma, cfg, n, rng)


def run_teki(problem, ensemble, cfg, lam, c0=None, truth=None, vartheta=None):
    """TEKI iteration with metrics on the original problem.

    ``c0`` defaults to ``problem.prior_cov``.
    """
    c0 = problem.prior_cov if c0 is None else c0
    if c0 is None:
        raise ValueError("TEKI needs a prior covariance c0")
    aug = augment(problem.model, problem.y, problem.gamma, c0, lam)

    def step(e, n):
        return teki_step(e, aug, cfg, n, iteration_rng(cfg.seed, n))

    echo = {"algorithm": "teki", "lam": float(lam), **asdict(cfg)}
    stop = discrepancy_rule(problem, vartheta)
    return iterate(problem, Ensemble(ensemble), step, cfg.n_max, truth, stop, echo)


def regularized_gain_step(ens, model, y, gamma, alpha_n, cfg, n=0, rng=None):
    """EKI step whose gain uses ``(h C^{gg} + alpha_n gamma)^{-1}``.

    Perturbations are drawn exactly as in :func:`eki_step`, so ``alpha_n = 1``
    reproduces it bit for bit.
    """
    if not alpha_n > 0:
        raise ValueError(f"alpha_n must be positive, got {alpha_n}")
    U = as_particles(ens)
    G = model.apply_ensemble(U)
    if rng is None:
        rng = iteration_rng(cfg.seed, n)
    gamma = np.atleast_2d(np.asarray(gamma, float))
    eta = draw_perturbations(cfg, U.shape[0], gamma, rng)
    return _kalman_update(U, G, np.asarray(y, float) + eta, alpha_n * gamma, cfg.h)


def run_regularized(problem, ensemble, cfg, schedule, truth=None, vartheta=None):
    """Iterate :func:`regularized_gain_step` with ``alpha_n = schedule(n)``."""

    def step(e, n):
        return regularized_gain_step(e, problem.model, problem.y, problem.gamma,
                                     schedule(n), cfg, n, iteration_rng(cfg.seed, n))

    echo = {"algorithm": "eki-reg", **asdict(cfg)}
    stop = discrepancy_rule(problem, vartheta)
    return iterate(problem, Ensemble(ensemble), step, cfg.n_max, truth, stop, echo)


def discrepancy_stop(misfit_norm, noise_level, vartheta):
    """Morozov rule: stop once ``misfit_norm <= noise_level / vartheta``.

    Both norms must be measured in the same (whitened) units.
    """
    if not 0 < vartheta < 1:
        raise ValueError(f"vartheta must lie in (0, 1), got {vartheta}")
    return bool(misfit_norm <= noise_level / vartheta)


def discrepancy_rule(problem, vartheta):
    """Stopping callable for :func:`ekinv.records.iterate`, or None if disabled."""
    if vartheta is None:
        return None
    noise = problem.whitened_noise_level
    if noise is None:
        raise ValueError("the discrepancy principle needs the realized noise level")
    if not 0 < vartheta < 1:
        raise ValueError(f"vartheta must lie in (0, 1), got {vartheta}")
    return lambda misfit_norm: discrepancy_stop(misfit_norm, noise, vartheta)


def alpha_schedule(kind, n, c=1.0, a=1.0, r=1.0):
    """Gain inflation ``alpha_n``: ``"constant"`` gives c, ``"geometric"`` gives a * r**n."""
    if kind == "constant":
        if not c > 0:
            raise ValueError(f"constant schedule needs c > 0, got {c}")
        return float(c)
    if kind == "geometric":
        if not (a > 0 and r > 0):
            raise ValueError(f"geometric schedule needs a, r > 0, got a={a}, r={r}")
        return float(a * r**n)
    raise ValueError(f"unknown schedule kind {kind!r}")
