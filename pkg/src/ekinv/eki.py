"""Discrete-time ensemble Kalman inversion with perturbed observations.

Also hosts the linear-Gaussian Tikhonov oracle and the variational cost
whose minimizer it is.
"""

from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg as la

from .ensemble import Ensemble, as_particles, compute_moments, gain_apply
from .records import iterate

__all__ = [
    "PERTURB_MODES",
    "EkiConfig",
    "iteration_rng",
    "draw_perturbations",
    "eki_step",
    "run_eki",
    "tikhonov_oracle",
    "variational_cost",
]

PERTURB_MODES = ("fresh-per-iteration", "fixed-per-particle", "none")

# stream tags keep the per-iteration and fixed perturbation streams disjoint
_FRESH, _FIXED = 1, 2


@dataclass(frozen=True)
class EkiConfig:
    """Step size ``h``, iteration budget and perturbation convention.

    ``perturb_mode`` selects how the data are randomized per particle:
    redrawn every iteration, drawn once per particle and reused, or not at
    all. Perturbations have covariance ``gamma / h``.
    """

    h: float = 1.0
    n_max: int = 24
    perturb_mode: str = "fresh-per-iteration"
    seed: int = 0

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"step size h must be positive, got {self.h}")
        if self.n_max < 0:
            raise ValueError(f"n_max must be non-negative, got {self.n_max}")
        if self.perturb_mode not in PERTURB_MODES:
            raise ValueError(f"perturb_mode must be one of {PERTURB_MODES}, got {self.perturb_mode!r}")


def iteration_rng(seed, n):
    """Generator for iteration ``n``; independent of evaluation order within a step."""
    return np.random.default_rng([int(seed), _FRESH, int(n)])


def draw_perturbations(cfg, J, gamma, rng=None):
    """(J, K) data perturbations with covariance ``gamma / h`` per ``cfg.perturb_mode``."""
    gamma = np.atleast_2d(gamma)
    K = gamma.shape[0]
    if cfg.perturb_mode == "none":
        return np.zeros((J, K))
    if cfg.perturb_mode == "fixed-per-particle":
        rng = np.random.default_rng([int(cfg.seed), _FIXED])
    elif rng is None:
        raise ValueError("fresh-per-iteration perturbations need a generator")
    L = np.linalg.cholesky(gamma)
    return rng.standard_normal((J, K)) @ L.T / np.sqrt(cfg.h)


def _kalman_update(U, G, y_pert, gain_gamma, h):
    moments = compute_moments(U, G)
    return Ensemble(U + gain_apply(moments, gain_gamma, h, y_pert - G))


def eki_step(ens, model, y, gamma, cfg, n=0, rng=None):
    """One EKI update ``u_j + h C^{ug} (h C^{gg} + gamma)^{-1} (y_j - G(u_j))``.

    Moments come from the pre-update ensemble; ``y_j = y + eta_j``.
    """
    U = as_particles(ens)
    G = model.apply_ensemble(U)
    if rng is None:
        rng = iteration_rng(cfg.seed, n)
    eta = draw_perturbations(cfg, U.shape[0], gamma, rng)
    return _kalman_update(U, G, np.asarray(y, float) + eta, gamma, cfg.h)


def run_eki(problem, ensemble, cfg, truth=None, vartheta=None):
    """Iterate :func:`eki_step` and record metrics at the ensemble mean.

    With ``vartheta`` in (0, 1) the run stops by the discrepancy principle
    once the whitened misfit norm falls to ``noise_level / vartheta``.
    """
    from .regularization import discrepancy_rule

    stop = discrepancy_rule(problem, vartheta)

    def step(e, n):
        return eki_step(e, problem.model, problem.y, problem.gamma, cfg, n, iteration_rng(cfg.seed, n))

    cfg_echo = {"algorithm": "eki", **asdict(cfg)}
    return iterate(problem, Ensemble(ensemble), step, cfg.n_max, truth, stop, cfg_echo)


def tikhonov_oracle(A, C, gamma, y, u_bar):
    """Closed-form Tikhonov/MAP point ``u_bar + C A^T (A C A^T + gamma)^{-1} (y - A u_bar)``."""
    A = np.atleast_2d(np.asarray(A, float))
    C = np.atleast_2d(np.asarray(C, float))
    gamma = np.atleast_2d(np.asarray(gamma, float))
    u_bar = np.atleast_1d(np.asarray(u_bar, float))
    S = A @ C @ A.T + gamma
    try:
        factor = la.cho_factor(S)
    except la.LinAlgError:
        raise np.linalg.LinAlgError("A C A^T + gamma is singular") from None
    return u_bar + C @ A.T @ la.cho_solve(factor, np.atleast_1d(y) - A @ u_bar)


def _weighted_sq(r, M, what):
    try:
        factor = la.cho_factor(np.atleast_2d(M))
    except la.LinAlgError:
        raise np.linalg.LinAlgError(f"{what} is singular") from None
    r = np.atleast_1d(r)
    return float(r @ la.cho_solve(factor, r))


def variational_cost(u, y_j, u_hat, H, gamma, c_hat, regularize=False, eps=1e-8):
    """``0.5 |y_j - H(u)|^2_gamma + 0.5 |u - u_hat|^2_c_hat``.

    ``H`` is a matrix or a callable. A rank-deficient ensemble covariance
    ``c_hat`` is shifted by ``eps * I`` when ``regularize`` is set.
    """
    u = np.atleast_1d(np.asarray(u, float))
    Hu = H(u) if callable(H) else np.atleast_2d(H) @ u
    c_hat = np.atleast_2d(np.asarray(c_hat, float))
    if regularize:
        c_hat = c_hat + eps * np.eye(c_hat.shape[0])
    data = _weighted_sq(np.atleast_1d(y_j) - Hu, gamma, "gamma")
    prior = _weighted_sq(u - np.atleast_1d(u_hat), c_hat, "c_hat")
    return 0.5 * (data + prior)
