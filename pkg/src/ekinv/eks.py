"""Interacting-particle posterior samplers.

Three variants share one Euler-Maruyama stepper:

``langevin``
    ``du_j = C(u) grad log pi(u_j) dt + sqrt(2 C(u)) dW_j`` (needs gradients)
``eks``
    the derivative-free ensemble Kalman sampler, which replaces
    ``C(u) DG(u_j)^T`` by the cross-covariance ``C^{ug}``
``localized-eks``
    EKS with per-particle moments weighted by ``exp(-|u_j - u_i|^2_D / (2 gamma_loc))``

The target is ``pi(u) ~ exp(-0.5 |y - G(u)|^2_Gamma - 0.5 lam |u - m0|^2_C0)``.
Global moments use the unbiased J - 1 divisor; localized moments are
weighted averages (weights sum to one).
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from scipy.special import log_softmax

from .ensemble import Ensemble, as_particles, compute_moments, ensemble_spread, sqrtm_psd
from .models import LinearModel
from .records import DIVERGENCE_BOUND, RunRecord, relative_error

log = logging.getLogger(__name__)

__all__ = [
    "VARIANTS",
    "EksConfig",
    "GaussianPosterior",
    "SamplerTrace",
    "SamplerDivergence",
    "langevin_drift",
    "linear_gaussian_grad_log_target",
    "eks_drift",
    "eks_step",
    "localization_weights",
    "localized_moments",
    "localized_eks_drift",
    "run_sampler",
    "gaussian_posterior",
    "kl_gaussians",
    "log_checkpoints",
]

VARIANTS = ("langevin", "eks", "localized-eks")


class SamplerDivergence(FloatingPointError):
    pass


@dataclass(frozen=True)
class EksConfig:
    """Sampler settings.

    ``D`` is the localization metric (identity if omitted); distances use
    ``v^T D^{-1} v``. ``noise=False`` turns the sampler into its
    deterministic mean-drift flow.
    """

    dt: float = 0.005
    T: float = 20.0
    J: int = 200
    gamma_loc: float = 1.0
    D: np.ndarray = None
    seed: int = 0
    variant: str = "eks"
    lam: float = 1.0
    noise: bool = True
    n_checkpoints: int = 12

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.T < 0:
            raise ValueError(f"T must be non-negative, got {self.T}")
        if not self.gamma_loc > 0:
            raise ValueError(f"gamma_loc must be positive, got {self.gamma_loc}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.J < 2:
            raise ValueError(f"J must be >= 2, got {self.J}")
        if self.D is not None:
            D = np.atleast_2d(np.asarray(self.D, float))
            if not np.allclose(D, D.T):
                raise ValueError("localization metric D must be symmetric")
            try:
                np.linalg.cholesky(D)
            except np.linalg.LinAlgError:
                raise ValueError("localization metric D must be positive definite") from None
            object.__setattr__(self, "D", D)

    @property
    def n_steps(self):
        return int(np.floor(self.T / self.dt + 1e-9))


@dataclass(frozen=True)
class GaussianPosterior:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.atleast_1d(np.asarray(self.mean, float)))
        object.__setattr__(self, "cov", np.atleast_2d(np.asarray(self.cov, float)))


def gaussian_posterior(A, gamma, c0, y, lam=1.0):
    """Conjugate posterior of ``y = A u + N(0, gamma)`` under ``u ~ N(0, c0 / lam)``.

    ``cov = (A^T gamma^{-1} A + lam c0^{-1})^{-1}``, ``mean = cov A^T gamma^{-1} y``.
    """
    A = np.atleast_2d(np.asarray(A, float))
    gamma = np.atleast_2d(np.asarray(gamma, float))
    c0 = np.atleast_2d(np.asarray(c0, float))
    try:
        gi_A = la.cho_solve(la.cho_factor(gamma), A)
        precision = A.T @ gi_A + lam * la.cho_solve(la.cho_factor(c0), np.eye(c0.shape[0]))
        pf = la.cho_factor(precision)
    except la.LinAlgError:
        raise np.linalg.LinAlgError("posterior precision is singular") from None
    cov = la.cho_solve(pf, np.eye(precision.shape[0]))
    cov = 0.5 * (cov + cov.T)
    mean = la.cho_solve(pf, gi_A.T @ np.atleast_1d(y))
    return GaussianPosterior(mean, cov)


def kl_gaussians(p, q):
    """``KL(p || q)`` for Gaussians ``p``, ``q``."""
    d = p.mean.size
    try:
        Lp = np.linalg.cholesky(p.cov)
        Lq = np.linalg.cholesky(q.cov)
    except np.linalg.LinAlgError:
        raise ValueError("KL divergence needs positive definite covariances") from None
    M = la.solve_triangular(Lq, Lp, lower=True)
    diff = la.solve_triangular(Lq, q.mean - p.mean, lower=True)
    logdet = 2.0 * (np.sum(np.log(np.diag(Lq))) - np.sum(np.log(np.diag(Lp))))
    return max(0.5 * (np.sum(M * M) + diff @ diff - d + logdet), 0.0)


# -- drifts --------------------------------------------------------------------

def langevin_drift(u, grad_log_target):
    return np.asarray(grad_log_target(np.asarray(u, float)), dtype=float)


def linear_gaussian_grad_log_target(A, gamma, c0, y, lam=1.0, prior_mean=None):
    """``u -> -A^T gamma^{-1} (A u - y) - lam c0^{-1} (u - m0)``.

    The returned callable also accepts a (J, d) stack of points.
    """
    A = np.atleast_2d(np.asarray(A, float))
    gf = la.cho_factor(np.atleast_2d(gamma))
    cf = la.cho_factor(np.atleast_2d(c0))
    m0 = np.zeros(A.shape[1]) if prior_mean is None else np.asarray(prior_mean, float)
    y = np.atleast_1d(y)

    def grad(u):
        U = np.atleast_2d(u)
        g = (-la.cho_solve(gf, (U @ A.T - y).T).T @ A
             - lam * la.cho_solve(cf, (U - m0).T).T)
        return g[0] if np.ndim(u) == 1 else g

    grad.batched = True
    return grad


def _prior_pull(U, c0, lam, prior_mean):
    m0 = 0.0 if prior_mean is None else np.asarray(prior_mean, float)
    return lam * la.cho_solve(la.cho_factor(np.atleast_2d(c0)), (U - m0).T).T


def eks_drift(ens, model, y, gamma, c0, lam=1.0, prior_mean=None, outputs=None):
    """``-C^{ug} gamma^{-1} (G(u_j) - y) - C(u) lam c0^{-1} (u_j - m0)`` for every particle."""
    U = as_particles(ens)
    G = model.apply_ensemble(U) if outputs is None else outputs
    mom = compute_moments(U, G)
    misfit = la.cho_solve(la.cho_factor(np.atleast_2d(gamma)), (G - np.atleast_1d(y)).T).T
    return -misfit @ mom.cov_ug.T - _prior_pull(U, c0, lam, prior_mean) @ mom.cov_uu.T


def localization_weights(ens, gamma_loc, D=None):
    """Row-stochastic (J, J) weights ``w[j, i] ~ exp(-|u_j - u_i|^2_D / (2 gamma_loc))``."""
    if not gamma_loc > 0:
        raise ValueError(f"gamma_loc must be positive, got {gamma_loc}")
    U = as_particles(ens)
    if D is None:
        V = U
    else:
        # |v|^2_D = v^T D^{-1} v = |L^{-1} v|^2 with D = L L^T
        L = np.linalg.cholesky(np.atleast_2d(D))
        V = la.solve_triangular(L, U.T, lower=True).T
    diff = V[:, None, :] - V[None, :, :]
    sq = np.einsum("jik,jik->ji", diff, diff)
    return np.exp(log_softmax(-sq / (2.0 * gamma_loc), axis=1))


def _all_localized_moments(U, G, W):
    mean_u = W @ U
    mean_g = W @ G
    dU = U[None, :, :] - mean_u[:, None, :]  # (j, i, d)
    dG = G[None, :, :] - mean_g[:, None, :]
    cov = np.einsum("ji,jia,jib->jab", W, dU, dU)
    cov_ug = np.einsum("ji,jia,jib->jab", W, dU, dG)
    return mean_u, mean_g, cov, cov_ug


def localized_moments(ens, outputs, weights, j):
    """Weighted mean, output mean, covariance and cross-covariance around particle j."""
    U = as_particles(ens)
    G = np.asarray(outputs, float)
    w = np.asarray(weights, float)[j]
    mean_u = w @ U
    mean_g = w @ G
    dU = U - mean_u
    dG = G - mean_g
    return mean_u, mean_g, (dU * w[:, None]).T @ dU, (dU * w[:, None]).T @ dG


def localized_eks_drift(ens, model, y, gamma, c0, weights, lam=1.0, prior_mean=None, outputs=None):
    """Localized EKS drift and the per-particle covariances (J, d, d) it used."""
    U = as_particles(ens)
    G = model.apply_ensemble(U) if outputs is None else outputs
    _, _, cov, cov_ug = _all_localized_moments(U, G, weights)
    misfit = la.cho_solve(la.cho_factor(np.atleast_2d(gamma)), (G - np.atleast_1d(y)).T).T
    pull = _prior_pull(U, c0, lam, prior_mean)
    drift = -np.einsum("jab,jb->ja", cov_ug, misfit) - np.einsum("jab,jb->ja", cov, pull)
    return drift, cov


def eks_step(ens, drifts, cov, dt, rng=None, noise=True):
    """Euler-Maruyama step ``u_j + dt drift_j + sqrt(2 dt) S xi_j`` with ``S = cov^{1/2}``.

    ``cov`` is one (d, d) matrix shared by all particles or a (J, d, d) stack.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    U = as_particles(ens)
    new = U + dt * np.asarray(drifts, float)
    if noise:
        S = sqrtm_psd(cov)
        xi = rng.standard_normal(U.shape)
        if S.ndim == 2:
            new = new + np.sqrt(2.0 * dt) * xi @ S.T
        else:
            new = new + np.sqrt(2.0 * dt) * np.einsum("jab,jb->ja", S, xi)
    return Ensemble(new)


# -- driver --------------------------------------------------------------------

def log_checkpoints(n_steps, count):
    """Roughly logarithmically spaced step indices in [0, n_steps], always including both ends."""
    if n_steps == 0:
        return np.array([0])
    pts = np.unique(np.round(np.geomspace(1, n_steps, max(count - 1, 1))).astype(int))
    return np.concatenate([[0], pts])


@dataclass
class SamplerTrace:
    """Per-step ensemble mean and covariance plus KL checkpoints.

    ``kl`` has one entry per index in ``checkpoints`` (NaN for non-Gaussian
    targets). ``record`` carries the same information in the shared CSV schema.
    """

    times: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    checkpoints: np.ndarray
    kl: np.ndarray
    final: Ensemble
    record: RunRecord = field(default=None, repr=False)

    def time_average(self, t_from=None):
        """Mean and covariance averaged over steps with time >= ``t_from`` (default T/2)."""
        if t_from is None:
            t_from = 0.5 * self.times[-1]
        sel = self.times >= t_from
        return self.means[sel].mean(axis=0), self.covs[sel].mean(axis=0)


def _gaussian_fit(U):
    mom_cov = np.cov(U, rowvar=False, ddof=1)
    return GaussianPosterior(U.mean(axis=0), np.atleast_2d(mom_cov))


def run_sampler(problem, cfg, ensemble=None, grad_log_target=None, truth=None, target=None):
    """Integrate the selected particle system from t = 0 to T.

    Parameters
    ----------
    problem : InverseProblem
        Needs ``prior_cov``; ``prior_mean`` defaults to zero.
    cfg : EksConfig
    ensemble : Ensemble, optional
        Initial particles; drawn from the prior with ``cfg.seed`` when omitted.
    grad_log_target : callable, optional
        Required by the ``langevin`` variant unless the model is linear.
    target : GaussianPosterior, optional
        Reference for KL checkpoints; computed automatically for linear models.
    """
    c0 = problem.prior_cov
    if c0 is None:
        raise ValueError("sampling needs a prior covariance on the problem")
    c0 = np.atleast_2d(c0)
    m0 = problem.prior_mean
    d = c0.shape[0]
    root_rng = np.random.default_rng([int(cfg.seed), 0])
    if ensemble is None:
        L0 = np.linalg.cholesky(c0 / cfg.lam)
        start = root_rng.standard_normal((cfg.J, d)) @ L0.T
        if m0 is not None:
            start = start + m0
        ensemble = Ensemble(start)
    ens = Ensemble(ensemble)

    linear = isinstance(problem.model, LinearModel)
    if target is None and linear and m0 is None:
        target = gaussian_posterior(problem.model.A, problem.gamma, c0, problem.y, cfg.lam)
    if cfg.variant == "langevin" and grad_log_target is None:
        if not linear:
            raise ValueError("the langevin variant needs grad_log_target for nonlinear models")
        grad_log_target = linear_gaussian_grad_log_target(
            problem.model.A, problem.gamma, c0, problem.y, cfg.lam, m0)

    n = cfg.n_steps
    checkpoints = log_checkpoints(n, cfg.n_checkpoints)
    times = cfg.dt * np.arange(n + 1)
    means = np.empty((n + 1, d))
    covs = np.empty((n + 1, d, d))
    kls = []
    record = RunRecord(noise_level=problem.noise_level,
                       whitened_noise_level=problem.whitened_noise_level,
                       config={"algorithm": cfg.variant, "dt": cfg.dt, "T": cfg.T, "J": cfg.J,
                               "gamma_loc": cfg.gamma_loc, "seed": cfg.seed, "lam": cfg.lam})

    def observe_state(i, e):
        U = e.particles
        fit = _gaussian_fit(U)
        means[i], covs[i] = fit.mean, fit.cov
        if i in checkpoints:
            kl = None
            if target is not None:
                try:
                    kl = kl_gaussians(fit, target)
                except ValueError:
                    kl = float("inf")
            kls.append(np.nan if kl is None else kl)
            record.append(step=i, time=float(times[i]),
                          rel_error=None if truth is None else relative_error(truth, fit.mean),
                          data_misfit=problem.misfit(fit.mean), spread=ensemble_spread(e), kl=kl)

    observe_state(0, ens)
    for i in range(n):
        U = ens.particles
        G = problem.model.apply_ensemble(U)
        if cfg.variant == "localized-eks":
            W = localization_weights(U, cfg.gamma_loc, cfg.D)
            drift, cov = localized_eks_drift(U, problem.model, problem.y, problem.gamma, c0, W,
                                             cfg.lam, m0, outputs=G)
        else:
            cov = compute_moments(U, G).cov_uu
            if cfg.variant == "eks":
                drift = eks_drift(U, problem.model, problem.y, problem.gamma, c0, cfg.lam, m0, outputs=G)
            else:
                if getattr(grad_log_target, "batched", False):
                    grads = grad_log_target(U)
                else:
                    grads = np.stack([langevin_drift(u, grad_log_target) for u in U])
                drift = grads @ cov.T
        rng = np.random.default_rng([int(cfg.seed), 1, i]) if cfg.noise else None
        ens = eks_step(U, drift, cov, cfg.dt, rng, noise=cfg.noise)
        U = ens.particles
        if not np.all(np.isfinite(U)) or np.max(np.linalg.norm(U, axis=1)) > DIVERGENCE_BOUND:
            raise SamplerDivergence(f"sampler diverged at t = {times[i + 1]:.6g}")
        observe_state(i + 1, ens)

    record.reconstruction = ens.mean
    record.final_ensemble = ens
    return SamplerTrace(times, means, covs, checkpoints, np.array(kls, dtype=float), ens, record)
