"""Ensemble container and the empirical moment kernels shared by all algorithms."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

__all__ = [
    "Ensemble",
    "MomentSet",
    "GainSolveError",
    "as_particles",
    "compute_moments",
    "gain_apply",
    "ensemble_spread",
    "sqrtm_psd",
]


class GainSolveError(np.linalg.LinAlgError):
    """Raised when the innovation covariance cannot be factorized."""

    def __init__(self, message, min_eigenvalue):
        super().__init__(f"{message} (smallest eigenvalue {min_eigenvalue:.3e})")
        self.min_eigenvalue = min_eigenvalue


@dataclass(frozen=True)
class Ensemble:
    """J particles in R^d, stored as a read-only (J, d) array.

    Algorithms never mutate an ensemble; each step returns a new one.
    """

    particles: np.ndarray

    def __post_init__(self):
        p = np.array(self.particles, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if p.ndim != 2:
            raise ValueError(f"particles must be a (J, d) array, got shape {p.shape}")
        if p.shape[0] < 2:
            raise ValueError(f"an ensemble needs J >= 2 particles, got {p.shape[0]}")
        p.setflags(write=False)
        object.__setattr__(self, "particles", p)

    @property
    def J(self):
        return self.particles.shape[0]

    @property
    def d(self):
        return self.particles.shape[1]

    @property
    def mean(self):
        return self.particles.mean(axis=0)

    def __len__(self):
        return self.J

    def __iter__(self):
        return iter(self.particles)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.particles, dtype=dtype)


def as_particles(ens):
    """Return the (J, d) particle array of an Ensemble or array-like."""
    if isinstance(ens, Ensemble):
        return ens.particles
    return Ensemble(ens).particles


@dataclass(frozen=True)
class MomentSet:
    """Sample moments of an ensemble and its forward-model outputs.

    All covariances use the unbiased divisor J - 1.
    """

    mean_u: np.ndarray
    mean_g: np.ndarray
    cov_uu: np.ndarray
    cov_ug: np.ndarray
    cov_gg: np.ndarray
    J: int


def compute_moments(ens, outputs):
    """Sample means and (cross-)covariances of particles and their outputs.

    Parameters
    ----------
    ens : Ensemble or (J, d) array
    outputs : (J, K) array
        ``outputs[j]`` is the forward-model output of particle ``j``.
    """
    U = as_particles(ens)
    G = np.asarray(outputs, dtype=float)
    if G.ndim == 1:
        G = G[:, None]
    if G.shape[0] != U.shape[0]:
        raise ValueError(
            f"got {G.shape[0]} outputs for {U.shape[0]} particles"
        )
    J = U.shape[0]
    mean_u = U.mean(axis=0)
    mean_g = G.mean(axis=0)
    dU = U - mean_u
    dG = G - mean_g
    cov_uu = dU.T @ dU / (J - 1)
    cov_ug = dU.T @ dG / (J - 1)
    cov_gg = dG.T @ dG / (J - 1)
    # exact symmetry; the products above are symmetric only up to rounding
    cov_uu = 0.5 * (cov_uu + cov_uu.T)
    cov_gg = 0.5 * (cov_gg + cov_gg.T)
    return MomentSet(mean_u, mean_g, cov_uu, cov_ug, cov_gg, J)


def _cho_factor_checked(S, what):
    try:
        return la.cho_factor(S, lower=True, check_finite=True)
    except la.LinAlgError:
        lam_min = float(np.linalg.eigvalsh(0.5 * (S + S.T))[0])
        raise GainSolveError(f"{what} is not positive definite", lam_min) from None


def gain_apply(moments, gamma, h, residual):
    """Apply the Kalman-type gain ``h C^{ug} (h C^{gg} + gamma)^{-1}`` to residuals.

    ``residual`` may be a single (K,) vector or a (J, K) stack, one row per
    particle; the result has matching leading shape with trailing dim d.
    The innovation matrix is Cholesky-factorized, never inverted.
    """
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    S = h * moments.cov_gg + gamma
    factor = _cho_factor_checked(S, "h*C^gg + Gamma")
    r = np.asarray(residual, dtype=float)
    single = r.ndim == 1
    R = r[:, None] if single else r.T
    out = h * moments.cov_ug @ la.cho_solve(factor, R)
    return out[:, 0] if single else out.T


def ensemble_spread(ens):
    """Trace of the sample covariance; zero iff all particles coincide."""
    U = as_particles(ens)
    dU = U - U.mean(axis=0)
    return float(np.sum(dU * dU) / (U.shape[0] - 1))


def sqrtm_psd(cov):
    """Symmetric square root of a PSD matrix, clipping negative eigenvalues to 0.

    Accepts a single (d, d) matrix or a (J, d, d) stack.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim < 2:
        cov = np.atleast_2d(cov)
    w, V = np.linalg.eigh(0.5 * (cov + np.swapaxes(cov, -1, -2)))
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)[..., None, :]) @ np.swapaxes(V, -1, -2)
