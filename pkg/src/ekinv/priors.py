"""Gaussian random fields on the unit square via a truncated Karhunen-Loeve expansion.

The covariance operator is ``amplitude * (tau^2 I - Laplacian)^(-alpha)`` with a
homogeneous Neumann Laplacian, whose eigenfunctions are products of cosines.
Fields live on the N x N cell-centred grid ``x_i = (i + 1/2) / N`` and are
stored as flat row-major vectors of length N^2 (row index = y, column = x).
On this grid the midpoint-rule Gram matrix of the cosine modes is exactly
diagonal, so the sampled modes are orthonormal to rounding error.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ensemble import Ensemble

__all__ = [
    "KLBasis",
    "GaussianMeasure",
    "build_kl_basis",
    "sample_field",
    "sample_coefficients",
    "sample_ensemble",
    "particle_rng",
    "quadrature_inner",
    "high_mode_energy_fraction",
    "save_field",
    "load_field",
]


def particle_rng(seed, *key):
    """Independent generator for the stream keyed by ``(seed, *key)``."""
    return np.random.default_rng([int(seed), *(int(k) for k in key)])


def cell_centres(N):
    return (np.arange(N) + 0.5) / N


def quadrature_inner(f, g, N):
    """Midpoint-rule L2 inner product of two grid fields on [0, 1]^2."""
    return float(np.dot(np.ravel(f), np.ravel(g))) / N**2


@dataclass(frozen=True)
class KLBasis:
    """Leading M eigenpairs of the Neumann Matern-type operator on an N x N grid.

    ``modes[k]`` is the grid-sampled eigenfunction for ``eigenvalues[k]``;
    ``wavenumbers[k]`` holds the integer pair (k1, k2) of
    ``cos(k1 pi x) cos(k2 pi y)``.
    """

    N: int
    tau: float
    alpha: float
    eigenvalues: np.ndarray
    modes: np.ndarray
    wavenumbers: np.ndarray
    amplitude: float = 1.0

    @property
    def M(self):
        return len(self.eigenvalues)

    def field(self, coefficients):
        """Grid field(s) ``sum_k c_k phi_k`` for coefficients of shape (M,) or (J, M)."""
        return np.asarray(coefficients, dtype=float) @ self.modes

    def project(self, fields):
        """Coefficients of the orthogonal projection onto the retained modes."""
        return np.asarray(fields, dtype=float) @ self.modes.T / self.N**2

    def variance(self):
        """Pointwise marginal variance ``sum_k lambda_k phi_k(x)^2``."""
        return self.eigenvalues @ self.modes**2


def build_kl_basis(N, tau, alpha, M=None, amplitude=1.0):
    """Build the truncated KL basis.

    Parameters
    ----------
    N : int
        Grid points per side (mesh width 1/N), N >= 4.
    tau : float
        Inverse length scale.
    alpha : float
        Regularity exponent; must exceed 1 for a trace-class covariance in 2D.
    M : int, optional
        Retained modes, default N.
    amplitude : float
        Overall variance multiplier on every eigenvalue.
    """
    N = int(N)
    M = N if M is None else int(M)
    if N < 4:
        raise ValueError(f"grid side N must be >= 4, got {N}")
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if alpha <= 1:
        raise ValueError(f"alpha must exceed 1 for a trace-class covariance, got {alpha}")
    if amplitude <= 0:
        raise ValueError(f"amplitude must be positive, got {amplitude}")
    if not 1 <= M <= N * N:
        raise ValueError(f"mode count M must lie in [1, N^2 = {N * N}], got {M}")

    k1, k2 = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    k1, k2 = k1.ravel(), k2.ravel()
    ksq = k1**2 + k2**2
    # stable order: by |k|^2 (equivalently decreasing eigenvalue), then k1, then k2
    order = np.lexsort((k2, k1, ksq))[:M]
    k1, k2, ksq = k1[order], k2[order], ksq[order]
    eigenvalues = amplitude * (tau**2 + np.pi**2 * ksq) ** (-float(alpha))

    x = cell_centres(N)
    cx = np.cos(np.pi * np.outer(k1, x))  # (M, N) along x
    cy = np.cos(np.pi * np.outer(k2, x))  # (M, N) along y
    modes = (cy[:, :, None] * cx[:, None, :]).reshape(M, N * N)
    norms = np.sqrt(np.mean(modes**2, axis=1))
    modes /= norms[:, None]
    return KLBasis(N, float(tau), float(alpha), eigenvalues, modes,
                   np.stack([k1, k2], axis=1), float(amplitude))


@dataclass(frozen=True)
class GaussianMeasure:
    """Gaussian field ``N(mean, C)`` with C given through its KL basis."""

    basis: KLBasis
    mean: np.ndarray = field(default=None)

    def __post_init__(self):
        n = self.basis.N**2
        mean = np.zeros(n) if self.mean is None else np.asarray(self.mean, float).ravel()
        if mean.shape != (n,):
            raise ValueError(f"mean must have {n} grid values, got {mean.size}")
        object.__setattr__(self, "mean", mean)

    @property
    def coefficient_cov(self):
        """Covariance of the orthonormal-mode coefficients, diag(lambda_k)."""
        return np.diag(self.basis.eigenvalues)


def _draw_xi(basis, rng):
    return rng.standard_normal(basis.M)


def sample_coefficients(measure, J, seed):
    """J coefficient vectors ``sqrt(lambda_k) xi_k``, one stream per particle.

    The field of particle j is ``measure.mean + basis.field(coeffs[j])``.
    """
    if J < 2:
        raise ValueError(f"ensemble size must be >= 2, got {J}")
    sl = np.sqrt(measure.basis.eigenvalues)
    xi = np.stack([_draw_xi(measure.basis, particle_rng(seed, j)) for j in range(J)])
    return Ensemble(xi * sl)


def sample_field(measure, rng, xi=None):
    """One draw ``mean + sum_k sqrt(lambda_k) phi_k xi_k``.

    ``xi`` overrides the standard-normal coefficients drawn from ``rng``.
    """
    basis = measure.basis
    if xi is None:
        xi = _draw_xi(basis, rng)
    xi = np.asarray(xi, dtype=float)
    return measure.mean + (np.sqrt(basis.eigenvalues) * xi) @ basis.modes


def sample_ensemble(measure, J, seed):
    """J independent fields; particle j uses the stream keyed by (seed, j)."""
    if J < 2:
        raise ValueError(f"ensemble size must be >= 2, got {J}")
    return Ensemble(np.stack([sample_field(measure, particle_rng(seed, j)) for j in range(J)]))


def high_mode_energy_fraction(coefficients):
    """Share of squared coefficient mass in the upper half of the mode index range."""
    c = np.asarray(coefficients, dtype=float)
    total = np.sum(c**2, axis=-1)
    upper = np.sum(c[..., c.shape[-1] // 2:] ** 2, axis=-1)
    return upper / np.where(total > 0, total, 1.0)


def save_field(path, values, N, **meta):
    """Write a grid field as a row-major CSV grid plus a ``.json`` sidecar."""
    path = Path(path)
    grid = np.asarray(values, dtype=float).reshape(N, N)
    np.savetxt(path, grid, delimiter=",", fmt="%.17g")
    sidecar = {"N": int(N), **meta}
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def load_field(path):
    """Inverse of :func:`save_field`; returns ``(flat values, metadata)``."""
    path = Path(path)
    grid = np.loadtxt(path, delimiter=",", ndmin=2)
    meta_path = path.with_suffix(".json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return grid.ravel(), meta
