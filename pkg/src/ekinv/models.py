"""Forward maps: linear, sinusoidal regression and 2D Darcy flow with point observations."""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .ensemble import as_particles

__all__ = [
    "ForwardModel",
    "LinearModel",
    "SinusoidModel",
    "DarcyProblem",
    "DarcyModel",
    "DarcySolveError",
    "InverseProblem",
    "linear_apply",
    "sinusoid_apply",
    "darcy_operator",
    "darcy_solve",
    "default_observation_points",
    "observe",
    "synthesize_data",
]


class ForwardModel:
    """A deterministic map from R^d to R^K.

    Subclasses implement :meth:`apply`; :meth:`apply_ensemble` maps every
    particle and may be overridden with a vectorized version.
    """

    input_dim = None
    output_dim = None

    def apply(self, u):
        raise NotImplementedError

    def __call__(self, u):
        return self.apply(u)

    def apply_ensemble(self, ens):
        U = as_particles(ens)
        return np.stack([self.apply(u) for u in U])


def _check_vector(u, n, name="u"):
    u = np.asarray(u, dtype=float)
    if u.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {u.shape}")
    return u


def linear_apply(A, u):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return A @ _check_vector(u, A.shape[1])


def sinusoid_apply(A, B, eps, theta):
    """``A theta + eps * sin(B theta)`` with the sine taken elementwise."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape != B.shape:
        raise ValueError(f"A and B must share a shape, got {A.shape} and {B.shape}")
    theta = _check_vector(theta, A.shape[1], "theta")
    return A @ theta + eps * np.sin(B @ theta)


class LinearModel(ForwardModel):
    def __init__(self, A):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.output_dim, self.input_dim = self.A.shape

    def apply(self, u):
        return linear_apply(self.A, u)

    def apply_ensemble(self, ens):
        U = as_particles(ens)
        if U.shape[1] != self.input_dim:
            raise ValueError(f"particles have dim {U.shape[1]}, model expects {self.input_dim}")
        return U @ self.A.T


class SinusoidModel(ForwardModel):
    def __init__(self, A, B, eps):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        if self.A.shape != self.B.shape:
            raise ValueError(f"A and B must share a shape, got {self.A.shape} and {self.B.shape}")
        self.eps = float(eps)
        self.output_dim, self.input_dim = self.A.shape

    def apply(self, theta):
        return sinusoid_apply(self.A, self.B, self.eps, theta)

    def apply_ensemble(self, ens):
        U = as_particles(ens)
        if U.shape[1] != self.input_dim:
            raise ValueError(f"particles have dim {U.shape[1]}, model expects {self.input_dim}")
        return U @ self.A.T + self.eps * np.sin(U @ self.B.T)


# -- Darcy flow --------------------------------------------------------------

class DarcySolveError(RuntimeError):
    pass


def default_observation_points(N, per_side=8):
    """Flat indices of a ``per_side x per_side`` equispaced lattice of cells.

    The outer lattice rows/columns are the boundary-adjacent cells, so the
    layout covers both the interior and the edge of the domain.
    """
    if per_side > N:
        raise ValueError(f"cannot place {per_side} points per side on an {N}-cell grid")
    idx = np.round(np.linspace(0, N - 1, per_side)).astype(int)
    iy, ix = np.meshgrid(idx, idx, indexing="ij")
    return (iy * N + ix).ravel()


@dataclass(frozen=True)
class DarcyProblem:
    """Cell-centred discretization of -div(kappa grad p) = f on [0, 1]^2, p = 0 on the boundary.

    Attributes
    ----------
    N : int
        Cells per side; mesh width h = 1/N.
    source : (N*N,) array
        Source term at cell centres (row-major); defaults to f = 1.
    observation_points : (K,) int array
        Flat cell indices observed; defaults to the 8 x 8 lattice.
    """

    N: int
    source: np.ndarray = field(default=None)
    observation_points: np.ndarray = field(default=None)

    def __post_init__(self):
        N = int(self.N)
        if N < 8:
            raise ValueError(f"Darcy grid needs N >= 8, got {N}")
        src = self.source
        if src is None:
            src = np.ones(N * N)
        elif np.ndim(src) == 0:
            src = np.full(N * N, float(src))
        src = np.asarray(src, dtype=float).ravel()
        if src.shape != (N * N,):
            raise ValueError(f"source must have {N * N} values, got {src.size}")
        pts = default_observation_points(N) if self.observation_points is None else self.observation_points
        pts = np.asarray(pts, dtype=int).ravel()
        if pts.size and (pts.min() < 0 or pts.max() >= N * N):
            raise ValueError("observation points must lie on the grid")
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "source", src)
        object.__setattr__(self, "observation_points", pts)

    @property
    def K(self):
        return self.observation_points.size


def darcy_operator(N, log_kappa):
    """Assemble the five-point flux matrix for ``kappa = exp(log_kappa)``.

    Interior faces use the harmonic mean of the two neighbouring cell values;
    boundary faces sit half a cell from the centre. The matrix is a sum of
    positively weighted rank-one terms ``T (e_i - e_j)(e_i - e_j)^T`` plus
    positive boundary diagonal terms, hence SPD whenever every weight is
    positive and finite; that condition is checked here.
    """
    lk = np.asarray(log_kappa, dtype=float).reshape(N, N)
    if not np.all(np.isfinite(lk)):
        raise DarcySolveError("log-permeability has non-finite entries")
    h2 = 1.0 / N**2
    # overflow is caught by the weight check below
    with np.errstate(over="ignore", invalid="ignore"):
        kappa = np.exp(lk)
        tx = 2.0 * kappa[:, 1:] * kappa[:, :-1] / (kappa[:, 1:] + kappa[:, :-1]) / h2
        ty = 2.0 * kappa[1:, :] * kappa[:-1, :] / (kappa[1:, :] + kappa[:-1, :]) / h2
        tb = 2.0 * kappa / h2
    weights_ok = all(np.all(np.isfinite(t)) and np.all(t > 0) for t in (tx, ty, tb))
    if not weights_ok:
        raise DarcySolveError("non-positive or non-finite face transmissibility; operator not SPD")

    idx = np.arange(N * N).reshape(N, N)
    diag = np.zeros((N, N))
    diag[:, 1:] += tx
    diag[:, :-1] += tx
    diag[1:, :] += ty
    diag[:-1, :] += ty
    diag[:, 0] += tb[:, 0]
    diag[:, -1] += tb[:, -1]
    diag[0, :] += tb[0, :]
    diag[-1, :] += tb[-1, :]

    rows = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    cols = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    vals = -np.concatenate([tx.ravel(), ty.ravel()])
    A = sp.coo_matrix(
        (np.concatenate([diag.ravel(), vals, vals]),
         (np.concatenate([idx.ravel(), rows, cols]), np.concatenate([idx.ravel(), cols, rows]))),
        shape=(N * N, N * N),
    )
    return A.tocsc()


def darcy_solve(problem, log_kappa):
    """Pressure at cell centres (flat, row-major) for ``kappa = exp(log_kappa)``."""
    A = darcy_operator(problem.N, log_kappa)
    p = spla.spsolve(A, problem.source)
    if not np.all(np.isfinite(p)):
        raise DarcySolveError("sparse solve returned non-finite pressure")
    return p


def observe(p, points):
    p = np.ravel(p)
    points = np.asarray(points, dtype=int)
    if points.size and (points.min() < 0 or points.max() >= p.size):
        raise IndexError(f"observation index out of range for a field of size {p.size}")
    return p[points]


class DarcyModel(ForwardModel):
    """KL coefficients -> log-permeability field -> pressure -> point observations.

    ``u`` holds the coefficients of ``log_kappa - mean`` in the orthonormal KL
    modes of ``basis``, so Euclidean distances in u are L2 distances of fields.
    """

    def __init__(self, problem, basis, mean=None):
        if basis.N != problem.N:
            raise ValueError(f"basis grid N={basis.N} differs from Darcy grid N={problem.N}")
        self.problem = problem
        self.basis = basis
        self.mean = np.zeros(problem.N**2) if mean is None else np.asarray(mean, float).ravel()
        self.input_dim = basis.M
        self.output_dim = problem.K

    def log_kappa(self, u):
        return self.mean + self.basis.field(_check_vector(u, self.input_dim))

    def pressure(self, u):
        return darcy_solve(self.problem, self.log_kappa(u))

    def apply(self, u):
        return observe(self.pressure(u), self.problem.observation_points)


# -- inverse problem and data ------------------------------------------------

@dataclass
class InverseProblem:
    """Data ``y = G(u) + eta`` with ``eta ~ N(0, gamma)``.

    ``noise`` is the realized noise vector when the data were synthesized,
    ``prior_mean``/``prior_cov`` the optional Gaussian prior on u.
    """

    model: ForwardModel
    y: np.ndarray
    gamma: np.ndarray
    prior_mean: np.ndarray = None
    prior_cov: np.ndarray = None
    noise: np.ndarray = None

    def __post_init__(self):
        self.y = np.atleast_1d(np.asarray(self.y, dtype=float))
        self.gamma = np.atleast_2d(np.asarray(self.gamma, dtype=float))
        if self.gamma.shape != (self.y.size, self.y.size):
            raise ValueError(f"gamma must be {self.y.size}x{self.y.size}, got {self.gamma.shape}")

    @property
    def noise_level(self):
        """Euclidean norm of the realized noise, ``||eta||``."""
        return None if self.noise is None else float(np.linalg.norm(self.noise))

    @property
    def whitened_noise_level(self):
        """``||gamma^{-1/2} eta||``, the noise level in data-misfit units."""
        if self.noise is None:
            return None
        L = np.linalg.cholesky(self.gamma)
        return float(np.linalg.norm(np.linalg.solve(L, self.noise)))

    def misfit(self, u):
        """Whitened squared data misfit ``||gamma^{-1/2}(y - G(u))||^2``."""
        r = self.y - self.model.apply(u)
        return float(r @ np.linalg.solve(self.gamma, r))


def synthesize_data(model, u_true, gamma, seed, exact=False):
    """Draw ``y = G(u_true) + eta`` with ``eta ~ N(0, gamma)`` from the seeded stream.

    Returns ``(y, eta)``; with ``exact=True`` the noise is zero.
    """
    g = np.asarray(model.apply(u_true), dtype=float)
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    if exact:
        eta = np.zeros_like(g)
    else:
        L = np.linalg.cholesky(gamma)
        eta = L @ np.random.default_rng(seed).standard_normal(g.size)
    return g + eta, eta
