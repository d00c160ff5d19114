"""Continuous-time EKI: the interacting-particle flow and its gradient-flow form.

The flow uses the 1/J prefactor of the particle system throughout. Against
the unbiased moments of :mod:`ekinv.ensemble` this is a factor (J - 1)/J:
``C_flow = (J - 1) / J * cov_uu``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .ensemble import Ensemble, as_particles, ensemble_spread
from .records import DIVERGENCE_BOUND, RunRecord, relative_error

__all__ = [
    "FlowConfig",
    "FlowDivergence",
    "Trajectory",
    "eki_drift",
    "integrate_flow",
    "potential_phi",
    "potential_grad",
    "gradient_flow_residual",
    "flow_covariance",
    "trajectory_record",
]


class FlowDivergence(FloatingPointError):
    pass


@dataclass(frozen=True)
class FlowConfig:
    dt: float = 1e-3
    T: float = 1.0
    noise: bool = False
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.T < 0:
            raise ValueError(f"final time must be non-negative, got {self.T}")

    @property
    def n_steps(self):
        # tolerate T/dt landing a hair below an integer
        return int(np.floor(self.T / self.dt + 1e-9))


@dataclass
class Trajectory:
    times: np.ndarray
    particles: np.ndarray  # (n_steps + 1, J, d)

    def __len__(self):
        return len(self.times)

    def __getitem__(self, i):
        return Ensemble(self.particles[i])

    @property
    def final(self):
        return self[-1]


def _whitener(gamma):
    """Lower Cholesky factor L of gamma; ``L^{-1}`` whitens residuals."""
    return la.cho_factor(np.atleast_2d(np.asarray(gamma, float)), lower=True)


def flow_covariance(ens):
    """Ensemble covariance with the 1/J divisor used by the flow."""
    U = as_particles(ens)
    dU = U - U.mean(axis=0)
    return dU.T @ dU / U.shape[0]


def _drift(U, G, y, factor):
    J = U.shape[0]
    dU = U - U.mean(axis=0)
    dG = G - G.mean(axis=0)
    R = np.asarray(y, float) - G
    # W[j, k] = <G_k - Gbar, y - G_j>_gamma
    W = la.cho_solve(factor, R.T).T @ dG.T
    return W @ dU / J


def eki_drift(ens, model, y, gamma):
    """Deterministic drift ``(1/J) sum_k <G_k - Gbar, y - G_j>_gamma (u_k - ubar)`` for every j."""
    U = as_particles(ens)
    return _drift(U, model.apply_ensemble(U), y, _whitener(gamma))


def integrate_flow(ens, model, y, gamma, cfg, rng=None):
    """Explicit Euler (noise off) or Euler-Maruyama (noise on) integration to time T.

    With noise, particle j also receives ``C^{ug} L^{-T} sqrt(dt) xi_j`` where
    ``gamma = L L^T``, a realization of ``C^{ug} gamma^{-1/2} dW_j``.
    Raises :class:`FlowDivergence` once a particle norm exceeds 1e12.
    """
    U = np.array(as_particles(ens))
    factor = _whitener(gamma)
    L = np.tril(factor[0])
    if cfg.noise and rng is None:
        rng = np.random.default_rng(cfg.seed)
    n = cfg.n_steps
    out = np.empty((n + 1,) + U.shape)
    out[0] = U
    J = U.shape[0]
    for i in range(n):
        G = model.apply_ensemble(U)
        step = cfg.dt * _drift(U, G, y, factor)
        if cfg.noise:
            dU = U - U.mean(axis=0)
            dG = G - G.mean(axis=0)
            c_ug = dU.T @ dG / J
            xi = rng.standard_normal(G.shape)
            white = la.solve_triangular(L, xi.T, lower=True, trans="T").T
            step = step + np.sqrt(cfg.dt) * white @ c_ug.T
        U = U + step
        if not np.all(np.isfinite(U)) or np.max(np.linalg.norm(U, axis=1)) > DIVERGENCE_BOUND:
            raise FlowDivergence(f"flow diverged at t = {(i + 1) * cfg.dt:.6g}")
        out[i + 1] = U
    return Trajectory(cfg.dt * np.arange(n + 1), out)


def potential_phi(u, A, y, gamma):
    """Least-squares potential ``0.5 |gamma^{-1/2} (y - A u)|^2``."""
    r = np.atleast_1d(y) - np.atleast_2d(A) @ np.atleast_1d(u)
    return 0.5 * float(r @ np.linalg.solve(np.atleast_2d(gamma), r))


def potential_grad(u, A, y, gamma):
    """``grad Phi(u) = -A^T gamma^{-1} (y - A u)``."""
    A = np.atleast_2d(A)
    r = np.atleast_1d(y) - A @ np.atleast_1d(u)
    return -A.T @ np.linalg.solve(np.atleast_2d(gamma), r)


def gradient_flow_residual(ens, A, y, gamma):
    """Largest mismatch between the EKI drift and ``-C(u) grad Phi(u_j)`` for linear G.

    Both sides use the flow's 1/J covariance, so for linear models the
    mismatch is rounding error only.
    """
    from .models import LinearModel

    U = as_particles(ens)
    A = np.atleast_2d(A)
    drift = eki_drift(U, LinearModel(A), y, gamma)
    C = flow_covariance(U)
    grads = np.stack([potential_grad(u, A, y, gamma) for u in U])
    return float(np.max(np.linalg.norm(drift + grads @ C.T, axis=1)))


def trajectory_record(traj, problem, truth=None, every=1):
    """RunRecord of a trajectory (rows keyed by time) for the shared CSV schema."""
    record = RunRecord(noise_level=problem.noise_level,
                       whitened_noise_level=problem.whitened_noise_level)
    for i in range(0, len(traj), every):
        e = traj[i]
        mean = e.mean
        record.append(step=i, time=float(traj.times[i]),
                      rel_error=None if truth is None else relative_error(truth, mean),
                      data_misfit=problem.misfit(mean), spread=ensemble_spread(e))
    record.reconstruction = traj.final.mean
    record.final_ensemble = traj.final
    return record
