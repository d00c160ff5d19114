"""
Localization and a two-mode posterior
=====================================

With ``G(u) = u^2`` and ``y = 1`` the posterior has modes near -1 and +1.
The plain sampler uses one global covariance and spreads the ensemble as a
single broad cloud across the gap. The localized sampler weights each
particle's covariance by its neighbours, so two separate groups form.
"""

import numpy as np

from ekinv import EksConfig, InverseProblem, run_sampler
from ekinv.models import ForwardModel


class Square(ForwardModel):
    input_dim = output_dim = 1

    def apply(self, u):
        return np.asarray(u, float) ** 2

    def apply_ensemble(self, ens):
        return np.asarray(ens, float) ** 2


problem = InverseProblem(Square(), [1.0], [[0.09]], prior_cov=[[1.0]])
for variant, gl in (("eks", 1.0), ("localized-eks", 0.05)):
    trace = run_sampler(problem, EksConfig(variant=variant, gamma_loc=gl, dt=1e-3, T=5.0, J=100, seed=0))
    u = trace.final.particles[:, 0]
    # a crude histogram is enough to see where the particles went
    counts, edges = np.histogram(u, bins=8, range=(-2, 2))
    print(f"{variant:>14}: left {np.sum(u < 0):3d}  right {np.sum(u > 0):3d}")
    for c, lo in zip(counts, edges):
        print(f"    [{lo:+.1f}, {lo + 0.5:+.1f})  {'#' * (c // 2)}")
