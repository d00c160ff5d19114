"""Ensemble Kalman methods for inverse problems.

Discrete EKI and its Tikhonov-regularized variants, the continuous-time
particle flow, the ensemble Kalman sampler (plain and localized), a
square-root mean/covariance iteration with inflation and the stochastic
EnKF, together with Gaussian random field priors, a Darcy-flow forward model
and a reproducible experiment harness.
"""

from .eki import EkiConfig, eki_step, run_eki, tikhonov_oracle, variational_cost
from .eks import (EksConfig, eks_drift, eks_step, gaussian_posterior, kl_gaussians,
                  localization_weights, localized_eks_drift, run_sampler)
from .enkf import StateSpaceModel, analysis, predict, run_twin
from .ensemble import (Ensemble, GainSolveError, MomentSet, compute_moments, ensemble_spread,
                       gain_apply)
from .flows import FlowConfig, eki_drift, integrate_flow, potential_grad, potential_phi
from .harness import ExperimentConfig, compare, run_experiment, sweep, validate_config
from .models import (DarcyModel, DarcyProblem, InverseProblem, LinearModel, SinusoidModel,
                     darcy_solve, synthesize_data)
from .priors import GaussianMeasure, build_kl_basis, sample_coefficients, sample_field
from .records import RunRecord
from .regularization import augment, discrepancy_stop, run_regularized, run_teki, teki_step
from .sqrt_filter import MeanCovState, SqrtConfig, run_sqrt, sqrt_step

__version__ = "0.1.0"

__all__ = [
    "analysis",
    "augment",
    "build_kl_basis",
    "compare",
    "compute_moments",
    "darcy_solve",
    "DarcyModel",
    "DarcyProblem",
    "discrepancy_stop",
    "eki_drift",
    "eki_step",
    "EkiConfig",
    "eks_drift",
    "eks_step",
    "EksConfig",
    "Ensemble",
    "ensemble_spread",
    "ExperimentConfig",
    "FlowConfig",
    "gain_apply",
    "GainSolveError",
    "gaussian_posterior",
    "GaussianMeasure",
    "integrate_flow",
    "InverseProblem",
    "kl_gaussians",
    "LinearModel",
    "localization_weights",
    "localized_eks_drift",
    "MeanCovState",
    "MomentSet",
    "potential_grad",
    "potential_phi",
    "predict",
    "run_eki",
    "run_experiment",
    "run_regularized",
    "run_sampler",
    "run_sqrt",
    "run_teki",
    "run_twin",
    "RunRecord",
    "sample_coefficients",
    "sample_field",
    "SinusoidModel",
    "sqrt_step",
    "SqrtConfig",
    "StateSpaceModel",
    "sweep",
    "synthesize_data",
    "teki_step",
    "tikhonov_oracle",
    "validate_config",
    "variational_cost",
]
