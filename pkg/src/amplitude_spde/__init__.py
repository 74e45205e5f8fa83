"""Amplitude-equation reduction of cubic SPDEs with multiplicative noise."""
from .amplitude import (
    AmplitudePath, FastModeState, ReducedModel, SigmaCoefficients, assemble_approximation, fast_mode_K,
    fast_mode_Q, reduce_model, sigma_coefficients, solve_first_order, solve_second_order_case1,
    solve_second_order_case2,
)
from .errors import *  # noqa: F401,F403
from .experiment import ErrorReport, ExperimentConfig, emit_report, fit_convergence_order, read_report, run_comparison
from .model import AllenCahnParams, ModelSpec, allen_cahn_model, projected_coefficient, validate_assumptions
from .noise import NoisePath, rescale_to_slow, sample_path
from .spde import SpdeTrajectory, solve_spde, stopping_monitor
from .spectral import SpectralBasis, h_alpha_norm, project_c, project_s, semigroup_apply, tensor_inverse_weight

__version__ = "0.1.0"
