"""Closed-form surprise index for Gaussian models of dynamic systems."""
__version__ = "0.1.0"

from .core import (
    GaussianJoint,
    SiEntry,
    SiTrace,
    cumulative_si,
    mahalanobis_epsilon,
    marginalize,
    surprise_index,
)
from .special import chi2_cdf, chi2_sf
from .oracle import GridSpec, McSpec, grid_si, mc_si
from .lgm import LinearSystem, TransitionCache, build_joint, joint_cov, joint_mean, stm
from .nonlinear import (
    NonlinearModel,
    SigmaSet,
    apply_map,
    build_joint_nonlinear,
    cross_cov,
    make_sigma_points,
    propagate,
)
from .harness import ControllerSpec, McSummary, Scenario, controller, run_monte_carlo, simulate_run
from .estimator import SurpriseIndex
from .validation import DimensionError, ModelValidationError, NotPositiveDefiniteError

__all__ = [
    "GaussianJoint", "SiEntry", "SiTrace", "cumulative_si", "mahalanobis_epsilon", "marginalize",
    "surprise_index", "chi2_cdf", "chi2_sf", "GridSpec", "McSpec", "grid_si", "mc_si",
    "LinearSystem", "TransitionCache", "build_joint", "joint_cov", "joint_mean", "stm",
    "NonlinearModel", "SigmaSet", "apply_map", "build_joint_nonlinear", "cross_cov", "make_sigma_points",
    "propagate", "ControllerSpec", "McSummary", "Scenario", "controller", "run_monte_carlo",
    "simulate_run", "SurpriseIndex", "DimensionError", "ModelValidationError",
    "NotPositiveDefiniteError",
]
