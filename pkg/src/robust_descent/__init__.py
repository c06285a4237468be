"""Robust gradient descent with a closed-form smoothed truncated mean estimator."""

__version__ = "0.1.0"

from .catoni import (  # noqa: E402
    SmoothingParams,
    correction,
    default_noise_precision,
    deviation_bound,
    folded_normal_mean,
    lipschitz_factor,
    scale_for,
    smoothed_mean,
    smoothed_psi_expectation,
    truncate,
)
from .rgd import RgdConfig, StepSchedule, Trajectory, VarianceBoundPolicy, estimate_risk_gradient, rgd_run  # noqa: E402

__all__ = [
    "SmoothingParams",
    "correction",
    "default_noise_precision",
    "deviation_bound",
    "folded_normal_mean",
    "lipschitz_factor",
    "scale_for",
    "smoothed_mean",
    "smoothed_psi_expectation",
    "truncate",
    "RgdConfig",
    "StepSchedule",
    "Trajectory",
    "VarianceBoundPolicy",
    "estimate_risk_gradient",
    "rgd_run",
]
