"""Finite risk measures for bounded losses whose observed tail looks infinite-mean."""

__version__ = "0.1.0"

from .dual import DualTransform, phi, phi_derivative, phi_inverse
from .errors import (
    BoundViolationError,
    ConvergenceError,
    DegenerateSampleError,
    DomainError,
    InsufficientDataError,
)
from .gpd import FitMethod, GpdFit, GpdParams, fit_mle, fit_moments
from .shadow import (
    RiskMeasures,
    ShadowModel,
    expected_shortfall,
    mean_excess,
    shadow_cdf,
    shadow_mean,
    shadow_pdf,
    shadow_quantile,
)
from .pipeline import TailSample, fit_shadow_model

__all__ = [
    "BoundViolationError",
    "ConvergenceError",
    "DegenerateSampleError",
    "DomainError",
    "DualTransform",
    "FitMethod",
    "GpdFit",
    "GpdParams",
    "InsufficientDataError",
    "RiskMeasures",
    "ShadowModel",
    "TailSample",
    "expected_shortfall",
    "fit_mle",
    "fit_moments",
    "fit_shadow_model",
    "mean_excess",
    "phi",
    "phi_derivative",
    "phi_inverse",
    "shadow_cdf",
    "shadow_mean",
    "shadow_pdf",
    "shadow_quantile",
]
