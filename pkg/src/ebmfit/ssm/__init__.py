"""Generic linear Gaussian state space engine."""

from ._backend import backend_name, compiled_available
from .filter import (
    kalman_filter,
    kalman_smoother,
    loglik,
    loglik_final_state,
    standardized_innovations,
)
from .simulate import psd_sqrt, simulate_ssm
from .types import (
    CANONICAL_KIND_ORDER,
    DimensionError,
    FilterNumericalError,
    FilterResult,
    ObservationPanel,
    SeriesMeta,
    SmootherResult,
    SystemMatrices,
)

__all__ = [
    "CANONICAL_KIND_ORDER",
    "DimensionError",
    "FilterNumericalError",
    "FilterResult",
    "ObservationPanel",
    "SeriesMeta",
    "SmootherResult",
    "SystemMatrices",
    "backend_name",
    "compiled_available",
    "kalman_filter",
    "kalman_smoother",
    "loglik",
    "loglik_final_state",
    "psd_sqrt",
    "simulate_ssm",
    "standardized_innovations",
]
