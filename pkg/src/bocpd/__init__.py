"""Exact Bayesian online changepoint detection over run lengths."""

from .engine import (
    Detector,
    DetectorConfig,
    PredictiveMixture,
    RunLengthState,
    StepOutcome,
    init,
    map_changepoints,
    predict,
    step,
    truncate,
)
from .errors import ConfigError, DataError, NumericalError
from .hazard import (
    ConstantHazard,
    GapHazard,
    GeometricGap,
    TabulatedGap,
    hazard_constant,
    hazard_from_gap,
    survival,
)
from .models import ConjugateModel, GaussianMean, GaussianScale, HyperparameterBank, PoissonRate

__all__ = [
    "ConfigError",
    "ConjugateModel",
    "ConstantHazard",
    "DataError",
    "Detector",
    "DetectorConfig",
    "GapHazard",
    "GaussianMean",
    "GaussianScale",
    "GeometricGap",
    "HyperparameterBank",
    "NumericalError",
    "PoissonRate",
    "PredictiveMixture",
    "RunLengthState",
    "StepOutcome",
    "TabulatedGap",
    "hazard_constant",
    "hazard_from_gap",
    "init",
    "map_changepoints",
    "predict",
    "step",
    "survival",
    "truncate",
]
