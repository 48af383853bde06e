"""Sensitivity analysis for quantiles of hidden biases in matched observational studies."""

from .constraints import KOutOfRangeError, QuantileBound, VectorBound
from .core import (
    UNBOUNDED,
    EffectSpec,
    MatchedSet,
    MatchedStudy,
    StudyError,
    transform_for_null,
    validate_study,
)
from .inference import (
    ConfidenceCurve,
    CurveEntry,
    EngineConfig,
    EngineMismatchError,
    average_bias_limit,
    confidence_curve,
    count_exceeding_limit,
    lower_confidence_limit,
    quantile_grid,
    sensitivity_pvalue,
)
from .scores import DiffMeans, MStatConfig, ScoreMatrix, compute_scores

__version__ = "0.1.0"

__all__ = [
    "UNBOUNDED", "ConfidenceCurve", "CurveEntry", "DiffMeans", "EffectSpec", "EngineConfig",
    "EngineMismatchError", "KOutOfRangeError", "MStatConfig", "MatchedSet", "MatchedStudy",
    "QuantileBound", "ScoreMatrix", "StudyError", "VectorBound", "average_bias_limit",
    "compute_scores", "confidence_curve", "count_exceeding_limit", "lower_confidence_limit",
    "quantile_grid", "sensitivity_pvalue", "transform_for_null", "validate_study",
]
