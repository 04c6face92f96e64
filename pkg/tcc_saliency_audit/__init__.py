"""
Saliency-augmented temporal colour constancy models and the WP1 / WP2
faithfulness audits run against them.
"""

__version__ = "0.3.0"

from .errors import (
    AuditError,
    ConfigurationError,
    InputError,
    NumericError,
    OrchestrationError,
    PersistenceError,
    RunLookupError,
    ShapeError,
    ValidationError,
)
from .model_zoo import ModelSpec, SaliencyModel, build_model, predict
from .interventions import WeightSource, capture_masks, freeze_uniform, transplant
from .metrics import angular_error, saliency_divergence, summarize_errors
from .verdicts import Outcome, TestKind, VerdictRecord, summary_report, wp1_verdict, wp2_verdict

__all__ = [
    "__version__",
    "AuditError",
    "ConfigurationError",
    "InputError",
    "NumericError",
    "OrchestrationError",
    "PersistenceError",
    "RunLookupError",
    "ShapeError",
    "ValidationError",
    "ModelSpec",
    "SaliencyModel",
    "build_model",
    "predict",
    "WeightSource",
    "capture_masks",
    "freeze_uniform",
    "transplant",
    "angular_error",
    "saliency_divergence",
    "summarize_errors",
    "Outcome",
    "TestKind",
    "VerdictRecord",
    "summary_report",
    "wp1_verdict",
    "wp2_verdict",
]
