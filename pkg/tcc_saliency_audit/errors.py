"""
Exception hierarchy for the saliency audit toolkit.

Validation errors (bad configuration, bad inputs, bad shapes) map to CLI exit
code 1; everything else that derives from AuditError maps to exit code 2.
"""

from typing import List, Optional


class AuditError(Exception):
    """Base class for every error raised by this package"""


class ValidationError(AuditError):
    """Caller supplied something invalid"""


class ConfigurationError(ValidationError):
    """Invalid model spec, campaign layout or config file"""


class InputError(ValidationError, ValueError):
    """Invalid data handed to an operation"""


class ShapeError(InputError):
    """Tensor shapes disagree with the module contract"""


class NumericError(AuditError, ArithmeticError):
    """Non-finite or degenerate activations"""

    def __init__(self, message: str, layer: Optional[str] = None):
        self.layer = layer
        if layer:
            message = f"{message} (layer: {layer})"
        super().__init__(message)


class PersistenceError(AuditError, OSError):
    """Reading or writing an artifact failed"""


class OrchestrationError(AuditError):
    """A campaign step cannot proceed (missing checkpoint, mismatched donor ...)"""


class RunLookupError(AuditError, KeyError):
    """Unknown run id in the results store"""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown run"


class SequenceLoadError(InputError):
    """One sequence directory failed validation"""

    def __init__(self, sequence_id: str, reason: str):
        self.sequence_id = sequence_id
        self.reason = reason
        super().__init__(f"{sequence_id}: {reason}")


def exit_code_for(error: BaseException) -> int:
    """Map an exception onto the CLI exit code contract"""
    if isinstance(error, ValidationError):
        return 1
    return 2


def describe_load_errors(errors: List[SequenceLoadError]) -> str:
    return "; ".join(str(e) for e in errors)
