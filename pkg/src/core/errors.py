"""
Exception hierarchy shared by every ISIB module

Each error carries the process exit code the CLI reports for it.
"""

from typing import Optional

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3


class IsibError(Exception):
    """Base class for all toolkit errors"""

    exit_code: int = EXIT_USAGE


class ConfigError(IsibError):
    """Configuration file missing, malformed or failing validation"""


class InvalidInputError(IsibError, ValueError):
    """Argument outside the documented domain of an operation"""


class ContractViolation(InvalidInputError):
    """Shapes handed to a layer do not conform"""


class InfeasibleTargetError(InvalidInputError):
    """CTC target cannot be aligned within the available frames"""

    def __init__(self, target_length: int, required: int, frames: int):
        self.target_length = target_length
        self.required = required
        self.frames = frames
        super().__init__(
            f"CTC target of length {target_length} needs at least {required} "
            f"frames, got {frames}"
        )


class StateError(IsibError):
    """Operation called on a model or checkpoint in the wrong state"""


class GenerationError(IsibError):
    """Synthetic data generation gave up after its bounded retries"""


class DataFormatError(IsibError):
    """Dataset or checkpoint file does not match its declared layout"""


class NumericError(IsibError, ArithmeticError):
    """Non-finite values appeared in a computation"""

    exit_code = EXIT_NUMERIC

    def __init__(self, message: str, step: Optional[int] = None):
        self.step = step
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
