"""Exception hierarchy shared across the package.

The CLI maps these onto distinct process exit codes, so new error types
should subclass one of the groups below.
"""


class ContractViolationError(ValueError):
    """An argument violated a documented precondition (shape, range, state)."""


class CalibrationError(RuntimeError):
    """Noise calibration could not reach the requested flip rate."""


class BankExhaustedError(RuntimeError):
    """No unused challenge-bank group remains; the device is retired."""


class StabilityError(RuntimeError):
    """The candidate challenge stream ran out before a stable group filled."""


class TrainingDivergedError(RuntimeError):
    """An attack optimizer produced a non-finite loss."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []


class ProtocolError(RuntimeError):
    """Authentication state machine misuse (unknown id, no open session...)."""
