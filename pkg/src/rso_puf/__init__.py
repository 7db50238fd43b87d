"""Arbiter PUF simulation, random set-based obfuscation, modeling attacks,
and authentication statistics."""
from .backend import BACKEND
from .core import (
    PufInstance,
    calibrate_noise,
    delta,
    eval_response_word,
    evaluate,
    feature_transform,
    instance_from_text,
    instance_to_text,
    measured_flip_rate,
    random_challenges,
    sample_instance,
)
from .errors import (
    BankExhaustedError,
    CalibrationError,
    ContractViolationError,
    ProtocolError,
    StabilityError,
    TrainingDivergedError,
)

__version__ = "0.1.0"
