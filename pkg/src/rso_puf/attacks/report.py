"""Held-out evaluation of trained attack models and the report row format."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractViolationError

__all__ = ["AttackReport", "evaluate", "REPORT_COLUMNS"]

REPORT_COLUMNS = ["method", "n", "m", "train_size", "accuracy", "seconds"]


@dataclass
class AttackReport:
    method: str
    n: int
    train_size: int
    test_size: int
    accuracy: float
    seconds: float
    m: int | None = None
    hyperparameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.accuracy <= 1:
            raise ContractViolationError(f"accuracy {self.accuracy} outside [0,1]")

    def csv_row(self) -> str:
        m = self.m if self.m is not None else ""
        return (
            f"{self.method},{self.n},{m},{self.train_size},"
            f"{self.accuracy:.6f},{self.seconds:.3f}"
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "method": self.method,
                "n": self.n,
                "m": self.m,
                "train_size": self.train_size,
                "test_size": self.test_size,
                "accuracy": self.accuracy,
                "seconds": self.seconds,
                "hyperparameters": self.hyperparameters,
            },
            sort_keys=True,
        )


def evaluate(
    model,
    challenges,
    responses,
    method: str = "unknown",
    train_size: int = 0,
    seconds: float = 0.0,
    m: int | None = None,
    hyperparameters: dict | None = None,
) -> AttackReport:
    """Fraction of correct predictions on a disjoint test set."""
    responses = np.asarray(responses, dtype=np.uint8)
    if responses.size == 0:
        raise ContractViolationError("empty test set")
    predictions = model.predict(challenges)
    accuracy = float(np.mean(predictions == responses))
    return AttackReport(
        method=method,
        n=np.asarray(challenges).shape[1],
        train_size=train_size,
        test_size=int(responses.size),
        accuracy=accuracy,
        seconds=seconds,
        m=m,
        hyperparameters=hyperparameters or {},
    )
