"""Small sigmoid feed-forward network attack (hidden layers 35/25/25).

Inputs are the parity features (the representation under which the target
is nearly linear); output is a single sigmoid unit trained on mean
cross-entropy with full-batch resilient propagation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import backend
from ..errors import ContractViolationError, TrainingDivergedError
from .dataset import CrpDataset
from .rprop import Rprop

__all__ = ["MlpModel", "train_mlp"]

HIDDEN = (35, 25, 25)
MAX_EPOCHS = 500
PATIENCE = 20


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -500.0, 500.0)))


@dataclass
class MlpModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    n: int
    loss_trace: list[float] = field(default_factory=list)
    val_accuracy_trace: list[float] = field(default_factory=list)
    epochs_run: int = 0

    @classmethod
    def init(cls, n: int, rng: np.random.Generator) -> "MlpModel":
        sizes = (n + 1, *HIDDEN, 1)
        weights = [
            rng.normal(0.0, np.sqrt(1.0 / sizes[k]), size=(sizes[k], sizes[k + 1]))
            for k in range(len(sizes) - 1)
        ]
        biases = [np.zeros(sizes[k + 1]) for k in range(len(sizes) - 1)]
        return cls(weights=weights, biases=biases, n=n)

    def _forward(self, x: np.ndarray) -> list[np.ndarray]:
        activations = [x]
        for w, b in zip(self.weights, self.biases):
            activations.append(_sigmoid(activations[-1] @ w + b))
        return activations

    def probabilities(self, phi: np.ndarray) -> np.ndarray:
        return self._forward(phi)[-1][:, 0]

    def predict(self, challenges) -> np.ndarray:
        phi = backend.features(np.asarray(challenges, dtype=np.uint8))
        return (self.probabilities(phi) >= 0.5).astype(np.uint8)

    def loss_and_grads(self, phi: np.ndarray, y: np.ndarray):
        """Mean cross-entropy and its exact gradients (for training and
        finite-difference verification)."""
        acts = self._forward(phi)
        out = np.clip(acts[-1][:, 0], 1e-12, 1.0 - 1e-12)
        loss = float(-np.mean(y * np.log(out) + (1.0 - y) * np.log(1.0 - out)))
        delta = ((acts[-1][:, 0] - y) / len(y))[:, None]
        grads_w, grads_b = [], []
        for k in range(len(self.weights) - 1, -1, -1):
            grads_w.insert(0, acts[k].T @ delta)
            grads_b.insert(0, delta.sum(axis=0))
            if k:
                delta = (delta @ self.weights[k].T) * acts[k] * (1.0 - acts[k])
        return loss, grads_w, grads_b


def train_mlp(
    ds: CrpDataset,
    max_epochs: int = MAX_EPOCHS,
    patience: int = PATIENCE,
    rng=None,
) -> MlpModel:
    """Fit with RProp and early stopping on validation accuracy."""
    from ..core import as_rng

    ch_tr, y_tr = ds.train
    if len(y_tr) == 0:
        raise ContractViolationError("empty training split")
    ch_va, y_va = ds.validation
    if len(y_va) == 0:
        ch_va, y_va = ch_tr, y_tr
    phi_tr = backend.features(ch_tr)
    phi_va = backend.features(ch_va)
    y_tr = y_tr.astype(np.float64)

    net = MlpModel.init(ds.n, as_rng(rng))
    params = net.weights + net.biases
    opt = Rprop([p.shape for p in params])
    best_params = [p.copy() for p in params]
    best_acc, stale = -1.0, 0
    epoch = 0
    for epoch in range(1, max_epochs + 1):
        loss, gw, gb = net.loss_and_grads(phi_tr, y_tr)
        if not np.isfinite(loss):
            raise TrainingDivergedError(
                f"non-finite loss at epoch {epoch}", trace=net.loss_trace
            )
        net.loss_trace.append(loss)
        opt.update(params, gw + gb)
        acc = float(np.mean((net.probabilities(phi_va) >= 0.5) == y_va))
        net.val_accuracy_trace.append(acc)
        if acc > best_acc:
            best_acc, stale = acc, 0
            best_params = [p.copy() for p in params]
        else:
            stale += 1
            if stale >= patience:
                break
    for p, bp in zip(params, best_params):
        p[...] = bp
    net.epochs_run = epoch
    return net
