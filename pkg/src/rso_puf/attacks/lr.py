"""Logistic-regression attack on the linear delay model.

The model class is the PUF's own parameterization: a weight vector over the
parity features whose sign predicts the response. Training minimizes the
negative log-likelihood sum(-ln sigmoid(t * w.phi)) over sign labels
t in {-1, +1} with full-batch resilient propagation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit

from .. import backend
from ..errors import ContractViolationError, TrainingDivergedError
from .dataset import CrpDataset
from .rprop import Rprop

__all__ = ["LrModel", "lr_loss", "lr_gradient", "train_lr"]

MAX_EPOCHS = 500
PATIENCE = 20


def lr_loss(w: np.ndarray, phi: np.ndarray, t: np.ndarray) -> float:
    """sum(-ln sigmoid(t * (phi @ w))), evaluated stably in log space."""
    return float(-log_expit(t * (phi @ w)).sum())


def lr_gradient(w: np.ndarray, phi: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Exact gradient of lr_loss: sum over records of t*(sigmoid(t f) - 1)*phi."""
    f = phi @ w
    return phi.T @ (t * (expit(t * f) - 1.0))


@dataclass
class LrModel:
    """Trained weight estimate plus the training trace and optimizer state."""

    w: np.ndarray
    n: int
    loss_trace: list[float] = field(default_factory=list)
    val_accuracy_trace: list[float] = field(default_factory=list)
    epochs_run: int = 0
    steps: np.ndarray | None = None

    def decision_values(self, challenges) -> np.ndarray:
        return backend.features(np.asarray(challenges, dtype=np.uint8)) @ self.w

    def predict(self, challenges) -> np.ndarray:
        return (self.decision_values(challenges) >= 0).astype(np.uint8)


def _signs(bits: np.ndarray) -> np.ndarray:
    return 2.0 * bits - 1.0


def train_lr(
    ds: CrpDataset,
    max_epochs: int = MAX_EPOCHS,
    patience: int = PATIENCE,
    rprop_kwargs: dict | None = None,
    rng=None,
) -> LrModel:
    """Fit by full-batch RProp with early stopping on validation accuracy.

    The returned weights are the best-validation snapshot. Raises
    TrainingDivergedError (with the loss trace attached) if the loss goes
    non-finite.
    """
    ch_tr, y_tr = ds.train
    if len(y_tr) == 0:
        raise ContractViolationError("empty training split")
    ch_va, y_va = ds.validation
    if len(y_va) == 0:                      # tiny dataset: validate on train
        ch_va, y_va = ch_tr, y_tr
    phi_tr = backend.features(ch_tr)
    phi_va = backend.features(ch_va)
    t_tr = _signs(y_tr)
    t_va = _signs(y_va)

    d = ds.n + 1
    w = np.zeros(d)
    opt = Rprop([(d,)], **(rprop_kwargs or {}))
    best_w, best_acc, stale = w.copy(), -1.0, 0
    losses: list[float] = []
    val_accs: list[float] = []
    epoch = 0
    for epoch in range(1, max_epochs + 1):
        loss = lr_loss(w, phi_tr, t_tr)
        if not np.isfinite(loss):
            raise TrainingDivergedError(
                f"non-finite loss at epoch {epoch}", trace=losses
            )
        losses.append(loss)
        grad = lr_gradient(w, phi_tr, t_tr)
        opt.update([w], [grad])
        acc = float(np.mean(np.sign(phi_va @ w) * t_va >= 0))
        val_accs.append(acc)
        if acc > best_acc:
            best_acc, best_w, stale = acc, w.copy(), 0
        else:
            stale += 1
            if stale >= patience:
                break
    return LrModel(
        w=best_w,
        n=ds.n,
        loss_trace=losses,
        val_accuracy_trace=val_accs,
        epochs_run=epoch,
        steps=opt.steps[0],
    )
