"""Model-building attacks and their dataset tooling."""
from .cmaes import EsModel, train_cmaes
from .cnn_export import cnn_extend, cnn_transform, export_cnn_tensor
from .dataset import CrpDataset, harvest_raw, harvest_rso
from .lr import LrModel, lr_gradient, lr_loss, train_lr
from .mlp import MlpModel, train_mlp
from .report import REPORT_COLUMNS, AttackReport, evaluate

__all__ = [
    "CrpDataset",
    "harvest_raw",
    "harvest_rso",
    "LrModel",
    "lr_loss",
    "lr_gradient",
    "train_lr",
    "MlpModel",
    "train_mlp",
    "EsModel",
    "train_cmaes",
    "cnn_transform",
    "cnn_extend",
    "export_cnn_tensor",
    "AttackReport",
    "evaluate",
    "REPORT_COLUMNS",
]
