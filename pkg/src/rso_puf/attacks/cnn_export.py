"""Dataset exporter for external convolutional tooling.

Each record is rewritten from challenge bits to the two signals' path
indicators: row X tracks the signal that ends at the top arbiter input
(+1 = upper path at that stage), row Y the one ending at the bottom, so
Y = -X and X's final entry is always +1. Tracing backwards, the side a
signal leaves stage l equals the parity of the crossing bits after l, i.e.
feature l+1 of the standard transform. The 2 x n block is then tiled
vertically to 4 x n so a convolution window sees repeated structure.

Convolution training itself is out of scope here; the emitted file is the
interchange format.
"""
from __future__ import annotations

import numpy as np

from ..core import feature_transform
from .dataset import CrpDataset

__all__ = ["cnn_transform", "cnn_extend", "export_cnn_tensor"]


def cnn_transform(challenge) -> np.ndarray:
    """(2, n) signed path-indicator rows [X; Y] for one challenge."""
    phi = feature_transform(np.asarray(challenge, dtype=np.uint8))
    x_row = phi[1:]
    return np.stack([x_row, -x_row]).astype(np.int8)


def cnn_extend(transformed: np.ndarray) -> np.ndarray:
    """(4, n) extension: the transformed block tiled twice."""
    return np.tile(transformed, (2, 1))


def export_cnn_tensor(ds: CrpDataset, path) -> None:
    """Write one extended block per record.

    Layout: a header line, then per sample a ``sample <k> response <r>``
    line followed by four rows of n signed indicators.
    """
    with open(path, "w") as fh:
        fh.write(
            f"n={ds.n} count={len(ds)} transformed=2x{ds.n} extended=4x{ds.n}\n"
        )
        for k in range(len(ds)):
            block = cnn_extend(cnn_transform(ds.challenges[k]))
            fh.write(f"sample {k} response {int(ds.responses[k])}\n")
            for row in block:
                fh.write(" ".join(f"{v:d}" for v in row) + "\n")
