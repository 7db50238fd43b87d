"""Numba-compiled evaluation kernels.

Same contracts as ``_kernels_numpy``; the delta kernel is fused so the
(N, n+1) feature matrix is never materialized for large batches.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def features(bits, _out_dtype=np.float64):
    n_rows, n = bits.shape
    out = np.empty((n_rows, n + 1), dtype=np.float64)
    for r in range(n_rows):
        prod = 1.0
        out[r, n] = 1.0
        for l in range(n - 1, -1, -1):
            prod *= 1.0 - 2.0 * bits[r, l]
            out[r, l] = prod
    return out


@njit(cache=True)
def deltas(bits, omega):
    n_rows, n = bits.shape
    out = np.empty(n_rows, dtype=np.float64)
    for r in range(n_rows):
        acc = omega[n]
        prod = 1.0
        for l in range(n - 1, -1, -1):
            prod *= 1.0 - 2.0 * bits[r, l]
            acc += prod * omega[l]
        out[r] = acc
    return out
