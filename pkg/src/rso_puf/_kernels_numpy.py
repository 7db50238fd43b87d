"""Pure-numpy reference implementations of the hot evaluation kernels."""
import numpy as np


def features(bits):
    """Map 0/1 challenge rows (N, n) to parity feature rows (N, n+1).

    Feature l is the product of (1 - 2*bit) over stages l..n-1; the last
    feature is the constant 1.
    """
    bits = np.ascontiguousarray(bits)
    n_rows, n = bits.shape
    out = np.empty((n_rows, n + 1), dtype=np.float64)
    signs = 1.0 - 2.0 * bits.astype(np.float64)
    out[:, :n] = np.cumprod(signs[:, ::-1], axis=1)[:, ::-1]
    out[:, n] = 1.0
    return out


def deltas(bits, omega):
    """Delay differences for challenge rows (N, n) under weights (n+1,)."""
    return features(bits) @ omega
