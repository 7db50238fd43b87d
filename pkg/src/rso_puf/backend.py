"""Kernel backend selection.

The batched evaluation kernels exist twice: a numba-compiled version and a
pure-numpy fallback. Selection is controlled by the ``RSO_PUF_BACKEND``
environment variable:

* ``auto`` (default) - numba when importable, numpy otherwise
* ``numba``          - require numba, raise if unavailable
* ``numpy``          - force the pure-numpy path

Within one backend all results are bit-reproducible; across backends the
floating-point summation order differs, so delay values may differ by a few
ulp (response bits agree except on deltas within rounding distance of zero).
"""
import os

from . import _kernels_numpy

_CHOICE = os.environ.get("RSO_PUF_BACKEND", "auto").strip().lower()

if _CHOICE not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"RSO_PUF_BACKEND must be one of auto/numba/numpy, got {_CHOICE!r}"
    )

if _CHOICE == "numpy":
    _impl = _kernels_numpy
    BACKEND = "numpy"
else:
    try:
        from . import _kernels_numba as _impl
        BACKEND = "numba"
    except ImportError:
        if _CHOICE == "numba":
            raise
        _impl = _kernels_numpy
        BACKEND = "numpy"

features = _impl.features
deltas = _impl.deltas
