"""Hot numeric kernels with two interchangeable backends.

The numba backend is the default when importable; set ATOMSHAP_BACKEND=numpy
to force the pure-numpy fallback (or =numba to fail loudly if numba is
unusable). `atomshap bench --compare-backends` times both.
"""

import importlib
import os

from . import _numpy_impl

_REQUESTED = os.environ.get("ATOMSHAP_BACKEND", "auto").lower()
if _REQUESTED not in ("auto", "numba", "numpy"):
    raise ValueError(f"ATOMSHAP_BACKEND must be auto|numba|numpy, got {_REQUESTED!r}")

_numba_impl = None
if _REQUESTED in ("auto", "numba"):
    try:
        _numba_impl = importlib.import_module(".._kernels._numba_impl", __name__)
    except Exception:
        if _REQUESTED == "numba":
            raise
        _numba_impl = None

if _numba_impl is not None:
    BACKEND = "numba"
    _active = _numba_impl
else:
    BACKEND = "numpy"
    _active = _numpy_impl

complex_raw = _active.complex_raw
minmax_rows = _active.minmax_rows
combine_product_max = _active.combine_product_max
count_strictly_greater = _active.count_strictly_greater


def warmup() -> None:
    """Pre-compile the active backend (no-op for numpy)."""
    if _active is _numba_impl and _numba_impl is not None:
        _numba_impl.warmup()


def implementations() -> dict:
    """Importable backends by name, for benchmarks and equivalence tests."""
    impls = {"numpy": _numpy_impl}
    if _numba_impl is not None:
        impls["numba"] = _numba_impl
    return impls
