"""Kernel backend selection.

The hot per-path loops exist twice: a compiled Cython extension and a pure
NumPy implementation with identical arithmetic.  The compiled lane is picked
at import when available; setting the environment variable
``MFDELTA_PURE_PYTHON=1`` before import forces the NumPy lane (used by the
parity tests and the benchmark).
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("MFDELTA_PURE_PYTHON", "") == "1":
    _impl = _kernels_py
    _active = "python"
else:
    try:
        from . import _kernels_cy as _impl  # type: ignore[no-redef]

        _active = "compiled"
    except ImportError:
        _impl = _kernels_py
        _active = "python"


def active_backend() -> str:
    """Either "compiled" or "python"."""
    return _active


table_paths_x = _impl.table_paths_x
table_paths = _impl.table_paths
log_accumulate = _impl.log_accumulate
table_jacobian_from_paths = _impl.table_jacobian_from_paths
correction_quadrature = _impl.correction_quadrature
correction_noise_derivatives = _impl.correction_noise_derivatives

# The reference lane stays importable for parity checks and benchmarks.
python_kernels = _kernels_py
