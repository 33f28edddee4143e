"""Kernel dispatch: compiled Cython kernels when built, pure Python otherwise.

Set ``LVGGM_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
if os.environ.get("LVGGM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

top_k_indices = _impl.top_k_indices
tpi_iterate = _impl.tpi_iterate
nn_coordinate_descent = _impl.nn_coordinate_descent

__all__ = ["BACKEND", "top_k_indices", "tpi_iterate", "nn_coordinate_descent"]
