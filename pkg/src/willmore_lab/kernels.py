"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
implementation is loaded.  Set ``WILLMORE_LAB_BACKEND=numpy`` to force the
fallback (useful for benchmarking and for cross-checking the two).
"""

from __future__ import annotations

import os

from . import _kernels_py

_forced = os.environ.get("WILLMORE_LAB_BACKEND", "").strip().lower()
_impl = _kernels_py
if _forced != "numpy":
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        if _forced == "cython":
            raise
        _impl = _kernels_py

BACKEND: str = _impl.BACKEND
corner_cotangents = _impl.corner_cotangents
mixed_vertex_areas = _impl.mixed_vertex_areas
cotan_laplacian_apply = _impl.cotan_laplacian_apply
willmore_energy_grad = _impl.willmore_energy_grad

__all__ = ["BACKEND", "corner_cotangents", "mixed_vertex_areas",
           "cotan_laplacian_apply", "willmore_energy_grad", "backends"]


def backends() -> dict:
    """Map of available backend names to kernel modules."""
    out = {"numpy": _kernels_py}
    try:
        from . import _kernels
        out["cython"] = _kernels
    except ImportError:
        pass
    return out
