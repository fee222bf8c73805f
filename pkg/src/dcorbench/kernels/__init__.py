"""Hot kernels: compiled Cython core with a pure-Python fallback.

The compiled extension is used when it was built; set
``DCORBENCH_PURE_PYTHON=1`` to force the fallback. Both backends produce
bit-identical results.
"""
import os

from . import _pykernels
from ._pykernels import BLOCK, ZIGZAG, candidate_order

try:
    if os.environ.get("DCORBENCH_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python backend requested")
    from . import _ckernels as _impl
    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"

sad_search = _impl.sad_search
remap_plane = _impl.remap_plane
BitWriter = _impl.BitWriter
BitReader = _impl.BitReader


def backend_module(name):
    """Return the kernel module for ``name`` in {"python", "cython"}."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


__all__ = [
    "BACKEND", "BLOCK", "ZIGZAG", "BitReader", "BitWriter", "backend_module",
    "candidate_order", "remap_plane", "sad_search",
]
