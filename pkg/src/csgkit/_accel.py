"""Kernel backend selection.

The compiled ``_kernels`` extension is used when it was built; otherwise (or
when ``CSGKIT_PURE_PYTHON`` is set to a non-empty value) the pure-Python
fallback in ``_pykernels`` is used.
"""
import os

from . import _pykernels

if os.environ.get("CSGKIT_PURE_PYTHON"):
    _impl = _pykernels
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = _impl.BACKEND
all_pairs_bfs = _impl.all_pairs_bfs
distance_summary = _impl.distance_summary
sgns_train = _impl.sgns_train


def backends():
    """All importable backends, keyed by name (used by tests and the benchmark)."""
    found = {"python": _pykernels}
    try:
        from . import _kernels
        found["cython"] = _kernels
    except ImportError:
        pass
    return found
