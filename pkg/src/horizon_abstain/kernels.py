"""Backend selection for the selection kernels.

The compiled extension is used when it was built; otherwise the numpy
fallback. Set ``HORIZON_ABSTAIN_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("HORIZON_ABSTAIN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

prefix_sums = _impl.prefix_sums
partial_ends = _impl.partial_ends
interval_tables = _impl.interval_tables
interval_lengths = _impl.interval_lengths

__all__ = [
    "BACKEND",
    "prefix_sums",
    "partial_ends",
    "interval_tables",
    "interval_lengths",
]
