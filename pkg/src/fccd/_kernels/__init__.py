"""Distance kernels: compiled core with a pure-NumPy fallback.

The compiled extension is preferred when it imports cleanly; set
``FCCD_PURE_PYTHON=1`` to force the fallback (used by the benchmark and
the backend-parity tests).
"""

import os

if os.environ.get("FCCD_PURE_PYTHON"):
    from . import _fallback as _impl
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _fallback as _impl

BACKEND = _impl.BACKEND
assign_points = _impl.assign_points
accumulate_centers = _impl.accumulate_centers

__all__ = ["BACKEND", "assign_points", "accumulate_centers"]
