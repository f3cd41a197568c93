"""Backend selection for the hot kernels.

The compiled Cython module is preferred when it was built; the pure-numpy
twin is used otherwise, or when E2F_PURE_PYTHON=1 is set. Both expose the
same two functions and produce bit-identical results.
"""

from __future__ import annotations

import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

if _compiled is not None and os.environ.get("E2F_PURE_PYTHON") != "1":
    _active = _compiled
    BACKEND = "compiled"
else:
    _active = _kernels_py
    BACKEND = "python"

accumulate = _active.accumulate
simulate = _active.simulate


def available_backends() -> dict[str, object]:
    """Map backend name to its module; 'compiled' is absent if not built."""
    out: dict[str, object] = {"python": _kernels_py}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out
