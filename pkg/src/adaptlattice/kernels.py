"""Hot-loop kernels, compiled when the extension is built.

Set ``ADAPTLATTICE_PURE=1`` to force the numpy fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("ADAPTLATTICE_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

ensemble_rk4 = _impl.ensemble_rk4
polyline_clear = _impl.polyline_clear
