"""Import-time selection between the compiled kernels and the numpy fallback.

Set ``GEODAMAGE_PURE_PYTHON=1`` to force the fallback (used by the benchmark
and by the backend-agreement tests).
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("GEODAMAGE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "compiled"

support_nodes = _impl.support_nodes
prox_nodes = _impl.prox_nodes
prox_jacobian_nodes = _impl.prox_jacobian_nodes
grid_scan = _impl.grid_scan
CONE_RTOL = _kernels_py.CONE_RTOL
