"""Backend selection for the hot kernels.

The compiled extension is used when it imports; set ``RANCL_PURE_PYTHON=1``
to force the numpy fallback.
"""

import os

from rancl import _fallback

BACKENDS = {"python": _fallback}

try:
    from rancl import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None
else:
    BACKENDS["compiled"] = _compiled

if _compiled is not None and os.environ.get("RANCL_PURE_PYTHON", "") in ("", "0"):
    BACKEND = "compiled"
else:
    BACKEND = "python"

_impl = BACKENDS[BACKEND]

adam_update = _impl.adam_update
sparsemax_rows = _impl.sparsemax_rows
scan_conflicts = _impl.scan_conflicts
DIRECT, INDIRECT, IMPLICIT = _fallback.DIRECT, _fallback.INDIRECT, _fallback.IMPLICIT
