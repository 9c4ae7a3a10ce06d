"""Hot numeric kernels with a compiled fast path and a numpy fallback.

The compiled extension is preferred when importable; set BNMIX_PURE_PYTHON=1
to force the reference implementation (used by the parity tests and the
benchmark).
"""

import os

from . import reference

if os.environ.get("BNMIX_PURE_PYTHON", "").strip().lower() in ("1", "true", "yes"):
    _impl = reference
    BACKEND = "reference"
else:
    try:
        from . import _fast as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = reference
        BACKEND = "reference"

encode_configs = _impl.encode_configs
node_ll = _impl.node_ll
cross_mean_logp = _impl.cross_mean_logp
mi_matrix = _impl.mi_matrix


def backend_name() -> str:
    return BACKEND
