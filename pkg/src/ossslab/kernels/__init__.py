"""Kernel backend selection.

The compiled extension is preferred; set OSSSLAB_PURE=1 to force the
pure-Python fallback.  Both expose the same functions and, given the same
inputs (including the caller-supplied uniform buffers), the same outputs.
"""

import os

if os.environ.get("OSSSLAB_PURE") == "1":
    from . import _pure as _impl
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _pure as _impl

heatbath_sweeps = _impl.heatbath_sweeps
connected_batch = _impl.connected_batch


def backend_name() -> str:
    return _impl.BACKEND
