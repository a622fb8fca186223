"""Hot-kernel dispatch: compiled extension when available, numpy otherwise.

The backend can be forced through the ``CHANNELGAMES_BACKEND`` environment
variable (``python`` or ``compiled``). Everything downstream imports the
kernels from this module only, so both backends stay interchangeable.
"""

import os

_requested = os.environ.get("CHANNELGAMES_BACKEND", "").strip().lower()

if _requested in ("python", "numpy", "fallback"):
    from . import _fallback as _impl
elif _requested in ("compiled", "cython", "c"):
    from . import _core as _impl  # raises ImportError if the ext is missing
else:
    try:
        from . import _core as _impl
    except ImportError:
        from . import _fallback as _impl

BACKEND = _impl.BACKEND
logdet_pd = _impl.logdet_pd
inv_pd = _impl.inv_pd
eigh_sym = _impl.eigh_sym
eigvals_sym = _impl.eigvals_sym
trace_shift = _impl.trace_shift

__all__ = [
    "BACKEND",
    "logdet_pd",
    "inv_pd",
    "eigh_sym",
    "eigvals_sym",
    "trace_shift",
]
