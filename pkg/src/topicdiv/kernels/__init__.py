"""Hot inner loops, dispatched to numba or to the plain-numpy fallback.

Set ``TOPICDIV_DISABLE_JIT=1`` before import to force the numpy path; it is
also used automatically when numba cannot be imported.
"""

import os

from . import numpy_impl

_disabled = os.environ.get("TOPICDIV_DISABLE_JIT", "").strip().lower() in {"1", "true", "yes", "on"}

if _disabled:
    numba_impl = None
else:
    try:
        from . import numba_impl
    except ImportError:  # pragma: no cover - numba is a declared dependency
        numba_impl = None

BACKEND = "numba" if numba_impl is not None else "numpy"
_impl = numba_impl if numba_impl is not None else numpy_impl

gibbs_sweep = _impl.gibbs_sweep
foldin_theta = _impl.foldin_theta
demean_pass = _impl.demean_pass

__all__ = ["BACKEND", "gibbs_sweep", "foldin_theta", "demean_pass", "numpy_impl", "numba_impl"]
