"""Hot kernels: compiled extension when available, numpy fallback otherwise.

Set ``BATSTATION_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernels as python_backend

compiled_backend = None
if os.environ.get("BATSTATION_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

_impl = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

nearest_index = _impl.nearest_index
maxpool_rows = _impl.maxpool_rows
correlate_max = _impl.correlate_max
hampel3 = _impl.hampel3
cancel_rows = _impl.cancel_rows

__all__ = ["BACKEND", "nearest_index", "maxpool_rows", "correlate_max", "hampel3", "cancel_rows", "python_backend", "compiled_backend"]
