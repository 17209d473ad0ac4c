"""Hot-kernel dispatch: compiled extension when built, numpy fallback
otherwise.  DRIFTGRAPH_KERNEL=c|py forces a backend."""

import os

FLUX = 0
ROBIN = 1

_requested = os.environ.get("DRIFTGRAPH_KERNEL", "").lower()
_impl = None
if _requested in ("", "c", "compiled"):
    try:
        from . import _edgefvm as _impl
        BACKEND = "compiled"
    except ImportError:
        if _requested:
            raise
if _impl is None:
    from . import _edgefvm_py as _impl
    BACKEND = "python"

edge_solve = _impl.edge_solve


def get_backend(name: str):
    """Explicit backend module ('compiled' or 'python'), for benchmarks and
    cross-checks."""
    if name == "python":
        from . import _edgefvm_py
        return _edgefvm_py
    if name == "compiled":
        from . import _edgefvm
        return _edgefvm
    raise ValueError(f"unknown kernel backend {name!r}")
