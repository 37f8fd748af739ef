"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the NumPy fallback
with identical semantics is used.  ``use_backend`` switches explicitly (for
benchmarks and cross-checking tests).
"""

from __future__ import annotations

from types import ModuleType

from . import _pykernels

try:  # pragma: no cover - depends on build
    from . import _ckernels as _compiled
except ImportError:  # pragma: no cover
    _compiled = None

kernels: ModuleType = _compiled if _compiled is not None else _pykernels
BACKEND: str = "compiled" if _compiled is not None else "python"


def compiled_available() -> bool:
    return _compiled is not None


def use_backend(name: str) -> str:
    """Select ``"compiled"`` or ``"python"``; returns the previous backend name."""
    global kernels, BACKEND
    previous = BACKEND
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        kernels, BACKEND = _compiled, "compiled"
    elif name == "python":
        kernels, BACKEND = _pykernels, "python"
    else:
        raise ValueError(f"unknown backend {name!r}")
    return previous


def get_kernels() -> ModuleType:
    return kernels
