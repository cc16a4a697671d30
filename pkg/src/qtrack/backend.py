"""Kernel selection: compiled extension when importable, pure Python otherwise.

Set ``QTRACK_BACKEND=python`` to force the fallback.
"""
import os

from . import _pykernel

try:
    from . import _kernel as _compiled
except ImportError:  # extension not built
    _compiled = None

KERNELS = {"python": _pykernel.run_loop}
if _compiled is not None:
    KERNELS["compiled"] = _compiled.run_loop


def default_backend() -> str:
    requested = os.environ.get("QTRACK_BACKEND", "").strip().lower()
    if requested:
        if requested not in KERNELS:
            raise RuntimeError(f"QTRACK_BACKEND={requested!r} unavailable; have {sorted(KERNELS)}")
        return requested
    return "compiled" if "compiled" in KERNELS else "python"


BACKEND = default_backend()


def get_kernel(name: str | None = None):
    return KERNELS[name or BACKEND]
