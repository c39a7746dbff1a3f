"""Kernel backend selection.

Two interchangeable kernel modules exist: `kernels_nb` (numba @njit)
and `kernels_np` (pure numpy). The active one is chosen at import time
from the NJM_BACKEND environment variable:

    NJM_BACKEND=numba   force numba (falls back with a warning if absent)
    NJM_BACKEND=numpy   force the pure-numpy path
    unset / "auto"      numba when importable, numpy otherwise

`use()` switches at runtime (used by the benchmark and backend tests).
Determinism guarantees hold within a backend; the two backends agree to
floating-point tolerance, not bitwise.
"""

import os
import sys

from . import kernels_np

try:
    from . import kernels_nb
    HAS_NUMBA = True
except ImportError:
    kernels_nb = None
    HAS_NUMBA = False

_active = None
_active_name = ""


def use(name):
    """Select the kernel backend by name ("numba" or "numpy")."""
    global _active, _active_name
    if name == "numpy":
        _active, _active_name = kernels_np, "numpy"
    elif name == "numba":
        if not HAS_NUMBA:
            raise RuntimeError("numba backend requested but numba is not importable")
        _active, _active_name = kernels_nb, "numba"
    else:
        raise ValueError(f"unknown backend {name!r}")


def kernels():
    """The active kernel module."""
    return _active


def active_name():
    return _active_name


def warmup():
    """Precompile numba kernels (no-op on the numpy backend)."""
    if _active is kernels_nb and kernels_nb is not None:
        kernels_nb.warmup()


_requested = os.environ.get("NJM_BACKEND", "auto").strip().lower() or "auto"
if _requested == "numba" and not HAS_NUMBA:
    print("njm: NJM_BACKEND=numba but numba is unavailable; using numpy",
          file=sys.stderr)
    use("numpy")
elif _requested in ("numba", "numpy"):
    use(_requested)
else:
    if _requested != "auto":
        print(f"njm: unknown NJM_BACKEND={_requested!r}; using auto",
              file=sys.stderr)
    use("numba" if HAS_NUMBA else "numpy")
