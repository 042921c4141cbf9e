"""Kernel backend selection.

The compiled extension (`firstexit._kernels._core`) is preferred when it was
built; otherwise the numpy fallback is used.  Set FIRSTEXIT_KERNELS=python or
FIRSTEXIT_KERNELS=compiled to force a backend (the latter raises if the
extension is unavailable).
"""

import os

from . import _fallback

_choice = os.environ.get("FIRSTEXIT_KERNELS", "auto").lower()

if _choice == "python":
    _impl = _fallback
elif _choice == "compiled":
    from . import _core as _impl
elif _choice == "auto":
    try:
        from . import _core as _impl
    except ImportError:
        _impl = _fallback
else:
    raise ValueError(f"FIRSTEXIT_KERNELS must be auto, compiled or python, not {_choice!r}")

BACKEND = _impl.BACKEND
csr_matvec = _impl.csr_matvec
run_programs = _impl.run_programs
simulate_paths = _impl.simulate_paths
path_states = _fallback.path_states
standard_normals = _fallback.standard_normals

STATUS_EXITED = _fallback.STATUS_EXITED
STATUS_CENSORED = _fallback.STATUS_CENSORED
STATUS_ABORTED = _fallback.STATUS_ABORTED


def get_backend(name):
    """Return the kernel module for an explicit backend name."""
    if name == "python":
        return _fallback
    if name == "compiled":
        from . import _core
        return _core
    raise ValueError(f"unknown backend {name!r}")


def available_backends():
    names = ["python"]
    try:
        from . import _core  # noqa: F401
        names.append("compiled")
    except ImportError:
        pass
    return names
