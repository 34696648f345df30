"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly, unless the environment
variable ``LIMBHAR_DISABLE_NUMBA`` is set to a truthy value.  Both backends
expose the same functions; ``get_backend(name)`` returns either one
explicitly, which is how tests and the benchmark compare them.
"""

import os
from types import ModuleType

from . import _numpy

KERNEL_NAMES = (
    "lstm_gates_forward",
    "lstm_gates_backward",
    "conv1d_forward",
    "conv1d_backward",
    "maxpool1d_forward",
    "maxpool1d_backward",
    "dft2_magnitude",
)


def _disabled() -> bool:
    return os.environ.get("LIMBHAR_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")


def _load_numba():
    try:
        from . import _numba
    except ImportError:
        return None
    return _numba


_numba_mod = None if _disabled() else _load_numba()


def numba_available() -> bool:
    return _load_numba() is not None


def get_backend(name: str) -> ModuleType:
    if name == "numpy":
        return _numpy
    if name == "numba":
        mod = _load_numba()
        if mod is None:
            raise RuntimeError("numba backend requested but numba is not importable")
        return mod
    raise ValueError(f"unknown kernel backend {name!r}")


BACKEND = "numba" if _numba_mod is not None else "numpy"
_active = _numba_mod if _numba_mod is not None else _numpy

lstm_gates_forward = _active.lstm_gates_forward
lstm_gates_backward = _active.lstm_gates_backward
conv1d_forward = _active.conv1d_forward
conv1d_backward = _active.conv1d_backward
maxpool1d_forward = _active.maxpool1d_forward
maxpool1d_backward = _active.maxpool1d_backward
dft2_magnitude = _active.dft2_magnitude

__all__ = ["BACKEND", "KERNEL_NAMES", "get_backend", "numba_available", *KERNEL_NAMES]
