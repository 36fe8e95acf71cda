"""Kernel backend selection.

The hot kernels exist twice: numba-compiled (``_kernels_numba``) and pure
numpy (``_kernels_numpy``).  The environment variable ``HDNN_BACKEND``
picks one ("numba" or "numpy"); unset means numba when importable, numpy
otherwise.  Loading is deferred until the first kernel call so that cheap
CLI queries never pay the numba import.
"""

import os

from .errors import ConfigError

_KERNEL_NAMES = (
    "matmul",
    "matmul_nt",
    "matmul_tn",
    "sigmoid",
    "softmax_rows",
    "log_softmax_rows",
    "smbr_forward_backward",
)

_impl = None


def _load():
    global _impl
    if _impl is not None:
        return _impl
    choice = os.environ.get("HDNN_BACKEND", "").strip().lower()
    if choice not in ("", "numba", "numpy"):
        raise ConfigError(
            f"HDNN_BACKEND={choice!r} is not recognized; use 'numba' or 'numpy'")
    if choice == "numpy":
        from . import _kernels_numpy as _impl_mod
    elif choice == "numba":
        from . import _kernels_numba as _impl_mod
    else:
        try:
            from . import _kernels_numba as _impl_mod
        except ImportError:
            from . import _kernels_numpy as _impl_mod
    _impl = _impl_mod
    for name in _KERNEL_NAMES:
        globals()[name] = getattr(_impl_mod, name)
    globals()["BACKEND"] = (
        "numba" if _impl_mod.__name__.endswith("numba") else "numpy")
    return _impl_mod


def backend_name() -> str:
    """Name of the active backend ("numba" or "numpy")."""
    _load()
    return globals()["BACKEND"]


def __getattr__(name):
    if name in _KERNEL_NAMES or name == "BACKEND":
        _load()
        return globals()[name]
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
