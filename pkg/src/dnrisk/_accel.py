"""Backend switch for the compiled kernels.

Hot loops live in :mod:`dnrisk._kernels` in two flavours: a numba ``@njit``
version and a pure-numpy version. The numba path is the default; set
``DNRISK_PURE_NUMPY=1`` in the environment (or call :func:`set_backend`) to
force the numpy path. If numba cannot be imported the numpy path is used.
"""
from __future__ import annotations

import contextlib
import os

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    NUMBA_AVAILABLE = False

_ENV_FLAG = "DNRISK_PURE_NUMPY"


def _env_wants_numpy() -> bool:
    return os.environ.get(_ENV_FLAG, "").strip().lower() in ("1", "true", "yes", "on")


_backend = "numpy" if (_env_wants_numpy() or not NUMBA_AVAILABLE) else "numba"


def njit(*args, **kwargs):
    """``numba.njit`` with ``cache=True``; identity decorator without numba."""
    kwargs.setdefault("cache", True)
    if not NUMBA_AVAILABLE:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn
    return numba.njit(*args, **kwargs)


def backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not NUMBA_AVAILABLE:
        raise RuntimeError("numba is not installed")
    _backend = name


@contextlib.contextmanager
def use_backend(name: str):
    """Temporarily switch backend (tests and benchmarks)."""
    prev = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)
