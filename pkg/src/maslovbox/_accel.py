"""Selects between numba-compiled kernels and the plain numpy path.

Set ``MASLOVBOX_PURE_NUMPY=1`` (or any of ``true``/``yes``/``on``) before
importing :mod:`maslovbox` to skip numba entirely.  The kernels in
:mod:`maslovbox.kernels` are written so that the same source runs either way.
"""

from __future__ import annotations

import os

_FLAG = "MASLOVBOX_PURE_NUMPY"


def _env_disabled() -> bool:
    return os.environ.get(_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


try:
    if _env_disabled():
        raise ImportError("numba disabled by " + _FLAG)
    import numba as _numba
except ImportError:  # pragma: no cover - depends on environment
    _numba = None

USE_NUMBA = _numba is not None


def jit(func):
    """``numba.njit(cache=True)`` when numba is active, identity otherwise."""
    if USE_NUMBA:
        return _numba.njit(cache=True)(func)
    return func


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
