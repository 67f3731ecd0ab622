"""Backend selection for the hot loops.

Numba is used when importable unless ``SIGNEDWIGNER_DISABLE_NUMBA`` is set
to a truthy value, in which case every kernel dispatches to its vectorized
numpy twin. Both paths are importable regardless of the flag so tests and
benchmarks can compare them.
"""

from __future__ import annotations

import os

ENV_FLAG = "SIGNEDWIGNER_DISABLE_NUMBA"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _flag_set() -> bool:
    return os.environ.get(ENV_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


USE_NUMBA = HAVE_NUMBA and not _flag_set()


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` when numba is installed, identity otherwise."""
    kwargs.setdefault("cache", True)
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
