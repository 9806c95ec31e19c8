"""Optional numba acceleration.

Set ``PRODRAND_DISABLE_NUMBA=1`` to run every kernel on its pure-numpy path.
``PRODRAND_NUMBA_CACHE=0`` turns off on-disk caching of compiled kernels.
"""

from __future__ import annotations

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and os.environ.get("PRODRAND_DISABLE_NUMBA", "0").lower() in ("", "0", "false", "no")
_CACHE = os.environ.get("PRODRAND_NUMBA_CACHE", "1").lower() not in ("0", "false", "no")


def njit(func):
    """Compile ``func`` in nopython mode, or return ``None`` when numba is absent."""
    if not HAVE_NUMBA:
        return None
    return numba.njit(cache=_CACHE)(func)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
