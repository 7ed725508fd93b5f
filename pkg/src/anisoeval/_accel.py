"""Numba switch.

Kernels are written once as plain loops and decorated with :func:`njit`.
Set ``ANISOEVAL_DISABLE_NUMBA=1`` to force the pure-numpy paths in
:mod:`anisoeval.kernels` even when numba is installed.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

_disabled = os.environ.get("ANISOEVAL_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

NUMBA_AVAILABLE = numba is not None
NUMBA_ENABLED = NUMBA_AVAILABLE and not _disabled


def njit(f=None, **options):
    """``numba.njit`` when numba is importable, identity otherwise."""
    options.setdefault("cache", True)
    if numba is None:
        if f is None:
            return lambda g: g
        return f
    if f is None:
        return lambda g: numba.njit(g, **options)
    return numba.njit(f, **options)
