"""Backend selection for the hot kernels.

Both a numba-compiled and a pure-numpy version of every hot kernel are
kept. ``GCIMMERSION_BACKEND=numpy`` forces the numpy path; otherwise the
numba path is used whenever numba imports.
"""

import os

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is optional
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn


ENV_FLAG = "GCIMMERSION_BACKEND"


def active_backend():
    """Name of the backend the next march will use ("numba" or "numpy")."""
    requested = os.environ.get(ENV_FLAG, "numba").strip().lower()
    if requested == "numpy" or not NUMBA_AVAILABLE:
        return "numpy"
    return "numba"
