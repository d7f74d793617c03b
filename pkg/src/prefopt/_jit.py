"""Backend switch for the hot kernels.

Set ``PREFOPT_BACKEND=numpy`` to force the vectorized numpy kernels; the
default is ``numba`` whenever numba imports. ``PREFOPT_BACKEND`` is read once
at import time.
"""

import os
import warnings

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False


def _requested_backend() -> str:
    name = os.environ.get("PREFOPT_BACKEND", "").strip().lower()
    if name in ("", "auto"):
        return "numba" if HAS_NUMBA else "numpy"
    if name not in ("numba", "numpy"):
        raise ValueError(f"PREFOPT_BACKEND must be 'numba' or 'numpy', got {name!r}")
    if name == "numba" and not HAS_NUMBA:
        warnings.warn("PREFOPT_BACKEND=numba but numba is not installed; using numpy")
        return "numpy"
    return name


BACKEND = _requested_backend()


def njit(*args, **kwargs):
    """``numba.njit`` with caching, or a no-op decorator when numba is missing."""
    if HAS_NUMBA:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda func: func
