"""Backend switch for the hot loops.

Kernels are written twice: a numba ``@njit`` version and a pure-numpy
version.  ``GMMSCENE_BACKEND=numpy`` forces the numpy path; otherwise numba
is used when it imports.  The two SMO versions evaluate the same
update expressions in the same order, so their iterates agree bit for bit; the other kernels
sum in a different order and agree to rounding.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

_VALID = ("numba", "numpy")


def _initial_backend():
    requested = os.environ.get("GMMSCENE_BACKEND", "numba").strip().lower()
    if requested not in _VALID:
        raise RuntimeError(f"GMMSCENE_BACKEND must be one of {_VALID}, got {requested!r}")
    if requested == "numba" and not HAVE_NUMBA:
        return "numpy"
    return requested


_backend = _initial_backend()


def backend():
    return _backend


def use_numba():
    return _backend == "numba"


def set_backend(name):
    """Switch backend at runtime (benchmarks and backend-parity tests)."""
    global _backend
    if name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


def njit(*args, **kwargs):
    """``numba.njit`` with caching on; identity decorator without numba."""
    kwargs.setdefault("cache", True)
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda func: func
