"""Optional numba compilation for the numeric kernels.

Set ``LINDBLAD_GEO_PURE=1`` to run every kernel as plain Python/numpy.
The same source is used on both paths, so results agree to rounding.
"""
import os

PURE = os.environ.get("LINDBLAD_GEO_PURE", "0").lower() in ("1", "true", "yes")

try:
    if PURE:
        raise ImportError
    import numba

    def jit(fn):
        return numba.njit(cache=True)(fn)

    HAVE_NUMBA = True
except ImportError:
    def jit(fn):
        return fn

    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"
