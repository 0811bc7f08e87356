"""Hot loops for the memory convolutions.

Each kernel exists twice: a numba ``@njit`` version and a pure-numpy
version. Set ``VISCOWAVE_DISABLE_NUMBA=1`` before import to force the numpy
path (also used automatically when numba is not importable).
"""
import os

import numpy as np

_DISABLED = os.environ.get("VISCOWAVE_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit
    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


def backend():
    return "numba" if HAS_NUMBA else "numpy"


def history_moments_numpy(H, n, coef, kmin=0):
    """Weighted moments of rows ``kmin..n`` of ``H`` against row ``n``.

    ``coef[k]`` is the full quadrature coefficient (weight times kernel
    value) of sample ``k``. Returns ``(star, diamond, square)`` with

        star    = sum_k coef[k] * H[k]
        diamond = sum_k coef[k] * (H[n] - H[k])
        square  = sum_k coef[k] * (H[n] - H[k])**2
    """
    rows = H[kmin:n + 1]
    c = coef[kmin:n + 1]
    star = c @ rows
    diff = H[n] - rows
    diamond = c @ diff
    square = c @ (diff * diff)
    return star, diamond, square


if HAS_NUMBA:

    @njit(cache=True)
    def _history_moments_jit(H, n, coef, kmin, star, diamond, square):
        ncol = H.shape[1]
        for j in range(ncol):
            hn = H[n, j]
            s = 0.0
            d = 0.0
            q = 0.0
            for k in range(kmin, n + 1):
                c = coef[k]
                h = H[k, j]
                diff = hn - h
                s += c * h
                d += c * diff
                q += c * diff * diff
            star[j] = s
            diamond[j] = d
            square[j] = q

    def history_moments(H, n, coef, kmin=0):
        ncol = H.shape[1]
        star = np.empty(ncol)
        diamond = np.empty(ncol)
        square = np.empty(ncol)
        _history_moments_jit(H, n, coef, kmin, star, diamond, square)
        return star, diamond, square

else:
    history_moments = history_moments_numpy
