"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

Backend selection: set ``EMBEDKIT_BACKEND=numpy`` to force the fallback,
``EMBEDKIT_BACKEND=numba`` to require the jit path (import error if numba
is missing). Default is numba when importable. ``EMBEDKIT_THREADS`` caps
numba's thread pool (0 or unset = auto).

All kernels accumulate in float64 regardless of input dtype so results are
reproducible and accurate for dims up to a few thousand. Parallelism is per
output row only, so results do not depend on the thread count.
"""

from __future__ import annotations

import os

import numpy as np

_requested = os.environ.get("EMBEDKIT_BACKEND", "").strip().lower()


def _np_dot_matrix(a, b):
    return a.astype(np.float64, copy=False) @ b.astype(np.float64, copy=False).T


def _np_row_norms(a):
    a64 = a.astype(np.float64, copy=False)
    return np.sqrt(np.einsum("ij,ij->i", a64, a64))


if _requested in ("", "numba"):
    try:
        import numba
        from numba import njit, prange

        _threads = int(os.environ.get("EMBEDKIT_THREADS", "0") or "0")
        if _threads > 0:
            numba.set_num_threads(min(_threads, numba.config.NUMBA_NUM_THREADS))

        @njit(cache=True, parallel=True, fastmath=True)
        def _nb_dot_matrix(a, b):
            m, d = a.shape
            n = b.shape[0]
            out = np.empty((m, n), dtype=np.float64)
            for i in prange(m):
                for j in range(n):
                    acc = 0.0
                    for k in range(d):
                        acc += np.float64(a[i, k]) * np.float64(b[j, k])
                    out[i, j] = acc
            return out

        @njit(cache=True, parallel=True, fastmath=True)
        def _nb_row_norms(a):
            m, d = a.shape
            out = np.empty(m, dtype=np.float64)
            for i in prange(m):
                acc = 0.0
                for k in range(d):
                    acc += np.float64(a[i, k]) * np.float64(a[i, k])
                out[i] = np.sqrt(acc)
            return out

        dot_matrix = _nb_dot_matrix
        row_norms = _nb_row_norms
        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        dot_matrix = _np_dot_matrix
        row_norms = _np_row_norms
        BACKEND = "numpy"
elif _requested == "numpy":
    dot_matrix = _np_dot_matrix
    row_norms = _np_row_norms
    BACKEND = "numpy"
else:
    raise ValueError(
        f"EMBEDKIT_BACKEND must be 'numba' or 'numpy', got {_requested!r}"
    )
