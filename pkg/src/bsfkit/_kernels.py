"""Compiled inner loops.

Sums run strictly left to right (no fastmath, so no reassociation or FMA
contraction). That fixed order is what makes block-wise results bit-identical
to whole-matrix ones. All kernels release the GIL.
"""

import numba
import numpy as np


@numba.njit(nogil=True, cache=True)
def affine_rows(C, x, d, start, stop, out):
    """out[i - start] = sum_j C[i, j] * x[j] + d[i] for i in [start, stop)."""
    n = x.shape[0]
    for i in range(start, stop):
        s = 0.0
        for j in range(n):
            s += C[i, j] * x[j]
        out[i - start] = s + d[i]


@numba.njit(nogil=True, cache=True)
def scaled_column_sum(C, x, start, stop, out):
    """out[i] = sum_{j in [start, stop)} x[j] * C[i, j], folded left to right."""
    n = C.shape[0]
    for i in range(n):
        s = 0.0
        for j in range(start, stop):
            s += x[j] * C[i, j]
        out[i] = s


@numba.njit(nogil=True, cache=False)
def madd_chain(count, a, b, seed):
    # dependent chain: every step waits on the previous result
    x = seed
    for _ in range(count):
        x = x * a + b
    return x


def warm_up() -> None:
    C = np.zeros((1, 1))
    v = np.zeros(1)
    affine_rows(C, v, v, 0, 1, np.empty(1))
    scaled_column_sum(C, v, 0, 1, np.empty(1))
    madd_chain(1, 1.0, 0.0, 0.0)
