"""Pure-numpy fallback kernels.

Same floating-point contract as the compiled extension: the inner dimension is
accumulated in increasing-k order with one rounding per multiply and per add,
so results are bit-identical to a naive triple loop (and to the compiled
kernel). np.matmul is deliberately not used: BLAS reorders the reduction.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, kk = a.shape
    if b.shape[0] != kk:
        raise ValueError("matmul: inner dimensions disagree")
    n = b.shape[1]
    out = np.zeros((m, n), dtype=np.float64)
    tmp = np.empty((m, n), dtype=np.float64)
    for k in range(kk):
        np.multiply(a[:, k, None], b[k, None, :], out=tmp)
        out += tmp
    return out
