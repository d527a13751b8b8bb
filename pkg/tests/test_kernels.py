"""Bit-level contract of the matmul kernels.

Both backends promise the exact rounding sequence of the naive triple loop
with k innermost, which is what makes training runs reproducible across
the compiled/python switch. Every comparison here is ==, not allclose.
"""

import numpy as np
import pytest

from clickseg import _kernels
from clickseg._kernels import _py

try:
    from clickseg._kernels import _core
except ImportError:
    _core = None

needs_compiled = pytest.mark.skipif(_core is None, reason="extension not built")


def naive_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for kk in range(k):
            aik = a[i, kk]
            for j in range(n):
                out[i, j] = out[i, j] + aik * b[kk, j]
    return out


def random_cases(seed: int, count: int):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        m, k, n = (int(x) for x in rng.integers(1, 20, size=3))
        scale = 10.0 ** float(rng.integers(-3, 4))
        yield rng.standard_normal((m, k)) * scale, rng.standard_normal((k, n))


def test_python_backend_matches_naive_loop_bitwise():
    for a, b in random_cases(seed=1, count=30):
        assert np.array_equal(_py.matmul(a, b), naive_matmul(a, b))


@needs_compiled
def test_compiled_backend_matches_naive_loop_bitwise():
    for a, b in random_cases(seed=2, count=30):
        assert np.array_equal(_core.matmul(a, b), naive_matmul(a, b))


@needs_compiled
def test_backends_agree_bitwise_on_larger_shapes():
    rng = np.random.default_rng(3)
    for m, k, n in [(64, 64, 64), (256, 16, 48), (1, 100, 1), (7, 1, 9)]:
        a = rng.standard_normal((m, k))
        b = rng.standard_normal((k, n))
        assert np.array_equal(_core.matmul(a, b), _py.matmul(a, b))


def test_selected_backend_exports():
    assert _kernels.BACKEND in ("compiled", "python")
    a = np.eye(3)
    b = np.arange(9.0).reshape(3, 3)
    assert np.array_equal(_kernels.matmul(a, b), b)


def test_inner_dimension_mismatch_raises():
    a = np.zeros((2, 3))
    b = np.zeros((4, 2))
    with pytest.raises(ValueError):
        _py.matmul(a, b)
    if _core is not None:
        with pytest.raises(ValueError):
            _core.matmul(a, b)


def test_non_contiguous_inputs_handled():
    rng = np.random.default_rng(4)
    a = rng.standard_normal((8, 8))[::2, 1:5]
    b = rng.standard_normal((8, 8)).T[1:5, :3]
    expect = naive_matmul(np.ascontiguousarray(a), np.ascontiguousarray(b))
    assert np.array_equal(_kernels.matmul(a, b), expect)


def test_special_values_propagate():
    a = np.array([[np.inf, 1.0], [np.nan, 0.0]])
    b = np.eye(2)
    out = _kernels.matmul(a, b)
    assert np.isinf(out[0, 0]) and np.isnan(out[1, 0])
