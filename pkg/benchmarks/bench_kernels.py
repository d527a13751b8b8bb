"""Compare the compiled and pure-python matmul backends.

Times raw matrix products at model-relevant sizes and one end-to-end forward
pass with each backend, and verifies bitwise agreement along the way.
Run directly: python benchmarks/bench_kernels.py
"""

import time

import numpy as np


def _time(fn, repeat: int = 5) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_matmul() -> None:
    from clickseg._kernels import _py
    try:
        from clickseg._kernels import _core
    except ImportError:
        print("compiled backend unavailable; showing python backend only")
        _core = None

    rng = np.random.default_rng(0)
    sizes = [(64, 64, 64), (256, 16, 256), (256, 256, 16), (1024, 64, 64)]
    print(f"{'m,k,n':>16} {'compiled':>12} {'python':>12} {'speedup':>9}")
    for m, k, n in sizes:
        a = rng.standard_normal((m, k))
        b = rng.standard_normal((k, n))
        t_py = _time(lambda: _py.matmul(a, b))
        if _core is not None:
            t_c = _time(lambda: _core.matmul(a, b))
            assert (_core.matmul(a, b) == _py.matmul(a, b)).all(), \
                "backends disagree bitwise"
            print(f"{f'{m},{k},{n}':>16} {t_c * 1e3:>10.2f}ms "
                  f"{t_py * 1e3:>10.2f}ms {t_py / t_c:>8.1f}x")
        else:
            print(f"{f'{m},{k},{n}':>16} {'-':>12} {t_py * 1e3:>10.2f}ms")


def bench_forward() -> None:
    import importlib
    import os

    import clickseg._kernels as kernels
    from clickseg.clicks import POSITIVE, ClickSet
    from clickseg.model import ClickSegModel, ModelConfig, assemble_input

    rng = np.random.default_rng(0)
    img = rng.random((3, 64, 64))
    maps = np.zeros((2, 64, 64))
    maps[0, 32, 32] = 1.0
    prev = np.zeros((1, 64, 64))
    x6 = assemble_input(img, maps, prev)
    cs = ClickSet(64, 64)
    cs.add(32, 32, POSITIVE)

    results = {}
    for backend in ("compiled", "python"):
        os.environ["CLICKSEG_KERNELS"] = backend
        try:
            importlib.reload(kernels)
        except RuntimeError:
            continue
        if kernels.BACKEND != backend:
            continue
        model = ClickSegModel(ModelConfig(), seed=0)
        res = model.forward(x6, cs)
        results[backend] = res.logits.data.copy()
        t = _time(lambda: model.forward(x6, cs), repeat=3)
        print(f"forward ({backend}): {t * 1e3:.1f} ms")
    os.environ.pop("CLICKSEG_KERNELS", None)
    importlib.reload(kernels)
    if len(results) == 2:
        same = np.array_equal(results["compiled"], results["python"])
        print(f"forward logits bitwise identical across backends: {same}")


def main() -> None:
    print("== raw matmul ==")
    bench_matmul()
    print("\n== model forward ==")
    bench_forward()


if __name__ == "__main__":
    main()
