"""Kernel backend selection.

The compiled Cython kernel is used when importable, the numpy fallback
otherwise. Set CLICKSEG_KERNELS=python or CLICKSEG_KERNELS=compiled to force a
backend (forcing "compiled" raises if the extension was not built). Both
backends produce bit-identical results; see tests/test_kernels.py and
benchmarks/bench_kernels.py.
"""

from __future__ import annotations

import os

_forced = os.environ.get("CLICKSEG_KERNELS")
if _forced == "python":
    from . import _py as _impl
elif _forced == "compiled":
    from . import _core as _impl  # type: ignore[no-redef]
elif _forced:
    raise RuntimeError(f"CLICKSEG_KERNELS must be 'python' or 'compiled', got {_forced!r}")
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        from . import _py as _impl  # type: ignore[no-redef]

BACKEND: str = _impl.BACKEND


def matmul(a, b):
    """C-contiguous f64 matrix product with naive-loop rounding order."""
    import numpy as _np
    return _impl.matmul(_np.ascontiguousarray(a, dtype=_np.float64),
                        _np.ascontiguousarray(b, dtype=_np.float64))


__all__ = ["BACKEND", "matmul"]
