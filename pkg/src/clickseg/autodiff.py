"""Dense f64 tensors with reverse-mode automatic differentiation.

Tensors wrap a C-contiguous (row-major) float64 ndarray. Operations record
onto the innermost active :class:`Tape` whenever an input participates in
gradients; with no active tape every op is a plain forward computation, which
is how inference runs.

Broadcasting is restricted to same-rank shapes where a mismatched axis has
size 1 on one side; no implicit rank promotion. Gradients of broadcast ops
sum-reduce over the stretched axes.

Finiteness: tensors built from user data are validated, as are the outputs of
ops that can leave the finite domain (exp, log, sqrt, div, losses). Purely
arithmetic intermediates skip the scan for speed; `Tensor.assert_finite()` is
available at chokepoints.
"""

from __future__ import annotations

import numpy as np

from . import _kernels


class TensorError(ValueError):
    """Contract violation on tensor construction or an op."""


class TapeError(RuntimeError):
    """Tape misuse: backward on a consumed tape, unrecorded loss, ..."""


def _as_f64(data) -> np.ndarray:
    # np.ascontiguousarray would promote 0-d input to shape (1,); keep rank
    arr = np.asarray(data, dtype=np.float64)
    if not arr.flags["C_CONTIGUOUS"]:
        arr = np.ascontiguousarray(arr)
    return arr


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        arr = _as_f64(data)
        if not np.all(np.isfinite(arr)):
            raise TensorError("tensor data must be finite (got NaN or Inf)")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise TensorError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def assert_finite(self, what: str = "tensor") -> "Tensor":
        if not np.all(np.isfinite(self.data)):
            raise TensorError(f"{what} contains NaN or Inf")
        return self

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


def _make(data: np.ndarray, requires_grad: bool) -> Tensor:
    # Internal op-output constructor: skips the finiteness scan.
    t = Tensor.__new__(Tensor)
    t.data = data
    t.requires_grad = requires_grad
    t.grad = None
    t._tape = None
    return t


class _Node:
    __slots__ = ("out", "parents", "vjps")

    def __init__(self, out: Tensor, parents: tuple[Tensor, ...], vjps: tuple):
        self.out = out
        self.parents = parents
        self.vjps = vjps


_TAPE_STACK: list["Tape"] = []


class Tape:
    """Ordered record of operations for one backward pass.

    Nodes are appended in execution order, so parents always precede their
    consumers and a single reverse sweep visits each node exactly once. A tape
    is single-use: call :meth:`reset` before recording or differentiating
    again. Tapes must not be shared between threads.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self

    def record(self, out: Tensor, parents: tuple[Tensor, ...], vjps: tuple) -> None:
        if self._consumed:
            raise TapeError("tape already consumed by backward(); reset() it first")
        out._tape = self
        self.nodes.append(_Node(out, parents, vjps))

    def reset(self) -> None:
        self.nodes.clear()
        self._consumed = False

    def backward(self, loss: Tensor) -> None:
        if loss.data.size != 1:
            raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._tape is not self:
            raise TapeError("loss was not recorded on this tape")
        if self._consumed:
            raise TapeError("tape already consumed by backward(); reset() it first")
        self._consumed = True

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        holders: dict[int, Tensor] = {id(loss): loss}
        produced = {id(n.out) for n in self.nodes}

        for node in reversed(self.nodes):
            g = grads.pop(id(node.out), None)
            holders.pop(id(node.out), None)
            if g is None:
                continue  # not on the path to the loss
            for parent, vjp in zip(node.parents, node.vjps):
                if vjp is None or not parent.requires_grad:
                    continue
                pg = vjp(g)
                pid = id(parent)
                if pid in grads:
                    grads[pid] = grads[pid] + pg
                else:
                    grads[pid] = pg
                    holders[pid] = parent

        # Whatever is left was never produced by a node on this tape: leaves.
        for pid, g in grads.items():
            t = holders[pid]
            if pid in produced or not t.requires_grad:
                continue
            t.grad = g if t.grad is None else t.grad + g


def active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def backward(loss: Tensor) -> None:
    """Run reverse-mode accumulation from a scalar loss to every leaf."""
    if loss._tape is None:
        raise TapeError("loss is not recorded on any tape")
    loss._tape.backward(loss)


def _record(out: Tensor, parents: tuple[Tensor, ...], vjps: tuple) -> Tensor:
    tape = active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape.record(out, parents, vjps)
    return out


# ---------------------------------------------------------------------------
# broadcasting helpers (same rank, size-1 stretch only)

def _check_broadcast(sa: tuple[int, ...], sb: tuple[int, ...]) -> None:
    if len(sa) != len(sb):
        raise TensorError(f"rank mismatch {sa} vs {sb} (no implicit rank promotion)")
    for da, db in zip(sa, sb):
        if da != db and da != 1 and db != 1:
            raise TensorError(f"shapes {sa} and {sb} are not broadcast-compatible")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# arithmetic

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a.shape, b.shape)
    out = _make(a.data + b.data, False)
    return _record(out, (a, b), (lambda g: _unbroadcast(g, a.shape),
                                 lambda g: _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a.shape, b.shape)
    out = _make(a.data - b.data, False)
    return _record(out, (a, b), (lambda g: _unbroadcast(g, a.shape),
                                 lambda g: _unbroadcast(-g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a.shape, b.shape)
    out = _make(a.data * b.data, False)
    return _record(out, (a, b), (lambda g: _unbroadcast(g * b.data, a.shape),
                                 lambda g: _unbroadcast(g * a.data, b.shape)))


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a.shape, b.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        data = a.data / b.data
    if not np.all(np.isfinite(data)):
        raise TensorError("div produced non-finite values")
    out = _make(data, False)
    return _record(out, (a, b), (
        lambda g: _unbroadcast(g / b.data, a.shape),
        lambda g: _unbroadcast(-g * a.data / (b.data * b.data), b.shape)))


def neg(a: Tensor) -> Tensor:
    return _record(_make(-a.data, False), (a,), (lambda g: -g,))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _record(_make(a.data * c, False), (a,), (lambda g: g * c,))


def add_const(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _record(_make(a.data + c, False), (a,), (lambda g: g,))


# ---------------------------------------------------------------------------
# nonlinearities

def sigmoid(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        y = 1.0 / (1.0 + np.exp(-a.data))
    out = _make(y, False)
    return _record(out, (a,), (lambda g: g * y * (1.0 - y),))


def relu(a: Tensor) -> Tensor:
    y = np.maximum(a.data, 0.0)
    out = _make(y, False)
    return _record(out, (a,), (lambda g: g * (a.data > 0.0),))


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    y = np.clip(a.data, lo, hi)
    out = _make(y, False)
    mask = (a.data >= lo) & (a.data <= hi)
    return _record(out, (a,), (lambda g: g * mask,))


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        y = np.exp(a.data)
    if not np.all(np.isfinite(y)):
        raise TensorError("exp overflowed")
    out = _make(y, False)
    return _record(out, (a,), (lambda g: g * y,))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise TensorError("log needs strictly positive input")
    y = np.log(a.data)
    out = _make(y, False)
    return _record(out, (a,), (lambda g: g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    if np.any(a.data < 0.0):
        raise TensorError("sqrt needs nonnegative input")
    y = np.sqrt(a.data)
    out = _make(y, False)
    return _record(out, (a,), (lambda g: g * 0.5 / np.maximum(y, 1e-300),))


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise TensorError("matmul is 2-D only")
    if a.shape[1] != b.shape[0]:
        raise TensorError(f"matmul inner dims disagree: {a.shape} @ {b.shape}")
    out = _make(_kernels.matmul(a.data, b.data), False)

    def vjp_a(g: np.ndarray) -> np.ndarray:
        return _kernels.matmul(np.ascontiguousarray(g), np.ascontiguousarray(b.data.T))

    def vjp_b(g: np.ndarray) -> np.ndarray:
        return _kernels.matmul(np.ascontiguousarray(a.data.T), np.ascontiguousarray(g))

    return _record(out, (a, b), (vjp_a, vjp_b))


def transpose2d(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise TensorError("transpose2d is 2-D only")
    out = _make(np.ascontiguousarray(a.data.T), False)
    return _record(out, (a,), (lambda g: np.ascontiguousarray(g.T),))


def softmax(a: Tensor, axis: int) -> Tensor:
    nd = a.data.ndim
    if not (-nd <= axis < nd):
        raise TensorError(f"softmax axis {axis} invalid for shape {a.shape}")
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    out = _make(y, False)

    def vjp(g: np.ndarray) -> np.ndarray:
        return y * (g - (g * y).sum(axis=axis, keepdims=True))

    return _record(out, (a,), (vjp,))


# ---------------------------------------------------------------------------
# shape ops

def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = _make(np.ascontiguousarray(a.data.reshape(shape)), False)
    return _record(out, (a,), (lambda g: g.reshape(a.shape),))


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise TensorError("concat of nothing")
    out = _make(np.concatenate([t.data for t in tensors], axis=axis), False)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def make_vjp(i: int):
        sl = [slice(None)] * out.data.ndim
        sl[axis] = slice(int(offsets[i]), int(offsets[i + 1]))
        sl = tuple(sl)
        return lambda g: np.ascontiguousarray(g[sl])

    return _record(out, tuple(tensors), tuple(make_vjp(i) for i in range(len(tensors))))


def gather_rows(a: Tensor, idx) -> Tensor:
    """Select rows of a 2-D tensor; duplicate indices accumulate in the vjp."""
    if a.data.ndim != 2:
        raise TensorError("gather_rows is 2-D only")
    idx = np.asarray(idx, dtype=np.intp)
    if idx.ndim != 1:
        raise TensorError("gather_rows needs a flat index list")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise TensorError("gather_rows index out of range")
    out = _make(np.ascontiguousarray(a.data[idx]), False)

    def vjp(g: np.ndarray) -> np.ndarray:
        z = np.zeros_like(a.data)
        np.add.at(z, idx, g)
        return z

    return _record(out, (a,), (vjp,))


def slice_cols(a: Tensor, start: int, length: int) -> Tensor:
    if a.data.ndim != 2:
        raise TensorError("slice_cols is 2-D only")
    if start < 0 or start + length > a.shape[1]:
        raise TensorError("slice_cols out of range")
    out = _make(np.ascontiguousarray(a.data[:, start:start + length]), False)

    def vjp(g: np.ndarray) -> np.ndarray:
        z = np.zeros_like(a.data)
        z[:, start:start + length] = g
        return z

    return _record(out, (a,), (vjp,))


# ---------------------------------------------------------------------------
# reductions

def _axis_tuple(axis, nd: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(nd))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % nd for ax in axis)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _axis_tuple(axis, a.data.ndim)
    out = _make(a.data.sum(axis=axes, keepdims=keepdims), False)

    def vjp(g: np.ndarray) -> np.ndarray:
        if not keepdims:
            g = np.expand_dims(g, axes)
        return np.broadcast_to(g, a.shape).copy()

    return _record(out, (a,), (vjp,))


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _axis_tuple(axis, a.data.ndim)
    n = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    out = _make(a.data.mean(axis=axes, keepdims=keepdims), False)

    def vjp(g: np.ndarray) -> np.ndarray:
        if not keepdims:
            g = np.expand_dims(g, axes)
        return np.broadcast_to(g / n, a.shape).copy()

    return _record(out, (a,), (vjp,))


def detach(a: Tensor) -> Tensor:
    return _make(a.data, False)


# ---------------------------------------------------------------------------
# losses (scalar, mean-reduced)

def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise TensorError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def mse(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "mse")
    d = a.data - b.data
    n = d.size
    out = _make(np.asarray((d * d).sum() / n), False)
    return _record(out, (a, b), (lambda g: g * 2.0 * d / n,
                                 lambda g: g * (-2.0) * d / n))


def l1(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "l1")
    d = a.data - b.data
    n = d.size
    out = _make(np.asarray(np.abs(d).sum() / n), False)
    s = np.sign(d)
    return _record(out, (a, b), (lambda g: g * s / n,
                                 lambda g: g * (-s) / n))


def bce(p: Tensor, y: Tensor) -> Tensor:
    """Binary cross-entropy on probabilities; p must lie strictly in (0, 1)."""
    _check_same_shape(p, y, "bce")
    if np.any(p.data <= 0.0) or np.any(p.data >= 1.0):
        raise TensorError("bce: probabilities must lie strictly in (0, 1)")
    if not np.all((y.data == 0.0) | (y.data == 1.0)):
        raise TensorError("bce: targets must be 0 or 1")
    n = p.data.size
    val = -(y.data * np.log(p.data) + (1.0 - y.data) * np.log(1.0 - p.data)).sum() / n
    out = _make(np.asarray(val), False)

    def vjp(g: np.ndarray) -> np.ndarray:
        return g * ((1.0 - y.data) / (1.0 - p.data) - y.data / p.data) / n

    return _record(out, (p, y), (vjp, None))


def bce_with_logits(z: Tensor, y: Tensor) -> Tensor:
    """Stable BCE computed in logit space: mean(softplus(z) - y*z)."""
    _check_same_shape(z, y, "bce_with_logits")
    if not np.all((y.data == 0.0) | (y.data == 1.0)):
        raise TensorError("bce_with_logits: targets must be 0 or 1")
    n = z.data.size
    val = (np.logaddexp(0.0, z.data) - y.data * z.data).sum() / n
    out = _make(np.asarray(val), False)

    def vjp(g: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore"):
            p = 1.0 / (1.0 + np.exp(-z.data))
        return g * (p - y.data) / n

    return _record(out, (z, y), (vjp, None))


# ---------------------------------------------------------------------------
# gradient verification

def grad_check(f, x: Tensor, h: float = 1e-5) -> float:
    """Compare the taped gradient of scalar-valued ``f`` at ``x`` against
    central finite differences.

    Returns max over coordinates of |analytic - numeric| / max(1, |analytic|).
    ``x`` is restored on exit; ``f`` is evaluated off-tape for the differences.
    """
    if not x.requires_grad:
        raise TensorError("grad_check needs x.requires_grad")
    x.grad = None
    with Tape() as tape:
        out = f(x)
    if out.data.size != 1:
        raise TensorError("grad_check: f must be scalar-valued")
    tape.backward(out)
    if x.grad is None:
        raise TensorError("grad_check: f does not depend on x")
    analytic = x.grad.ravel().copy()

    flat = x.data.ravel()
    worst = 0.0
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = f(x).item()
        flat[i] = orig - h
        f_minus = f(x).item()
        flat[i] = orig
        numeric = (f_plus - f_minus) / (2.0 * h)
        err = abs(analytic[i] - numeric) / max(1.0, abs(analytic[i]))
        worst = max(worst, err)
    return worst
