"""Dense float64 tensors with reverse-mode automatic differentiation.

Every differentiable computation in this package is built from the
primitives defined here. Each primitive

* computes its forward value with numpy (row-major float64 throughout),
* verifies the output is finite (NaN/Inf from finite inputs raises
  :class:`~evistorm.errors.NumericError` at the op that produced it),
* tallies its cost against the active :class:`FlopCounter`, and
* when gradient recording is enabled and any input requires grad,
  attaches a backward closure to the output.

Gradients are obtained by :func:`backward`, which replays the recorded
operations in reverse topological order (a :class:`GradTape`). Tensors
are immutable values after creation and operations are pure, so forward
evaluation is safe from multiple threads; a tape is built per result and
never shared.
"""

from __future__ import annotations

from contextvars import ContextVar
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import GraphError, NumericError, ShapeError
from .flops import tally

_GRAD_ENABLED: ContextVar[bool] = ContextVar("grad_enabled", default=True)


class no_grad:
    """Context manager that disables gradient recording (inference mode)."""

    def __enter__(self):
        self._token = _GRAD_ENABLED.set(False)
        return self

    def __exit__(self, *exc):
        _GRAD_ENABLED.reset(self._token)


class _Record:
    """One taped primitive: inputs, saved activations, and its backward.

    ``backward(grad_out)`` returns one gradient array (or None) per input,
    in input order.
    """

    __slots__ = ("op", "inputs", "backward")

    def __init__(self, op: str, inputs: tuple["Tensor", ...],
                 backward: Callable[[np.ndarray], tuple]):
        self.op = op
        self.inputs = inputs
        self.backward = backward


class Tensor:
    """A dense n-dimensional float64 array, optionally tracked for autodiff."""

    __slots__ = ("data", "requires_grad", "grad", "_record")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._record: _Record | None = None

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _scalar_error(self)

    def numpy(self) -> np.ndarray:
        """Read-only view of the underlying array."""
        return self.data

    def detach(self) -> "Tensor":
        """A new leaf sharing this tensor's values, outside any graph."""
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{grad})"

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)


def _scalar_error(t: Tensor):
    raise ShapeError(f"expected a scalar tensor, got shape {t.shape}")


def as_tensor(value) -> Tensor:
    """Coerce numbers/arrays to constant tensors; pass tensors through."""
    return value if isinstance(value, Tensor) else Tensor(value)


def _finite_or_raise(op: str, out: np.ndarray) -> None:
    if not np.all(np.isfinite(out)):
        raise NumericError(f"non-finite values produced by {op!r}")


def _result(op: str, data: np.ndarray, flops: int,
            inputs: tuple[Tensor, ...],
            backward: Callable[[np.ndarray], tuple] | None) -> Tensor:
    """Assemble an op result: finite check, flop tally, optional taping."""
    _finite_or_raise(op, data)
    tally(op, flops)
    out = Tensor(data)
    if (
        backward is not None
        and _GRAD_ENABLED.get()
        and any(t.requires_grad or t._record is not None for t in inputs)
    ):
        out.requires_grad = True
        out._record = _Record(op, inputs, backward)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data
    return _result(
        "add", out, out.size, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data
    return _result(
        "sub", out, out.size, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data
    return _result(
        "mul", out, out.size, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data
    return _result(
        "div", out, out.size, (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _result("neg", -a.data, a.size, (a,), lambda g: (-g,))


def power(a, exponent: float) -> Tensor:
    """Elementwise ``a ** exponent`` for a scalar constant exponent."""
    a = as_tensor(a)
    p = float(exponent)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = a.data ** p
    return _result(
        "pow", out, out.size, (a,),
        lambda g: (g * p * a.data ** (p - 1.0),),
    )


def square(a) -> Tensor:
    a = as_tensor(a)
    out = a.data * a.data
    return _result("square", out, out.size, (a,), lambda g: (g * 2.0 * a.data,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _result("exp", out, out.size, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return _result("log", out, out.size, (a,), lambda g: (g / a.data,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(invalid="ignore"):
        out = np.sqrt(a.data)
    return _result("sqrt", out, out.size, (a,), lambda g: (g * 0.5 / out,))


def absolute(a) -> Tensor:
    """Elementwise |a|; the subgradient at 0 is taken as 0."""
    a = as_tensor(a)
    out = np.abs(a.data)
    return _result("abs", out, out.size, (a,), lambda g: (g * np.sign(a.data),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _result("tanh", out, out.size, (a,), lambda g: (g * (1.0 - out * out),))


def clamp_min(a, floor: float) -> Tensor:
    """Elementwise max(a, floor); gradient passes only where a > floor."""
    a = as_tensor(a)
    out = np.maximum(a.data, floor)
    mask = a.data > floor
    return _result("clamp_min", out, out.size, (a,), lambda g: (g * mask,))


# ---------------------------------------------------------------------
# linear algebra, reductions, shape ops
# ---------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Matrix product with numpy batching over leading axes.

    Both operands must have ndim >= 2; leading batch axes broadcast.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs 2-D (or batched) operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.matmul(a.data, b.data)
    m, k, n = a.shape[-2], a.shape[-1], b.shape[-1]
    batch = int(np.prod(out.shape[:-2], dtype=np.int64)) if out.ndim > 2 else 1
    flops = 2 * m * k * n * batch

    def _back(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result("matmul", out, flops, (a, b), _back)


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def _back(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        g_exp = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g_exp, a.shape).copy(),)

    return _result("sum", np.asarray(out), a.size, (a,), _back)


def reduce_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = np.mean(a.data, axis=axis, keepdims=keepdims)
    count = a.size if axis is None else a.size // int(np.prod(np.asarray(out.shape), dtype=np.int64) or 1)
    # reduction itself plus one divide per output element
    flops = a.size + np.asarray(out).size

    def _back(g):
        if axis is None:
            return (np.broadcast_to(g / a.size, a.shape).copy(),)
        g_exp = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g_exp / count, a.shape).copy(),)

    return _result("mean", np.asarray(out), flops, (a,), _back)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)
    return _result("reshape", out, 0, (a,), lambda g: (g.reshape(a.shape),))


def moveaxis(a, source: int, destination: int) -> Tensor:
    a = as_tensor(a)
    out = np.moveaxis(a.data, source, destination)
    return _result(
        "moveaxis", out, 0, (a,),
        lambda g: (np.moveaxis(g, destination, source),),
    )


def swap_last_axes(a) -> Tensor:
    """Transpose the trailing two axes (the matmul-transpose helper)."""
    a = as_tensor(a)
    out = np.swapaxes(a.data, -1, -2)
    return _result("swapaxes", out, 0, (a,), lambda g: (np.swapaxes(g, -1, -2),))


def take(a, key) -> Tensor:
    """Basic (non-fancy) indexing with gradient scatter-back."""
    a = as_tensor(a)
    out = a.data[key]

    def _back(g):
        full = np.zeros(a.shape)
        full[key] = g
        return (full,)

    return _result("take", np.asarray(out), 0, (a,), _back)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    out = np.stack([t.data for t in tensors], axis=axis)

    def _back(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _result("stack", out, 0, tensors, _back)


# ---------------------------------------------------------------------
# softmax (max-subtracted for stability)
# ---------------------------------------------------------------------

def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"softmax axis {axis} invalid for shape {a.shape}")
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def _back(g):
        inner = np.sum(g * out, axis=axis, keepdims=True)
        return ((g - inner) * out,)

    # convention: exp + sum + divide, one of each per element
    return _result("softmax", out, 3 * out.size, (a,), _back)


# ---------------------------------------------------------------------
# tape replay
# ---------------------------------------------------------------------

class GradTape:
    """Topologically ordered record of the primitives behind one result.

    Replaying the tape backward accumulates a gradient for every
    ``requires_grad`` leaf exactly once per :meth:`gradients` call.
    """

    def __init__(self, result: Tensor):
        if result._record is None:
            raise GraphError(
                "tensor was not produced by recorded operations "
                "(created as a leaf or under no_grad)"
            )
        self.result = result
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(result, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            if node._record is not None:
                for parent in node._record.inputs:
                    if id(parent) not in seen and parent._record is not None:
                        stack.append((parent, False))
        self._order = order  # children come after all of their inputs

    def gradients(self, seed: np.ndarray | float = 1.0) -> dict[Tensor, np.ndarray]:
        """Reverse replay; returns {leaf tensor: gradient array}."""
        grads: dict[int, np.ndarray] = {id(self.result): np.broadcast_to(
            np.asarray(seed, dtype=np.float64), self.result.shape).copy()}
        leaf_grads: dict[Tensor, np.ndarray] = {}
        for node in reversed(self._order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            record = node._record
            input_grads = record.backward(g)
            for parent, pg in zip(record.inputs, input_grads):
                if pg is None:
                    continue
                if parent._record is None:
                    if parent.requires_grad:
                        if parent in leaf_grads:
                            leaf_grads[parent] = leaf_grads[parent] + pg
                        else:
                            leaf_grads[parent] = np.array(pg, dtype=np.float64, copy=True)
                else:
                    key = id(parent)
                    if key in grads:
                        grads[key] = grads[key] + pg
                    else:
                        grads[key] = np.array(pg, dtype=np.float64, copy=True)
        for leaf, g in leaf_grads.items():
            leaf.grad = g
        return leaf_grads


def backward(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Gradients of a scalar loss for every ``requires_grad`` leaf.

    Also stores each gradient on the leaf's ``.grad`` (overwriting any
    previous value; gradients do not accumulate across calls).
    """
    if loss.size != 1:
        raise ShapeError(f"backward expects a scalar loss, got shape {loss.shape}")
    return GradTape(loss).gradients()
