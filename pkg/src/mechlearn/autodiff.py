"""Tape-based reverse-mode automatic differentiation over dense float64 arrays.

Eager recording: primitives execute immediately with numpy and, when an
active :class:`Tape` exists and any input requires gradients, append a node
to that tape. ``tape.backward(loss)`` walks the nodes in exact reverse
recording order and accumulates gradients into ``Tensor.grad``.

Conventions (fixed and tested):
  * relu/minimum/max-over-axis subgradients at a kink route the full
    gradient to the selected branch; ties select the first argument
    (minimum) or the first index (max over axis).
  * ``absval`` has derivative 0 at 0.
  * ``log`` adds ``eps`` to its input before taking the logarithm and
    rejects negative inputs.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "DomainError",
    "as_tensor",
    "matmul",
    "add",
    "subtract",
    "multiply",
    "divide",
    "negative",
    "relu",
    "tanh",
    "sigmoid",
    "exp",
    "log",
    "softmax",
    "minimum",
    "tsum",
    "tmean",
    "tmax",
    "absval",
    "reshape",
    "slice_axis",
    "batch_norm",
    "binary_cross_entropy",
]


class ShapeError(ValueError):
    """Raised when operand shapes do not conform to an op's rule."""


class DomainError(ValueError):
    """Raised when an op is applied outside its numeric domain."""


class Tensor:
    """Dense float64 array with an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar; scalars and ndarrays are wrapped as constants
    def __add__(self, other):
        return add(self, as_tensor(other))

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return subtract(self, as_tensor(other))

    def __rsub__(self, other):
        return subtract(as_tensor(other), self)

    def __mul__(self, other):
        return multiply(self, as_tensor(other))

    def __rmul__(self, other):
        return multiply(as_tensor(other), self)

    def __truediv__(self, other):
        return divide(self, as_tensor(other))

    def __rtruediv__(self, other):
        return divide(as_tensor(other), self)

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))

    def __neg__(self):
        return negative(self)


def as_tensor(value) -> Tensor:
    """Wrap scalars/arrays as constant tensors; pass tensors through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


class _Node:
    __slots__ = ("inputs", "output", "backward_fn")

    def __init__(self, inputs, output, backward_fn):
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


_TAPE_STACK: list["Tape"] = []


class Tape:
    """Ordered record of primitive ops; inputs always precede their users."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self._outputs: set[int] = set()

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self

    def __len__(self) -> int:
        return len(self.nodes)

    def owns(self, t: Tensor) -> bool:
        return id(t) in self._outputs

    def backward(self, loss: Tensor) -> None:
        """Populate ``grad`` on every requires_grad tensor reachable from loss.

        ``loss`` must be a scalar produced on this tape; d(loss)/d(loss) = 1.
        """
        if loss.data.shape != ():
            raise ShapeError(
                f"backward: loss must be scalar, got shape {loss.data.shape}"
            )
        if not self.owns(loss):
            raise ValueError("backward: loss was not recorded on this tape")
        loss.grad = np.ones((), dtype=np.float64)
        for node in reversed(self.nodes):
            g = node.output.grad
            if g is None:
                continue
            for t, gi in zip(node.inputs, node.backward_fn(g)):
                if gi is None or not t.requires_grad:
                    continue
                if t.grad is None:
                    t.grad = np.zeros_like(t.data)
                t.grad += gi


def _record(inputs, output, backward_fn) -> Tensor:
    output.requires_grad = any(t.requires_grad for t in inputs)
    if output.requires_grad and _TAPE_STACK:
        tape = _TAPE_STACK[-1]
        tape.nodes.append(_Node(tuple(inputs), output, backward_fn))
        tape._outputs.add(id(output))
    return output


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward op."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast")


# ---------------------------------------------------------------------------
# binary arithmetic


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
    out = Tensor(a.data @ b.data)

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _record((a, b), out, backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    out = Tensor(a.data + b.data)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record((a, b), out, backward)


def subtract(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("subtract", a, b)
    out = Tensor(a.data - b.data)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record((a, b), out, backward)


def multiply(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("multiply", a, b)
    out = Tensor(a.data * b.data)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record((a, b), out, backward)


def divide(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("divide", a, b)
    if np.any(b.data == 0.0):
        raise DomainError("divide: denominator contains zero")
    out = Tensor(a.data / b.data)

    def backward(g):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _record((a, b), out, backward)


def negative(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = Tensor(-a.data)
    return _record((a,), out, lambda g: (-g,))


# ---------------------------------------------------------------------------
# elementwise nonlinearities


def relu(a: Tensor) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0.0
    out = Tensor(np.where(mask, a.data, 0.0))
    return _record((a,), out, lambda g: (g * mask,))


def tanh(a: Tensor) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    out = Tensor(y)
    return _record((a,), out, lambda g: (g * (1.0 - y * y),))


def sigmoid(a: Tensor) -> Tensor:
    a = as_tensor(a)
    x = a.data
    # numerically stable split by sign
    y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = Tensor(y)
    return _record((a,), out, lambda g: (g * y * (1.0 - y),))


def exp(a: Tensor) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)
    out = Tensor(y)
    return _record((a,), out, lambda g: (g * y,))


def log(a: Tensor, eps: float = 1e-12) -> Tensor:
    """Natural log with epsilon guard: log(x + eps); rejects x < 0."""
    a = as_tensor(a)
    if np.any(a.data < 0.0):
        raise DomainError("log: input contains negative values")
    shifted = a.data + eps
    out = Tensor(np.log(shifted))
    return _record((a,), out, lambda g: (g / shifted,))


def absval(a: Tensor) -> Tensor:
    a = as_tensor(a)
    s = np.sign(a.data)
    out = Tensor(np.abs(a.data))
    return _record((a,), out, lambda g: (g * s,))


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise min of two same-shape tensors; ties select ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"minimum: shapes {a.shape} and {b.shape} differ")
    take_a = a.data <= b.data
    out = Tensor(np.where(take_a, a.data, b.data))

    def backward(g):
        return g * take_a, g * ~take_a

    return _record((a, b), out, backward)


# ---------------------------------------------------------------------------
# reductions and reshaping


def softmax(a: Tensor, axis: int) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def backward(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - inner),)

    return _record((a,), out, backward)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _record((a,), out, backward)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.mean(axis=axis, keepdims=keepdims))
    count = a.size if axis is None else np.prod(
        [a.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))]
    )

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape) / count,)

    return _record((a,), out, backward)


def tmax(a: Tensor, axis: int) -> Tensor:
    """Max over one axis; gradient flows to the first maximal index."""
    a = as_tensor(a)
    idx = np.argmax(a.data, axis=axis)
    out = Tensor(np.take_along_axis(a.data, np.expand_dims(idx, axis), axis).squeeze(axis))

    def backward(g):
        grad = np.zeros_like(a.data)
        np.put_along_axis(grad, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis)
        return (grad,)

    return _record((a,), out, backward)


def reshape(a: Tensor, shape) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.reshape(shape))
    return _record((a,), out, lambda g: (g.reshape(a.shape),))


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Narrow one axis to [start, stop); gradient scatters back as zeros-padded."""
    a = as_tensor(a)
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    out = Tensor(a.data[index].copy())

    def backward(g):
        grad = np.zeros_like(a.data)
        grad[index] = g
        return (grad,)

    return _record((a,), out, backward)


# ---------------------------------------------------------------------------
# batch normalization


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    train: bool,
    momentum: float = 0.9,
    eps: float = 1e-5,
) -> Tensor:
    """Batch normalization over axis 0 of a 2-d input.

    Train mode normalizes by batch statistics and updates the running
    arrays in place (``new = momentum * old + (1 - momentum) * batch``).
    Eval mode is a pure affine map using the running statistics.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.ndim != 2 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeError(
            f"batch_norm: input {x.shape}, gamma {gamma.shape}, beta {beta.shape}"
        )
    if train:
        mu = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mu
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        mu = running_mean
        var = running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out = Tensor(gamma.data * xhat + beta.data)

    if train:
        n = x.shape[0]

        def backward(g):
            dgamma = (g * xhat).sum(axis=0)
            dbeta = g.sum(axis=0)
            dx = (gamma.data * inv_std / n) * (
                n * g - dbeta - xhat * dgamma
            )
            return dx, dgamma, dbeta

    else:

        def backward(g):
            dgamma = (g * xhat).sum(axis=0)
            dbeta = g.sum(axis=0)
            dx = g * gamma.data * inv_std
            return dx, dgamma, dbeta

    return _record((x, gamma, beta), out, backward)


def binary_cross_entropy(pred: Tensor, target: Tensor, eps: float = 1e-12) -> Tensor:
    """Mean BCE of predictions in (0,1) against {0,1} targets (composite op)."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"binary_cross_entropy: {pred.shape} vs {target.shape}")
    pos = multiply(target, log(pred, eps))
    neg = multiply(subtract(as_tensor(1.0), target), log(subtract(as_tensor(1.0), pred), eps))
    return negative(tmean(add(pos, neg)))
