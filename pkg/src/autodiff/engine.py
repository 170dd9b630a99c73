"""
Reverse-mode differentiation over numpy arrays.

A ``DiffGraph`` records every node built through it in creation order, which is
a topological order because a node can only consume nodes that already exist.
``backpropagate`` walks that list backwards. Graphs are rebuilt for every
training step; ``Parameter`` leaves outlive them and accumulate gradients until
the optimiser consumes them.
"""

import logging
import math
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import erf

from src.errors import NonScalarLossError, NumericDomainError, ShapeMismatchError

logger = logging.getLogger(__name__)

LEAKY_SLOPE = 0.2
# Smallest sqrt value the backward pass divides by; the derivative is unbounded at 0.
SQRT_GRAD_FLOOR = 1e-12

Backward = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
Forward = Callable[..., Tuple[np.ndarray, Backward]]


class DiffNode:
    """A value in a differentiable computation plus its accumulated gradient."""

    __slots__ = ("value", "grad", "op", "parents", "requires_grad", "name", "_backward")

    def __init__(
        self,
        value: Any,
        op: str = "leaf",
        parents: Tuple["DiffNode", ...] = (),
        requires_grad: bool = False,
        name: Optional[str] = None,
        backward: Optional[Backward] = None,
    ) -> None:
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.op = op
        self.parents = parents
        self.requires_grad = requires_grad
        self.name = name
        self._backward = backward

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def gradient(self) -> np.ndarray:
        """Accumulated gradient, zeros when nothing has flowed into this node yet."""
        if self.grad is None:
            return np.zeros_like(self.value)
        return self.grad

    def accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64, copy=True)
        else:
            self.grad += grad

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.value.reshape(-1)[0])

    def __repr__(self) -> str:
        label = self.name or self.op
        return f"DiffNode({label}, shape={self.shape})"


class Parameter(DiffNode):
    """Persistent trainable leaf; ``requires_grad`` doubles as the trainable flag."""

    def __init__(self, value: Any, name: str, trainable: bool = True) -> None:
        super().__init__(np.array(value, dtype=np.float64, copy=True), "leaf", (), trainable, name)

    @property
    def trainable(self) -> bool:
        return self.requires_grad

    def freeze(self) -> None:
        self.requires_grad = False
        self.grad = None

    def unfreeze(self) -> None:
        self.requires_grad = True


# Primitive implementations -------------------------------------------------
#
# Each returns the forward value and a closure mapping the output gradient to
# one gradient (or None) per input.


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_check(op: str, a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise ShapeMismatchError(f"{op}: cannot combine shapes {a.shape} and {b.shape}") from e


def _expand_reduced(grad: np.ndarray, shape: Tuple[int, ...], axis: Any, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        grad = np.expand_dims(grad, tuple(a % len(shape) for a in axes))
    return np.broadcast_to(grad, shape)


def _add(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, Backward]:
    _broadcast_check("add", a, b)
    return a + b, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))


def _sub(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, Backward]:
    _broadcast_check("sub", a, b)
    return a - b, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))


def _mul(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, Backward]:
    _broadcast_check("mul", a, b)
    return a * b, lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape))


def _div(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, Backward]:
    _broadcast_check("div", a, b)
    if np.any(b == 0):
        raise NumericDomainError("div: division by zero")
    return a / b, lambda g: (_unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape))


def _matmul(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, Backward]:
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError as e:
        raise ShapeMismatchError(f"matmul: batch shapes {a.shape[:-2]} and {b.shape[:-2]} differ") from e

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        ga = g @ np.swapaxes(b, -1, -2)
        gb = np.swapaxes(a, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return a @ b, backward


def _depthwise_conv1d(x: np.ndarray, w: np.ndarray, padding: int = 0, stride: int = 1) -> Tuple[np.ndarray, Backward]:
    # Cross-correlation: out[..., c, t] = sum_j w[c, j] * x[..., c, t*stride + j - padding]
    squeeze = x.ndim == 1
    if squeeze:
        if w.ndim != 1:
            raise ShapeMismatchError(f"depthwise_conv1d: 1-D input needs a 1-D kernel, got {w.shape}")
        x, w = x[None, :], w[None, :]
    if w.ndim != 2 or x.shape[-2] != w.shape[0]:
        raise ShapeMismatchError(f"depthwise_conv1d: kernel {w.shape} does not match channels of {x.shape}")
    if padding < 0 or stride < 1:
        raise ShapeMismatchError(f"depthwise_conv1d: invalid padding={padding} stride={stride}")
    taps = w.shape[1]
    length = x.shape[-1]
    out_len = (length + 2 * padding - taps) // stride + 1
    if out_len < 1:
        raise ShapeMismatchError(f"depthwise_conv1d: kernel of {taps} taps longer than padded input {length}")

    xp = np.pad(x, [(0, 0)] * (x.ndim - 1) + [(padding, padding)])
    span = stride * (out_len - 1) + 1
    out = np.zeros(x.shape[:-1] + (out_len,))
    for j in range(taps):
        out += w[:, j : j + 1] * xp[..., j : j + span : stride]

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        g2 = g[None, :] if squeeze else g
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(w)
        reduce_axes = tuple(range(g2.ndim - 2)) + (g2.ndim - 1,)
        for j in range(taps):
            gxp[..., j : j + span : stride] += w[:, j : j + 1] * g2
            gw[:, j] = (g2 * xp[..., j : j + span : stride]).sum(axis=reduce_axes)
        gx = gxp[..., padding : padding + length]
        if squeeze:
            return gx[0], gw[0]
        return gx, gw

    return (out[0] if squeeze else out), backward


def _transpose(x: np.ndarray, axes: Optional[Sequence[int]] = None) -> Tuple[np.ndarray, Backward]:
    perm = tuple(range(x.ndim))[::-1] if axes is None else tuple(axes)
    if sorted(a % x.ndim for a in perm) != list(range(x.ndim)):
        raise ShapeMismatchError(f"transpose: {perm} is not a permutation of {x.ndim} axes")
    inverse = tuple(np.argsort([a % x.ndim for a in perm]))
    return np.transpose(x, perm), lambda g: (np.transpose(g, inverse),)


def _reshape(x: np.ndarray, shape: Sequence[int] = ()) -> Tuple[np.ndarray, Backward]:
    try:
        out = x.reshape(tuple(shape))
    except ValueError as e:
        raise ShapeMismatchError(f"reshape: cannot view {x.shape} as {tuple(shape)}") from e
    return out, lambda g: (g.reshape(x.shape),)


def _concat(*xs: np.ndarray, axis: int = 0) -> Tuple[np.ndarray, Backward]:
    try:
        out = np.concatenate(xs, axis=axis)
    except ValueError as e:
        raise ShapeMismatchError(f"concat: {[x.shape for x in xs]} along axis {axis}") from e
    cuts = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return out, lambda g: tuple(np.split(g, cuts, axis=axis))


def _slice(x: np.ndarray, index: Any = ()) -> Tuple[np.ndarray, Backward]:
    try:
        out = np.array(x[index], copy=True)
    except IndexError as e:
        raise ShapeMismatchError(f"slice: {index!r} out of range for {x.shape}") from e

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        full = np.zeros_like(x)
        np.add.at(full, index, g)
        return (full,)

    return out, backward


def _softmax_values(x: np.ndarray) -> np.ndarray:
    shifted = np.exp(x - x.max(axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True)


def _softmax(x: np.ndarray) -> Tuple[np.ndarray, Backward]:
    s = _softmax_values(x)
    return s, lambda g: (s * (g - (g * s).sum(axis=-1, keepdims=True)),)


def _log_softmax(x: np.ndarray) -> Tuple[np.ndarray, Backward]:
    shifted = x - x.max(axis=-1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    s = np.exp(out)
    return out, lambda g: (g - s * g.sum(axis=-1, keepdims=True),)


def _leaky_relu(x: np.ndarray, slope: float = LEAKY_SLOPE) -> Tuple[np.ndarray, Backward]:
    return np.where(x > 0, x, slope * x), lambda g: (g * np.where(x > 0, 1.0, slope),)


def _relu(x: np.ndarray) -> Tuple[np.ndarray, Backward]:
    return np.maximum(x, 0.0), lambda g: (g * (x > 0),)


def _gelu(x: np.ndarray) -> Tuple[np.ndarray, Backward]:
    # exact form x * Phi(x)
    cdf = 0.5 * (1.0 + erf(x / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return x * cdf, lambda g: (g * (cdf + x * pdf),)


def _exp(x: np.ndarray) -> Tuple[np.ndarray, Backward]:
    out = np.exp(x)
    return out, lambda g: (g * out,)


def _log(x: np.ndarray) -> Tuple[np.ndarray, Backward]:
    if np.any(x <= 0):
        raise NumericDomainError("log of a non-positive value")
    return np.log(x), lambda g: (g / x,)


def _sqrt(x: np.ndarray) -> Tuple[np.ndarray, Backward]:
    if np.any(x < 0):
        raise NumericDomainError("sqrt of a negative value")
    out = np.sqrt(x)
    return out, lambda g: (g / (2.0 * np.maximum(out, SQRT_GRAD_FLOOR)),)


def _abs(x: np.ndarray) -> Tuple[np.ndarray, Backward]:
    return np.abs(x), lambda g: (g * np.sign(x),)


def _mean(x: np.ndarray, axis: Any = None, keepdims: bool = False) -> Tuple[np.ndarray, Backward]:
    out = x.mean(axis=axis, keepdims=keepdims)
    count = x.size // max(np.size(out), 1)
    return out, lambda g: (_expand_reduced(g, x.shape, axis, keepdims) / count,)


def _sum(x: np.ndarray, axis: Any = None, keepdims: bool = False) -> Tuple[np.ndarray, Backward]:
    return x.sum(axis=axis, keepdims=keepdims), lambda g: (_expand_reduced(g, x.shape, axis, keepdims),)


def _frobenius_sq(x: np.ndarray, axis: Any = None, keepdims: bool = False) -> Tuple[np.ndarray, Backward]:
    out = (x * x).sum(axis=axis, keepdims=keepdims)
    return out, lambda g: (2.0 * x * _expand_reduced(g, x.shape, axis, keepdims),)


def _scale(x: np.ndarray, factor: float = 1.0) -> Tuple[np.ndarray, Backward]:
    return x * factor, lambda g: (g * factor,)


def _outer(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, Backward]:
    if a.ndim != 1 or b.ndim != 1:
        raise ShapeMismatchError(f"outer: expects vectors, got {a.shape} and {b.shape}")
    return np.outer(a, b), lambda g: (g @ b, g.T @ a)


def _pairwise_sqdist(x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, Backward]:
    # ||x_i||^2 + ||y_j||^2 - 2 x_i.y_j, clamped at zero against round-off
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ShapeMismatchError(f"pairwise_sqdist: expects (n, d) and (m, d), got {x.shape} and {y.shape}")
    raw = (x * x).sum(axis=1)[:, None] + (y * y).sum(axis=1)[None, :] - 2.0 * (x @ y.T)
    positive = raw > 0

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        gm = g * positive
        gx = 2.0 * (gm.sum(axis=1)[:, None] * x - gm @ y)
        gy = 2.0 * (gm.sum(axis=0)[:, None] * y - gm.T @ x)
        return gx, gy

    return np.where(positive, raw, 0.0), backward


PRIMITIVES: Dict[str, Forward] = {
    "add": _add,
    "sub": _sub,
    "mul": _mul,
    "div": _div,
    "matmul": _matmul,
    "depthwise_conv1d": _depthwise_conv1d,
    "transpose": _transpose,
    "reshape": _reshape,
    "concat": _concat,
    "slice": _slice,
    "softmax": _softmax,
    "log_softmax": _log_softmax,
    "leaky_relu": _leaky_relu,
    "gelu": _gelu,
    "relu": _relu,
    "exp": _exp,
    "log": _log,
    "sqrt": _sqrt,
    "abs": _abs,
    "mean": _mean,
    "sum": _sum,
    "frobenius_sq": _frobenius_sq,
    "scale": _scale,
    "outer": _outer,
    "pairwise_sqdist": _pairwise_sqdist,
}


class DiffGraph:
    """
    Records nodes in creation order for one forward/backward pass.

    Args:
        seed: Seed of the graph-local random generator
        track: When False no gradient bookkeeping is done (inference mode)
    """

    def __init__(self, seed: int = 0, track: bool = True) -> None:
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.track = track
        self.nodes: List[DiffNode] = []
        self._members: set = set()

    def _register(self, node: DiffNode) -> DiffNode:
        if self.track and id(node) not in self._members:
            self._members.add(id(node))
            self.nodes.append(node)
        return node

    def constant(self, value: Any, name: Optional[str] = None) -> DiffNode:
        return self._register(DiffNode(value, "leaf", (), False, name))

    def leaf(self, value: Any, name: Optional[str] = None) -> DiffNode:
        """Create a gradient-tracking leaf owned by this graph."""
        return self._register(DiffNode(value, "leaf", (), self.track, name))

    def build_primitive(self, op: str, inputs: Sequence[DiffNode], **attrs: Any) -> DiffNode:
        """
        Apply a primitive to input nodes and register the result.

        Args:
            op: Primitive name, a key of ``PRIMITIVES``
            inputs: Input nodes
            **attrs: Primitive attributes (axis, padding, factor, ...)

        Returns:
            Result node
        """
        forward = PRIMITIVES.get(op)
        if forward is None:
            raise ValueError(f"Unknown primitive: {op}")
        for node in inputs:
            if not isinstance(node, DiffNode):
                raise TypeError(f"{op}: inputs must be DiffNode, got {type(node).__name__}")
            self._register(node)

        value, backward = forward(*(node.value for node in inputs), **attrs)
        value = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise NumericDomainError(f"{op} produced non-finite values")

        requires = self.track and any(node.requires_grad for node in inputs)
        if requires:
            node = DiffNode(value, op, tuple(inputs), True, backward=backward)
        else:
            node = DiffNode(value, op)
        return self._register(node)

    # Convenience wrappers ---------------------------------------------------

    def add(self, a: DiffNode, b: DiffNode) -> DiffNode:
        return self.build_primitive("add", [a, b])

    def sub(self, a: DiffNode, b: DiffNode) -> DiffNode:
        return self.build_primitive("sub", [a, b])

    def mul(self, a: DiffNode, b: DiffNode) -> DiffNode:
        return self.build_primitive("mul", [a, b])

    def div(self, a: DiffNode, b: DiffNode) -> DiffNode:
        return self.build_primitive("div", [a, b])

    def matmul(self, a: DiffNode, b: DiffNode) -> DiffNode:
        return self.build_primitive("matmul", [a, b])

    def conv1d(self, x: DiffNode, kernel: DiffNode, padding: int = 0, stride: int = 1) -> DiffNode:
        return self.build_primitive("depthwise_conv1d", [x, kernel], padding=padding, stride=stride)

    def transpose(self, x: DiffNode, axes: Optional[Sequence[int]] = None) -> DiffNode:
        return self.build_primitive("transpose", [x], axes=axes)

    def reshape(self, x: DiffNode, shape: Sequence[int]) -> DiffNode:
        return self.build_primitive("reshape", [x], shape=tuple(shape))

    def concat(self, xs: Sequence[DiffNode], axis: int = 0) -> DiffNode:
        return self.build_primitive("concat", list(xs), axis=axis)

    def slice(self, x: DiffNode, index: Any) -> DiffNode:
        return self.build_primitive("slice", [x], index=index)

    def softmax(self, x: DiffNode) -> DiffNode:
        return self.build_primitive("softmax", [x])

    def log_softmax(self, x: DiffNode) -> DiffNode:
        return self.build_primitive("log_softmax", [x])

    def leaky_relu(self, x: DiffNode, slope: float = LEAKY_SLOPE) -> DiffNode:
        return self.build_primitive("leaky_relu", [x], slope=slope)

    def gelu(self, x: DiffNode) -> DiffNode:
        return self.build_primitive("gelu", [x])

    def relu(self, x: DiffNode) -> DiffNode:
        return self.build_primitive("relu", [x])

    def exp(self, x: DiffNode) -> DiffNode:
        return self.build_primitive("exp", [x])

    def log(self, x: DiffNode) -> DiffNode:
        return self.build_primitive("log", [x])

    def sqrt(self, x: DiffNode) -> DiffNode:
        return self.build_primitive("sqrt", [x])

    def abs(self, x: DiffNode) -> DiffNode:
        return self.build_primitive("abs", [x])

    def mean(self, x: DiffNode, axis: Any = None, keepdims: bool = False) -> DiffNode:
        return self.build_primitive("mean", [x], axis=axis, keepdims=keepdims)

    def sum(self, x: DiffNode, axis: Any = None, keepdims: bool = False) -> DiffNode:
        return self.build_primitive("sum", [x], axis=axis, keepdims=keepdims)

    def frobenius_sq(self, x: DiffNode, axis: Any = None, keepdims: bool = False) -> DiffNode:
        return self.build_primitive("frobenius_sq", [x], axis=axis, keepdims=keepdims)

    def scale(self, x: DiffNode, factor: float) -> DiffNode:
        return self.build_primitive("scale", [x], factor=float(factor))

    def outer(self, a: DiffNode, b: DiffNode) -> DiffNode:
        return self.build_primitive("outer", [a, b])

    def pairwise_sqdist(self, x: DiffNode, y: DiffNode) -> DiffNode:
        return self.build_primitive("pairwise_sqdist", [x, y])


def backpropagate(graph: DiffGraph, loss: DiffNode) -> Dict[DiffNode, np.ndarray]:
    """
    Accumulate d(loss)/d(node) into every gradient-tracking node of the graph.

    Args:
        graph: Graph that built ``loss``
        loss: Scalar node

    Returns:
        Mapping from each gradient-tracking leaf to its accumulated gradient
    """
    if loss.value.size != 1:
        raise NonScalarLossError(f"Loss must be scalar, got shape {loss.shape}")

    loss.accumulate(np.ones_like(loss.value))
    for node in reversed(graph.nodes):
        if node._backward is None or node.grad is None:
            continue
        for parent, grad in zip(node.parents, node._backward(node.grad)):
            if grad is not None and parent.requires_grad:
                parent.accumulate(grad)

    return {
        node: node.grad
        for node in graph.nodes
        if node.op == "leaf" and node.requires_grad and node.grad is not None
    }
