"""Reverse-mode automatic differentiation on a dynamic tape.

Everything is float64. The op set is the minimum needed for MLP
generators/critics and their losses: matmul, add/sub/mul, tanh, relu,
leaky_relu, sigmoid, log_softmax, concat, slice, mean, sum, l1/l2 norms
and clamp_min. Each forward call appends a node to a thread-local tape
when gradients are needed; ``backward`` walks the tape once in reverse
and then clears it.
"""

from __future__ import annotations

import math
import threading
from typing import Callable, Iterable, Sequence

import numpy as np


class AutodiffError(RuntimeError):
    """Base class for autodiff failures."""


class ShapeError(AutodiffError):
    """Operand shapes incompatible for an operation."""


class NonFiniteError(AutodiffError):
    """An operation produced NaN or Inf."""


class Tensor:
    """Dense float64 array participating in the differentiation graph."""

    __slots__ = ("data", "grad", "requires_grad", "node")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.node: Node | None = None  # producing tape node, None for leaves

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item: tensor of shape {self.shape} is not scalar")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """A view of the same data with no graph history."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Small amount of operator sugar; losses mostly use the module functions.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class Node:
    """One recorded operation: operands, output and its local-gradient rule.

    ``needs_grad`` snapshots, per operand, whether gradients should flow at
    the time the op ran; freezing a tensor afterwards cannot re-route them.
    """

    __slots__ = ("op", "inputs", "output", "vjp", "needs_grad")

    def __init__(self, op: str, inputs: tuple[Tensor, ...], output: Tensor,
                 vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]]):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.vjp = vjp
        self.needs_grad = tuple(t.requires_grad or t.node is not None for t in inputs)


class Graph:
    """Tape of nodes in execution order (hence topologically sorted)."""

    def __init__(self):
        self.nodes: list[Node] = []

    def record(self, node: Node) -> None:
        self.nodes.append(node)

    def clear(self) -> None:
        self.nodes.clear()

    def __len__(self) -> int:
        return len(self.nodes)


_state = threading.local()


def active_graph() -> Graph:
    graph = getattr(_state, "graph", None)
    if graph is None:
        graph = Graph()
        _state.graph = graph
    return graph


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


class no_grad:
    """Context manager that suppresses tape recording."""

    def __enter__(self):
        self._prev = _grad_enabled()
        _state.grad_enabled = False
        return self

    def __exit__(self, *exc):
        _state.grad_enabled = self._prev
        return False


class frozen:
    """Temporarily clears requires_grad on the given tensors.

    Gradients still flow *through* downstream activations, but nothing is
    accumulated into the frozen tensors; used to keep critic parameters out
    of generator losses and vice versa.
    """

    def __init__(self, tensors: Iterable[Tensor]):
        self._tensors = list(tensors)

    def __enter__(self):
        self._saved = [t.requires_grad for t in self._tensors]
        for t in self._tensors:
            t.requires_grad = False
        return self

    def __exit__(self, *exc):
        for t, flag in zip(self._tensors, self._saved):
            t.requires_grad = flag
        return False


def _as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=np.float64))


def _record(op: str, inputs: tuple[Tensor, ...], out_data: np.ndarray,
            vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]]) -> Tensor:
    if not np.all(np.isfinite(out_data)):
        index = len(active_graph())
        raise NonFiniteError(f"{op}: non-finite output at node {index}")
    out = Tensor(out_data)
    if _grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        node = Node(op, inputs, out, vjp)
        out.node = node
        active_graph().record(node)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad down to ``shape`` (inverse of the limited add broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# primitive operations


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return _record("matmul", (a, b), out, vjp)


def add(a: Tensor, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: {a.shape} + {b.shape}") from None

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record("add", (a, b), out, vjp)


def sub(a: Tensor, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub: {a.shape} - {b.shape}") from None

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record("sub", (a, b), out, vjp)


def mul(a: Tensor, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: {a.shape} * {b.shape}") from None

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record("mul", (a, b), out, vjp)


def tanh(t: Tensor) -> Tensor:
    t = _as_tensor(t)
    out = np.tanh(t.data)

    def vjp(g):
        return (g * (1.0 - out * out),)

    return _record("tanh", (t,), out, vjp)


def relu(t: Tensor) -> Tensor:
    t = _as_tensor(t)
    out = np.maximum(t.data, 0.0)

    def vjp(g):
        return (g * (t.data > 0.0),)

    return _record("relu", (t,), out, vjp)


def leaky_relu(t: Tensor, slope: float = 0.2) -> Tensor:
    t = _as_tensor(t)
    out = np.where(t.data > 0.0, t.data, slope * t.data)

    def vjp(g):
        return (g * np.where(t.data > 0.0, 1.0, slope),)

    return _record("leaky_relu", (t,), out, vjp)


def sigmoid(t: Tensor) -> Tensor:
    t = _as_tensor(t)
    out = np.empty_like(t.data)
    pos = t.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t.data[pos]))
    ez = np.exp(t.data[~pos])
    out[~pos] = ez / (1.0 + ez)

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _record("sigmoid", (t,), out, vjp)


def log_softmax(t: Tensor, axis: int = -1) -> Tensor:
    t = _as_tensor(t)
    z = t.data - t.data.max(axis=axis, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    def vjp(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _record("log_softmax", (t,), out, vjp)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    ts = tuple(_as_tensor(t) for t in tensors)
    if not ts:
        raise ShapeError("concat: empty input list")
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(
            "concat: incompatible shapes " + ", ".join(str(t.shape) for t in ts)
        ) from None
    widths = [t.data.shape[axis] for t in ts]
    splits = np.cumsum(widths)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record("concat", ts, out, vjp)


def slice_(t: Tensor, axis: int, start: int, stop: int) -> Tensor:
    t = _as_tensor(t)
    dim = t.data.shape[axis]
    if not (0 <= start < stop <= dim):
        raise ShapeError(f"slice: [{start}:{stop}] out of range for axis {axis} of {t.shape}")
    index = [slice(None)] * t.data.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    out = t.data[index]

    def vjp(g):
        full = np.zeros_like(t.data)
        full[index] = g
        return (full,)

    return _record("slice", (t,), out, vjp)


def mean(t: Tensor, axis: int | None = None) -> Tensor:
    t = _as_tensor(t)
    out = t.data.mean(axis=axis)
    count = t.data.size if axis is None else t.data.shape[axis]

    def vjp(g):
        if axis is None:
            return (np.full_like(t.data, g / count),)
        return (np.expand_dims(g, axis).repeat(count, axis=axis) / count,)

    return _record("mean", (t,), out, vjp)


def sum_(t: Tensor, axis: int | None = None) -> Tensor:
    t = _as_tensor(t)
    out = t.data.sum(axis=axis)

    def vjp(g):
        if axis is None:
            return (np.full_like(t.data, g),)
        return (np.expand_dims(g, axis).repeat(t.data.shape[axis], axis=axis),)

    return _record("sum", (t,), out, vjp)


def l1_norm(t: Tensor, axis: int | None = None) -> Tensor:
    t = _as_tensor(t)
    out = np.abs(t.data).sum(axis=axis)

    def vjp(g):
        sign = np.sign(t.data)
        if axis is None:
            return (g * sign,)
        return (np.expand_dims(g, axis) * sign,)

    return _record("l1_norm", (t,), out, vjp)


def l2_norm(t: Tensor, axis: int | None = None) -> Tensor:
    t = _as_tensor(t)
    out = np.sqrt((t.data * t.data).sum(axis=axis))

    def vjp(g):
        # subgradient 0 at the origin
        safe = np.where(out == 0.0, 1.0, out)
        if axis is None:
            return (g * t.data / safe,)
        return (np.expand_dims(g / safe, axis) * t.data,)

    return _record("l2_norm", (t,), out, vjp)


def clamp_min(t: Tensor, floor: float) -> Tensor:
    t = _as_tensor(t)
    out = np.maximum(t.data, floor)

    def vjp(g):
        return (g * (t.data > floor),)

    return _record("clamp_min", (t,), out, vjp)


# ---------------------------------------------------------------------------
# backward pass


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(leaf) into every reachable leaf, then clear the tape.

    ``root`` must be a scalar produced through the active graph. Leaf grads
    accumulate additively across successive backward passes.
    """
    if root.size != 1:
        raise AutodiffError(f"backward: root has shape {root.shape}, expected scalar")
    graph = active_graph()
    if root.node is None or root.node not in graph.nodes:
        raise AutodiffError("backward: root is detached from the graph")
    buffers: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    leaves: dict[int, Tensor] = {id(root): root}
    for node in reversed(graph.nodes):
        g = buffers.pop(id(node.output), None)
        leaves.pop(id(node.output), None)
        if g is None:
            continue
        contributions = node.vjp(g)
        for inp, contrib, wanted in zip(node.inputs, contributions, node.needs_grad):
            if contrib is None or not wanted:
                continue
            key = id(inp)
            if key in buffers:
                buffers[key] = buffers[key] + contrib
            else:
                buffers[key] = contrib
                leaves[key] = inp
    for key, grad in buffers.items():
        leaf = leaves[key]
        if leaf.grad is None:
            leaf.grad = np.array(grad, dtype=np.float64, copy=True)
        else:
            leaf.grad = leaf.grad + grad
    graph.clear()


# ---------------------------------------------------------------------------
# Adam


class AdamState:
    """Bias-corrected Adam state for a fixed parameter list."""

    def __init__(self, params: Sequence[Tensor], learning_rate: float = 2e-4,
                 beta1: float = 0.5, beta2: float = 0.999, epsilon: float = 1e-8):
        if not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0:
            raise ValueError(f"adam: betas must lie in [0, 1), got {beta1}, {beta2}")
        if epsilon <= 0.0:
            raise ValueError(f"adam: epsilon must be positive, got {epsilon}")
        if learning_rate < 0.0:
            raise ValueError(f"adam: learning rate must be nonnegative, got {learning_rate}")
        self.params = list(params)
        self.step = 0
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.first_moment = [np.zeros_like(p.data) for p in self.params]
        self.second_moment = [np.zeros_like(p.data) for p in self.params]


def adam_step(state: AdamState) -> None:
    """One bias-corrected Adam update; zeroes grads and bumps the step count."""
    for i, p in enumerate(state.params):
        if p.grad is None:
            raise AutodiffError(f"adam_step: parameter {i} has no gradient")
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteError(f"adam_step: non-finite gradient on parameter {i}")
    state.step += 1
    t = state.step
    lr, b1, b2 = state.learning_rate, state.beta1, state.beta2
    for i, p in enumerate(state.params):
        g = p.grad
        state.first_moment[i] = b1 * state.first_moment[i] + (1.0 - b1) * g
        state.second_moment[i] = b2 * state.second_moment[i] + (1.0 - b2) * g * g
        m_hat = state.first_moment[i] / (1.0 - b1 ** t)
        v_hat = state.second_moment[i] / (1.0 - b2 ** t)
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
        p.grad = None


# ---------------------------------------------------------------------------
# finite-difference oracle


def finite_difference_check(f: Callable[[], Tensor], params: Sequence[Tensor],
                            h: float = 1e-5, max_coords_per_param: int = 24,
                            seed: int = 0) -> float:
    """Max relative error between backward() grads and central differences.

    ``f`` must be deterministic (fix all noise before calling). Coordinates
    are subsampled with a seeded rng when a parameter is large. Relative
    error is |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
    """
    if h <= 0.0:
        raise ValueError(f"finite_difference_check: h must be positive, got {h}")
    params = list(params)
    for p in params:
        p.grad = None
    out = f()
    if not np.all(np.isfinite(out.data)):
        raise NonFiniteError("finite_difference_check: f returned a non-finite value")
    backward(out)
    analytic = []
    for p in params:
        if p.grad is None:
            analytic.append(np.zeros_like(p.data))
        else:
            analytic.append(p.grad.copy())
        p.grad = None

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, grad in zip(params, analytic):
        flat = p.data.reshape(-1)
        n = flat.size
        if n <= max_coords_per_param:
            coords = np.arange(n)
        else:
            coords = rng.choice(n, size=max_coords_per_param, replace=False)
        for c in coords:
            saved = flat[c]
            flat[c] = saved + h
            with no_grad():
                hi = f().item()
            flat[c] = saved - h
            with no_grad():
                lo = f().item()
            flat[c] = saved
            if not (math.isfinite(hi) and math.isfinite(lo)):
                raise NonFiniteError("finite_difference_check: f returned a non-finite value")
            numeric = (hi - lo) / (2.0 * h)
            a = float(grad.reshape(-1)[c])
            err = abs(a - numeric) / (abs(a) + abs(numeric) + 1e-12)
            worst = max(worst, err)
    return worst
