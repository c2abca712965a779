"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Primitives operate on :class:`Tensor` values and, while a :class:`Tape` is
active and some input requires a gradient, append a record to the tape in
execution order (a Wengert list). :func:`backward` walks the list once in
reverse, accumulating adjoints into the ``grad`` buffers of leaf tensors.

Everything is float64. Broadcasting is limited to a row vector or a scalar
against a matrix; shapes are otherwise required to match exactly. Logs and
norms are guarded by an additive ``EPSILON`` floor so gradients stay finite.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError

EPSILON = 1e-12


class Tensor:
    """A 0-, 1-, or 2-D float64 array with an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 2:
            raise ValidationError(f"tensors are at most 2-D, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


class _Node:
    __slots__ = ("inputs", "output", "vjp")

    def __init__(self, inputs: tuple[Tensor, ...], output: Tensor,
                 vjp: Callable[[np.ndarray], tuple]):
        self.inputs = inputs
        self.output = output
        self.vjp = vjp


_TAPE_STACK: list["Tape"] = []


class Tape:
    """Ordered record of primitive applications; a context manager.

    Creation order is a topological order of the computation graph, so the
    reverse walk in :func:`backward` visits each node exactly once.
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE_STACK.pop()


def _active_tape() -> Optional[Tape]:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _apply(inputs: tuple[Tensor, ...], out_data: np.ndarray,
           vjp: Callable[[np.ndarray], tuple]) -> Tensor:
    tape = _active_tape()
    tracked = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=tracked)
    if tracked:
        tape.nodes.append(_Node(inputs, out, vjp))
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``grad`` for every requires-grad leaf.

    ``loss`` must be a scalar. The tape is cleared afterwards.
    """
    if loss.data.size != 1:
        raise ValidationError(f"loss must be scalar, got shape {loss.shape}")
    produced = {id(node.output) for node in tape.nodes}
    adjoints: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    if id(loss) not in produced and loss.requires_grad:
        loss.grad = _accumulate(loss.grad, np.ones_like(loss.data))
    for node in reversed(tape.nodes):
        grad_out = adjoints.pop(id(node.output), None)
        if grad_out is None:
            continue
        grads_in = node.vjp(grad_out)
        for tensor, grad in zip(node.inputs, grads_in):
            if grad is None or not tensor.requires_grad:
                continue
            if id(tensor) in produced:
                prev = adjoints.get(id(tensor))
                adjoints[id(tensor)] = grad if prev is None else prev + grad
            else:
                tensor.grad = _accumulate(tensor.grad, grad)
    tape.nodes.clear()


def _accumulate(buffer: Optional[np.ndarray], grad: np.ndarray) -> np.ndarray:
    return grad.copy() if buffer is None else buffer + grad


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to an operand's shape."""
    if grad.shape == shape:
        return grad
    if shape == ():
        return np.asarray(grad.sum())
    if len(shape) == 1 and grad.ndim == 2 and grad.shape[1] == shape[0]:
        return grad.sum(axis=0)
    raise ValidationError(f"cannot reduce gradient {grad.shape} to {shape}")


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape:
        return
    if a.ndim == 0 or b.ndim == 0:
        return
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        return
    if b.ndim == 2 and a.ndim == 1 and b.shape[1] == a.shape[0]:
        return
    raise ValidationError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return _apply((a, b), a.data + b.data,
                  lambda g: (_reduce_to(g, a.shape), _reduce_to(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    return _apply((a, b), a.data - b.data,
                  lambda g: (_reduce_to(g, a.shape), _reduce_to(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    return _apply((a, b), a.data * b.data,
                  lambda g: (_reduce_to(g * b.data, a.shape),
                             _reduce_to(g * a.data, b.shape)))


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _apply((a,), a.data * c, lambda g: (g * c,))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValidationError("matmul expects 2-D operands")
    if a.shape[1] != b.shape[0]:
        raise ValidationError(f"matmul: {a.shape} @ {b.shape}")
    return _apply((a, b), a.data @ b.data,
                  lambda g: (g @ b.data.T, a.data.T @ g))


def sparse_dense_matmul(matrix, x) -> Tensor:
    """Product of a constant sparse matrix with a dense tensor.

    No gradient flows into the sparse operand (it is graph structure,
    not a parameter); the dense side receives matrix.T @ grad.
    """
    x = as_tensor(x)
    if not sp.issparse(matrix):
        raise ValidationError("sparse_dense_matmul expects a scipy sparse matrix")
    if x.ndim != 2 or matrix.shape[1] != x.shape[0]:
        raise ValidationError(f"sparse_dense_matmul: {matrix.shape} @ {x.shape}")
    mat = sp.csr_array(matrix).astype(np.float64)
    return _apply((x,), mat @ x.data, lambda g: (mat.T @ g,))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ValidationError("transpose expects a 2-D tensor")
    return _apply((a,), a.data.T.copy(), lambda g: (g.T,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _apply((a,), out, lambda g: (g * out,))


def log(a) -> Tensor:
    """Natural log with the EPSILON additive floor: log(x + EPSILON)."""
    a = as_tensor(a)
    shifted = a.data + EPSILON
    return _apply((a,), np.log(shifted), lambda g: (g / shifted,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _apply((a,), out, lambda g: (g * (1.0 - out * out),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _apply((a,), np.where(mask, a.data, 0.0), lambda g: (g * mask,))


def elu(a) -> Tensor:
    a = as_tensor(a)
    out = np.where(a.data > 0, a.data, np.expm1(a.data))
    return _apply((a,), out, lambda g: (g * np.where(a.data > 0, 1.0, out + 1.0),))


def softplus(a) -> Tensor:
    a = as_tensor(a)
    out = np.logaddexp(0.0, a.data)
    return _apply((a,), out, lambda g: (g / (1.0 + np.exp(-a.data)),))


def absval(a) -> Tensor:
    a = as_tensor(a)
    return _apply((a,), np.abs(a.data), lambda g: (g * np.sign(a.data),))


def row_softmax(a) -> Tensor:
    """Softmax along the last axis (rows of a matrix, or a whole vector)."""
    a = as_tensor(a)
    if a.ndim == 0:
        raise ValidationError("row_softmax expects a 1-D or 2-D tensor")
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return ((g - dot) * out,)

    return _apply((a,), out, vjp)


def row_l2_normalize(a) -> Tensor:
    """Scale each row to unit L2 norm; norms are floored by EPSILON."""
    a = as_tensor(a)
    if a.ndim != 2:
        raise ValidationError("row_l2_normalize expects a 2-D tensor")
    norms = np.sqrt((a.data * a.data).sum(axis=1, keepdims=True) + EPSILON)
    out = a.data / norms

    def vjp(g):
        dot = (g * a.data).sum(axis=1, keepdims=True)
        return (g / norms - a.data * dot / norms ** 3,)

    return _apply((a,), out, vjp)


def cosine_similarity_matrix(a, b) -> Tensor:
    """All-pairs cosine similarity between the rows of two matrices."""
    return matmul(row_l2_normalize(a), transpose(row_l2_normalize(b)))


def reduce_sum(a) -> Tensor:
    a = as_tensor(a)
    return _apply((a,), np.asarray(a.data.sum()),
                  lambda g: (np.broadcast_to(g, a.shape).astype(np.float64),))


def reduce_mean(a) -> Tensor:
    a = as_tensor(a)
    n = a.data.size
    return _apply((a,), np.asarray(a.data.mean()),
                  lambda g: (np.broadcast_to(g / n, a.shape).astype(np.float64),))


def rowsum(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ValidationError("rowsum expects a 2-D tensor")
    return _apply((a,), a.data.sum(axis=1),
                  lambda g: (np.repeat(g[:, None], a.shape[1], axis=1),))


def concat_columns(tensors: Sequence[Tensor]) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    if not tensors:
        raise ValidationError("concat_columns needs at least one tensor")
    if any(t.ndim != 2 or t.shape[0] != tensors[0].shape[0] for t in tensors):
        raise ValidationError("concat_columns expects 2-D tensors with equal row counts")
    widths = [t.shape[1] for t in tensors]
    splits = np.cumsum(widths)[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(part) for part in np.split(g, splits, axis=1))

    return _apply(tensors, np.concatenate([t.data for t in tensors], axis=1), vjp)


def masked_select(a, indices) -> Tensor:
    """Gather rows by index; the backward scatter-adds into the source."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.int64)
    if a.ndim != 2 or idx.ndim != 1:
        raise ValidationError("masked_select expects a 2-D tensor and 1-D indices")

    def vjp(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return (out,)

    return _apply((a,), a.data[idx].copy(), vjp)


def stack_scalars(tensors: Sequence[Tensor]) -> Tensor:
    """Stack 0-D tensors into a vector."""
    tensors = tuple(as_tensor(t) for t in tensors)
    if any(t.ndim != 0 for t in tensors):
        raise ValidationError("stack_scalars expects 0-D tensors")

    def vjp(g):
        return tuple(np.asarray(g[i]) for i in range(len(tensors)))

    return _apply(tensors, np.array([t.data for t in tensors]), vjp)


def index(a, i: int) -> Tensor:
    """Select one element of a vector as a 0-D tensor."""
    a = as_tensor(a)
    if a.ndim != 1:
        raise ValidationError("index expects a 1-D tensor")
    i = int(i)

    def vjp(g):
        out = np.zeros_like(a.data)
        out[i] = g
        return (out,)

    return _apply((a,), np.asarray(a.data[i]), vjp)


def add_n(tensors: Sequence[Tensor]) -> Tensor:
    """Sum of equally shaped tensors."""
    total = tensors[0]
    for t in tensors[1:]:
        total = add(total, t)
    return total


def sum_squares(a) -> Tensor:
    """Squared Frobenius norm as a composite primitive chain."""
    return reduce_sum(mul(a, a))


class Adam:
    """Bias-corrected adaptive-moment optimizer over a fixed parameter list."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        if any(not p.requires_grad for p in self.params):
            raise ValidationError("all optimized parameters must require gradients")
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.step_count += 1
        b1t = 1.0 - self.beta1 ** self.step_count
        b2t = 1.0 - self.beta2 ** self.step_count
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[i] / b1t
            v_hat = self.v[i] / b2t
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
