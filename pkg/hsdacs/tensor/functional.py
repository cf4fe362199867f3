"""Differentiable operations over `Tensor`.

Binary elementwise operations only broadcast over leading axes: the shape of
one operand must be a suffix of the other's (a bias `[d]` against `[B, T, d]`,
a scalar against anything). Anything else needs an explicit reshape.
"""

from typing import Any, Sequence, Union

import numpy as np
from numpy.typing import NDArray

from hsdacs.tensor.tensor import Function, Tensor, as_tensor
from hsdacs.types import ContractError, ShapeError

Operand = Union[Tensor, float, int]


def _is_suffix(short: tuple[int, ...], long: tuple[int, ...]) -> bool:
    return len(short) <= len(long) and long[len(long) - len(short) :] == short


def _check_broadcast(op: str, a: tuple[int, ...], b: tuple[int, ...]) -> None:
    if a == b or _is_suffix(a, b) or _is_suffix(b, a):
        return
    raise ShapeError(f"{op}: cannot combine shapes {a} and {b}; only leading-axis broadcasting is supported")


def _reduce_to(grad: NDArray[np.float64], shape: tuple[int, ...]) -> NDArray[np.float64]:
    if grad.shape == shape:
        return grad
    return np.asarray(grad.reshape((-1,) + shape).sum(axis=0), dtype=np.float64)


def _swap(x: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.swapaxes(x, -1, -2)


################################################################################
# Elementwise
################################################################################
class Add(Function):
    def forward(self, a, b):
        _check_broadcast("add", a.shape, b.shape)
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad):
        return _reduce_to(grad, self.shapes[0]), _reduce_to(grad, self.shapes[1])


class Sub(Function):
    def forward(self, a, b):
        _check_broadcast("sub", a.shape, b.shape)
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad):
        return _reduce_to(grad, self.shapes[0]), _reduce_to(-grad, self.shapes[1])


class Mul(Function):
    def forward(self, a, b):
        _check_broadcast("mul", a.shape, b.shape)
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return _reduce_to(grad * self.b, self.a.shape), _reduce_to(grad * self.a, self.b.shape)


class Div(Function):
    def forward(self, a, b):
        _check_broadcast("div", a.shape, b.shape)
        self.a, self.b = a, b
        return a / b

    def backward(self, grad):
        grad_a = grad / self.b
        grad_b = -grad * self.a / (self.b * self.b)
        return _reduce_to(grad_a, self.a.shape), _reduce_to(grad_b, self.b.shape)


class ReLU(Function):
    def forward(self, x):
        self.positive = x > 0
        return np.where(self.positive, x, 0.0)

    def backward(self, grad):
        return (grad * self.positive,)


def stable_sigmoid(x: NDArray[np.float64]) -> NDArray[np.float64]:
    """Logistic function without overflow for large |x|."""
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Sigmoid(Function):
    def forward(self, x):
        self.y = stable_sigmoid(x)
        return self.y

    def backward(self, grad):
        return (grad * self.y * (1.0 - self.y),)


class MaskedFill(Function):
    """Replace entries where `mask` is False with `value`."""

    def forward(self, x, mask: NDArray[np.bool_], value: float):
        self.keep = np.broadcast_to(mask, x.shape)
        return np.where(self.keep, x, value)

    def backward(self, grad):
        return (np.where(self.keep, grad, 0.0),)


################################################################################
# Reductions and normalisation
################################################################################
class Sum(Function):
    def forward(self, x, axis: int | None, keepdims: bool):
        self.shape, self.axis, self.keepdims = x.shape, axis, keepdims
        return np.asarray(x.sum(axis=axis, keepdims=keepdims), dtype=np.float64)

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.shape).copy(),)


class Softmax(Function):
    def forward(self, x, axis: int):
        self.axis = axis
        shifted = x - x.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        self.y = e / e.sum(axis=axis, keepdims=True)
        return self.y

    def backward(self, grad):
        inner = (grad * self.y).sum(axis=self.axis, keepdims=True)
        return (self.y * (grad - inner),)


class LogSoftmax(Function):
    def forward(self, x, axis: int):
        self.axis = axis
        shifted = x - x.max(axis=axis, keepdims=True)
        out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
        self.softmax = np.exp(out)
        return out

    def backward(self, grad):
        return (grad - self.softmax * grad.sum(axis=self.axis, keepdims=True),)


class LayerNorm(Function):
    def forward(self, x, gain, bias, eps: float):
        if gain.shape != x.shape[-1:] or bias.shape != x.shape[-1:]:
            raise ShapeError(f"layer_norm: affine parameters {gain.shape}/{bias.shape} do not match {x.shape}")
        mu = x.mean(axis=-1, keepdims=True)
        centred = x - mu
        var = (centred * centred).mean(axis=-1, keepdims=True)
        self.inv_std = 1.0 / np.sqrt(var + eps)
        self.xhat = centred * self.inv_std
        self.gain = gain
        return self.xhat * gain + bias

    def backward(self, grad):
        n = self.xhat.shape[-1]
        dxhat = grad * self.gain
        dx = (
            self.inv_std
            / n
            * (
                n * dxhat
                - dxhat.sum(axis=-1, keepdims=True)
                - self.xhat * (dxhat * self.xhat).sum(axis=-1, keepdims=True)
            )
        )
        dgain = (grad * self.xhat).reshape(-1, n).sum(axis=0)
        dbias = grad.reshape(-1, n).sum(axis=0)
        return dx, dgain, dbias


################################################################################
# Linear algebra
################################################################################
class MatMul(Function):
    def forward(self, a, b):
        if a.ndim < 2 or b.ndim < 2:
            raise ShapeError(f"matmul: operands must be at least 2-D, got {a.shape} and {b.shape}")
        if a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"matmul: inner dimensions differ, {a.shape} x {b.shape}")
        if a.ndim > 2 and b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
            raise ShapeError(f"matmul: batch axes differ, {a.shape} x {b.shape}")
        self.a, self.b = a, b
        return np.matmul(a, b)

    def backward(self, grad):
        grad_a = np.matmul(grad, _swap(self.b))
        grad_b = np.matmul(_swap(self.a), grad)
        return _reduce_to(grad_a, self.a.shape), _reduce_to(grad_b, self.b.shape)


class OrderedScores(Function):
    """
    Dot products of every query row with every key row, `[..., L, d] x [..., T, d] -> [..., L, T]`.

    The contraction runs left to right over d with one elementwise pass per
    component, so every entry is computed by the same sequence of roundings no
    matter how many rows are evaluated together.
    """

    def forward(self, q, k):
        if q.shape[-1] != k.shape[-1] or q.shape[:-2] != k.shape[:-2]:
            raise ShapeError(f"ordered_scores: incompatible shapes {q.shape} and {k.shape}")
        self.q, self.k = q, k
        acc = q[..., :, None, 0] * k[..., None, :, 0]
        for d in range(1, q.shape[-1]):
            acc = acc + q[..., :, None, d] * k[..., None, :, d]
        return acc

    def backward(self, grad):
        return np.matmul(grad, self.k), np.matmul(_swap(grad), self.q)


class OrderedWeightedSum(Function):
    """
    Weighted sums of value rows, `[..., L, T] x [..., T, d] -> [..., L, d]`, accumulated left to right over T.

    Trailing zero weights leave the accumulated value bit-unchanged, so a sum over
    a truncated window equals the sum over the full sequence with zeros beyond it.
    """

    def forward(self, w, v):
        if w.shape[-1] != v.shape[-2] or w.shape[:-2] != v.shape[:-2]:
            raise ShapeError(f"ordered_weighted_sum: incompatible shapes {w.shape} and {v.shape}")
        if w.shape[-1] == 0:
            raise ContractError("ordered_weighted_sum over an empty window")
        self.w, self.v = w, v
        acc = w[..., :, 0, None] * v[..., None, 0, :]
        for j in range(1, w.shape[-1]):
            acc = acc + w[..., :, j, None] * v[..., None, j, :]
        return acc

    def backward(self, grad):
        return np.matmul(grad, _swap(self.v)), np.matmul(_swap(self.w), grad)


################################################################################
# Shape manipulation
################################################################################
class Reshape(Function):
    def forward(self, x, shape: tuple[int, ...]):
        self.shape = x.shape
        return x.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.shape),)


class Transpose(Function):
    def forward(self, x, axes: tuple[int, ...] | None):
        self.axes = axes if axes is not None else tuple(reversed(range(x.ndim)))
        return np.ascontiguousarray(np.transpose(x, self.axes))

    def backward(self, grad):
        return (np.ascontiguousarray(np.transpose(grad, np.argsort(self.axes))),)


class GetItem(Function):
    def forward(self, x, index: Any):
        self.shape, self.index = x.shape, index
        return np.array(x[index], dtype=np.float64)

    def backward(self, grad):
        out = np.zeros(self.shape, dtype=np.float64)
        np.add.at(out, self.index, grad)
        return (out,)


class Concat(Function):
    def forward(self, *arrays, axis: int):
        self.axis = axis
        self.sizes = [a.shape[axis] for a in arrays]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        splits = np.cumsum(self.sizes)[:-1]
        return tuple(np.ascontiguousarray(g) for g in np.split(grad, splits, axis=self.axis))


class Embedding(Function):
    def forward(self, weight, ids: NDArray[np.int64]):
        self.shape, self.ids = weight.shape, ids
        return weight[ids]

    def backward(self, grad):
        out = np.zeros(self.shape, dtype=np.float64)
        np.add.at(out, self.ids, grad)
        return (out,)


################################################################################
# Functional API
################################################################################
def add(a: Operand, b: Operand) -> Tensor:
    return Add.apply(as_tensor(a), as_tensor(b))


def sub(a: Operand, b: Operand) -> Tensor:
    return Sub.apply(as_tensor(a), as_tensor(b))


def mul(a: Operand, b: Operand) -> Tensor:
    return Mul.apply(as_tensor(a), as_tensor(b))


def div(a: Operand, b: Operand) -> Tensor:
    return Div.apply(as_tensor(a), as_tensor(b))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product over the last two axes.

    Raises:
        ShapeError: If the inner dimensions (or the batch axes) disagree.
    """
    return MatMul.apply(a, b)


def relu(x: Tensor) -> Tensor:
    return ReLU.apply(x)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


def softmax_rows(x: Tensor, axis: int = -1) -> Tensor:
    """Max-shifted softmax; entries of -inf get probability zero."""
    return Softmax.apply(x, axis=axis)


softmax = softmax_rows


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    return LogSoftmax.apply(x, axis=axis)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-12) -> Tensor:
    if eps <= 0:
        raise ContractError(f"layer_norm needs eps > 0, got {eps}")
    return LayerNorm.apply(x, gain, bias, eps=eps)


def sum(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return Sum.apply(x, axis=axis, keepdims=keepdims)


def mean(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else x.shape[axis]
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(x, shape=tuple(shape))


def transpose(x: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    return Transpose.apply(x, axes=tuple(axes) if axes is not None else None)


def getitem(x: Tensor, index: Any) -> Tensor:
    return GetItem.apply(x, index=index)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise ContractError("concat of an empty sequence")
    return Concat.apply(*tensors, axis=axis)


def embedding(weight: Tensor, ids: NDArray[np.int64]) -> Tensor:
    return Embedding.apply(weight, ids=np.asarray(ids, dtype=np.int64))


def masked_fill(x: Tensor, mask: NDArray[np.bool_], value: float) -> Tensor:
    """Keep `x` where `mask` is True, write `value` elsewhere. `mask` broadcasts numpy-style."""
    return MaskedFill.apply(x, mask=np.asarray(mask, dtype=bool), value=value)


def ordered_scores(q: Tensor, k: Tensor) -> Tensor:
    return OrderedScores.apply(q, k)


def ordered_weighted_sum(w: Tensor, v: Tensor) -> Tensor:
    return OrderedWeightedSum.apply(w, v)
