"""Differentiable operations.

Each operation computes its forward value with numpy and records a local
backward rule on the active tape. Gradients for broadcast operands are
summed back to the operand's shape by the tape.
"""
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from mixtts.autodiff.tensor import Tensor, as_tensor, record_op
from mixtts.errors import DimensionError, EmbeddingIndexError, NumericError

Operand = Union[Tensor, float, int, np.ndarray]


def _pair(a: Operand, b: Operand) -> Tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


# elementwise arithmetic

def add(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b)
    return record_op('add', (a, b), a.data + b.data, lambda g: (g, g))


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b)
    return record_op('sub', (a, b), a.data - b.data, lambda g: (g, -g))


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b)
    return record_op('mul', (a, b), a.data * b.data,
                     lambda g: (g * b.data, g * a.data))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return record_op('tanh', (x,), y, lambda g: (g * (1.0 - y * y),))


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)
    return record_op('sigmoid', (x,), y, lambda g: (g * y * (1.0 - y),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return record_op('relu', (x,), np.where(mask, x.data, 0.0).astype(x.dtype),
                     lambda g: (g * mask,))


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return record_op('exp', (x,), y, lambda g: (g * y,))


def log(x: Tensor) -> Tensor:
    return record_op('log', (x,), np.log(x.data), lambda g: (g / x.data,))


def abs(x: Tensor) -> Tensor:  # noqa: A001
    sign = np.sign(x.data)
    return record_op('abs', (x,), np.abs(x.data), lambda g: (g * sign,))


def _sigmoid(values: np.ndarray) -> np.ndarray:
    out = np.empty_like(values)
    positive = values >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-values[positive]))
    z = np.exp(values[~positive])
    out[~positive] = z / (1.0 + z)
    return out


# linear algebra and shape manipulation

# PUBLIC_INTERFACE
def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a [m, k] and b [k, n].

    Raises:
        DimensionError: if the inner dimensions disagree
    """
    a, b = _pair(a, b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError('matmul shape mismatch', a.shape, b.shape)
    return record_op('matmul', (a, b), a.data @ b.data,
                     lambda g: (g @ b.data.T, a.data.T @ g))


def transpose(x: Tensor) -> Tensor:
    return record_op('transpose', (x,), x.data.T, lambda g: (g.T,))


def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    original = x.shape
    return record_op('reshape', (x,), x.data.reshape(shape),
                     lambda g: (g.reshape(original),))


def index(x: Tensor, key) -> Tensor:
    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, key, g)
        return (full,)
    return record_op('index', (x,), x.data[key], backward)


def sum(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)
    return record_op('sum', (x,), np.sum(x.data, axis=axis, keepdims=keepdims), backward)


def mean(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else x.shape[axis]
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / max(count, 1))


# PUBLIC_INTERFACE
def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along ``axis``.

    Raises:
        NumericError: if the input contains NaN
    """
    if np.isnan(x.data).any():
        raise NumericError('softmax input contains NaN')
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)
    return record_op('softmax', (x,), y, backward)


# PUBLIC_INTERFACE
def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate tensors along ``axis``; gradients split back losslessly.

    Raises:
        DimensionError: if any off-axis dimension differs
    """
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError('concat needs at least one tensor')
    reference = tensors[0]
    ndim = reference.ndim
    axis = axis % max(ndim, 1)
    for t in tensors[1:]:
        if t.ndim != ndim or any(
            t.shape[d] != reference.shape[d] for d in range(ndim) if d != axis
        ):
            raise DimensionError('concat off-axis dimension mismatch', reference.shape, t.shape)
    sizes = [t.shape[axis] for t in tensors]
    boundaries = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)

    def backward(g):
        return tuple(np.split(g, boundaries, axis=axis))
    return record_op('concat', tensors, out, backward)


def split(x: Tensor, sizes: Sequence[int], axis: int = 0) -> List[Tensor]:
    """Inverse of concat: slice ``x`` into consecutive pieces of the given sizes."""
    if int(np.sum(sizes)) != x.shape[axis]:
        raise DimensionError(f'split sizes {list(sizes)} do not cover axis {axis}', x.shape)
    pieces = []
    start = 0
    for size in sizes:
        key = [slice(None)] * x.ndim
        key[axis] = slice(start, start + size)
        pieces.append(index(x, tuple(key)))
        start += size
    return pieces


# PUBLIC_INTERFACE
def embedding_lookup(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Gather rows of ``table`` [V, d]; duplicate ids accumulate gradient.

    Raises:
        EmbeddingIndexError: for an id outside [0, V)
    """
    ids = np.asarray(list(ids), dtype=np.int64)
    size = table.shape[0]
    for value in ids:
        if value < 0 or value >= size:
            raise EmbeddingIndexError(int(value), size)

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        return (full,)
    out = table.data[ids] if ids.size else np.zeros((0, table.shape[1]), dtype=table.dtype)
    return record_op('embedding', (table,), out, backward)


# PUBLIC_INTERFACE
def conv1d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Time-major 'same' convolution.

    Args:
        x: input [T, C_in]
        weight: kernel [K, C_in, C_out] with odd K
        bias: optional [C_out]

    Returns:
        Tensor: [T, C_out]
    """
    length, channels = x.shape
    kernel, w_in, w_out = weight.shape
    if w_in != channels or kernel % 2 == 0:
        raise DimensionError('conv1d kernel/input mismatch', x.shape, weight.shape)
    pad = kernel // 2
    padded = np.pad(x.data, ((pad, pad), (0, 0)))
    columns = np.concatenate([padded[k:k + length] for k in range(kernel)], axis=1)
    flat = weight.data.reshape(kernel * channels, w_out)
    out = columns @ flat

    def backward(g):
        grad_cols = g @ flat.T
        grad_padded = np.zeros_like(padded)
        for k in range(kernel):
            grad_padded[k:k + length] += grad_cols[:, k * channels:(k + 1) * channels]
        grad_x = grad_padded[pad:pad + length]
        grad_w = (columns.T @ g).reshape(weight.shape)
        return grad_x, grad_w

    result = record_op('conv1d', (x, weight), out, backward)
    return add(result, bias) if bias is not None else result


# PUBLIC_INTERFACE
def dropout(x: Tensor, rate: float, training: bool,
            rng: Optional[np.random.Generator] = None) -> Tensor:
    """Inverted dropout; identity in eval mode or when rate is 0."""
    if not training or rate <= 0.0:
        return x
    if rng is None:
        raise NumericError('dropout in training mode needs a seeded generator')
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return mul(x, Tensor(keep))


def affine(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    out = matmul(x, weight)
    return add(out, bias) if bias is not None else out


# losses

# PUBLIC_INTERFACE
def l1_loss(prediction: Tensor, target: Operand) -> Tensor:
    """Mean absolute error."""
    prediction, target = _pair(prediction, target)
    if prediction.shape != target.shape:
        raise DimensionError('l1_loss shape mismatch', prediction.shape, target.shape)
    return mean(abs(sub(prediction, target)))


# PUBLIC_INTERFACE
def mse_loss(prediction: Tensor, target: Operand) -> Tensor:
    """Mean squared error."""
    prediction, target = _pair(prediction, target)
    if prediction.shape != target.shape:
        raise DimensionError('mse_loss shape mismatch', prediction.shape, target.shape)
    diff = sub(prediction, target)
    return mean(mul(diff, diff))


# PUBLIC_INTERFACE
def bce_with_logits(logits: Tensor, target: Operand) -> Tensor:
    """Binary cross-entropy on logits, averaged over elements."""
    logits, target = _pair(logits, target)
    x, y = logits.data, target.data
    values = np.maximum(x, 0) - x * y + np.log1p(np.exp(-np.abs(x)))
    count = max(x.size, 1)
    out = np.asarray(values.sum() / count, dtype=x.dtype)
    return record_op('bce_with_logits', (logits,), out,
                     lambda g: (g * (_sigmoid(x) - y) / count,))
