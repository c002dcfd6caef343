"""
Differentiable operations on Tensor.

Each function computes its forward result with numpy and registers a backward
closure returning one gradient per input (None for inputs that need none).
Broadcasting follows numpy; gradients are summed back onto the input shape.
"""
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError, DimensionError, UsageError
from .tensor import DTYPE, Tensor, as_tensor

Axis = Union[None, int, Tuple[int, ...]]

# Logit used for masked attention keys; exp() of it underflows to exactly 0.
MASK_VALUE = -1e30


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ----- elementwise arithmetic -----------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._from_op(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    """Elementwise (Hadamard) product."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._from_op(a.data * b.data, (a, b), backward, "mul")


def scale(x: Tensor, factor: float) -> Tensor:
    factor = float(factor)

    def backward(g):
        return (g * factor,)

    return Tensor._from_op(x.data * factor, (x,), backward, "scale")


# ----- linear algebra -------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product over the last two axes, leading axes broadcast.

    Raises:
        DimensionError: If inner dimensions differ or an operand is not at least 2-D.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")

    def backward(g):
        grad_a = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        grad_b = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return grad_a, grad_b

    return Tensor._from_op(a.data @ b.data, (a, b), backward, "matmul")


# ----- reductions and shape ops ---------------------------------------------------

def sum(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor._from_op(np.sum(x.data, axis=axis, keepdims=keepdims), (x,), backward, "sum")


def mean(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else int(np.prod([x.shape[i] for i in np.atleast_1d(axis)]))
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    def backward(g):
        return (g.reshape(x.shape),)

    return Tensor._from_op(x.data.reshape(shape), (x,), backward, "reshape")


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    axes = tuple(range(x.ndim))[::-1] if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (np.transpose(g, inverse),)

    return Tensor._from_op(np.transpose(x.data, axes), (x,), backward, "transpose")


def swapaxes(x: Tensor, axis1: int, axis2: int) -> Tensor:
    def backward(g):
        return (np.swapaxes(g, axis1, axis2),)

    return Tensor._from_op(np.swapaxes(x.data, axis1, axis2), (x,), backward, "swapaxes")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise DimensionError(f"concat: {e}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor._from_op(data, tensors, backward, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.stack([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise DimensionError(f"stack: {e}") from None

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return Tensor._from_op(data, tensors, backward, "stack")


def getitem(x: Tensor, index) -> Tensor:
    def backward(g):
        grad = np.zeros_like(x.data)
        np.add.at(grad, index, g)
        return (grad,)

    return Tensor._from_op(np.array(x.data[index], dtype=DTYPE), (x,), backward, "getitem")


def gather_columns(table: Tensor, ids: np.ndarray) -> Tensor:
    """
    One-hot lookup: row i of the result is column ids[i] of `table` (shape d×M).
    Output shape is ids.shape + (d,).
    """
    ids = np.asarray(ids, dtype=np.int64)

    def backward(g):
        grad_t = np.zeros((table.shape[1], table.shape[0]), dtype=DTYPE)
        np.add.at(grad_t, ids, g)
        return (grad_t.T,)

    return Tensor._from_op(table.data.T[ids], (table,), backward, "gather_columns")


def detach(x: Tensor) -> Tensor:
    return x.detach()


# ----- nonlinearities -------------------------------------------------------------

def sigmoid(x: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))

    def backward(g):
        return (g * out * (1.0 - out),)

    return Tensor._from_op(out, (x,), backward, "sigmoid")


def relu(x: Tensor) -> Tensor:
    positive = x.data > 0

    def backward(g):
        return (g * positive,)

    return Tensor._from_op(np.where(positive, x.data, 0.0), (x,), backward, "relu")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Exp-normalise along `axis`, max-subtracted so shifted inputs give identical output."""
    if not -x.ndim <= axis < max(x.ndim, 1):
        raise DimensionError(f"softmax axis {axis} out of range for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    exps = np.exp(shifted)
    out = exps / exps.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._from_op(out, (x,), backward, "softmax")


def log(x: Tensor, floor: Optional[float] = None) -> Tensor:
    """Natural log; with `floor`, values below it are clamped and pass no gradient."""
    data = x.data if floor is None else np.maximum(x.data, floor)
    live = np.ones_like(x.data, dtype=bool) if floor is None else x.data > floor

    def backward(g):
        return (np.where(live, g / data, 0.0),)

    return Tensor._from_op(np.log(data), (x,), backward, "log")


def masked_fill(x: Tensor, mask: np.ndarray, value: float = MASK_VALUE) -> Tensor:
    """Replace entries where `mask` is True by `value`; mask broadcasts onto x."""
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)

    def backward(g):
        return (np.where(mask, 0.0, g),)

    return Tensor._from_op(np.where(mask, value, x.data), (x,), backward, "masked_fill")


# ----- layers as ops --------------------------------------------------------------

def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """
    Normalise the last axis to zero mean and unit (biased) variance, then apply
    the affine map gamma * x_hat + beta.
    """
    d = x.shape[-1]
    if d < 1:
        raise DimensionError("layer_norm needs a non-empty last axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    centred = x.data - mu
    inv_std = 1.0 / np.sqrt((centred ** 2).mean(axis=-1, keepdims=True) + eps)
    x_hat = centred * inv_std

    def backward(g):
        dx_hat = g * gamma.data
        dx = inv_std / d * (
            d * dx_hat
            - dx_hat.sum(axis=-1, keepdims=True)
            - x_hat * (dx_hat * x_hat).sum(axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        return dx, (g * x_hat).sum(axis=lead), g.sum(axis=lead)

    return Tensor._from_op(x_hat * gamma.data + beta.data, (x, gamma, beta), backward, "layer_norm")


def dropout(x: Tensor, rate: float, training: bool, rng: Optional[np.random.Generator]) -> Tensor:
    """
    Inverted dropout: during training zero each entry with probability `rate`
    and scale survivors by 1/(1-rate); identity otherwise.

    Raises:
        ConfigError: If rate is outside [0, 1).
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise UsageError("dropout in training mode needs a random generator")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)

    def backward(g):
        return (g * keep,)

    return Tensor._from_op(x.data * keep, (x,), backward, "dropout")


def conv1d(x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """
    Same-padded cross-correlation along the sequence axis.

    Args:
        x: [..., N, d_in]
        kernel: [k, d_in, d_out] with k odd
        bias: [d_out] or None

    Returns:
        Tensor: [..., N, d_out]
    """
    k, d_in, d_out = kernel.shape
    if k % 2 == 0:
        raise ConfigError(f"conv1d kernel size must be odd, got {k}")
    if x.shape[-1] != d_in:
        raise DimensionError(f"conv1d expects {d_in} input channels, got {x.shape[-1]}")
    n = x.shape[-2]
    pad = k // 2
    widths = [(0, 0)] * (x.ndim - 2) + [(pad, pad), (0, 0)]
    padded = np.pad(x.data, widths)

    out = np.zeros(x.shape[:-1] + (d_out,), dtype=DTYPE)
    for j in range(k):
        out += padded[..., j:j + n, :] @ kernel.data[j]
    parents = (x, kernel)
    if bias is not None:
        out += bias.data
        parents = parents + (bias,)

    def backward(g):
        grad_padded = np.zeros_like(padded)
        grad_kernel = np.zeros_like(kernel.data)
        flat_g = g.reshape(-1, d_out)
        for j in range(k):
            window = padded[..., j:j + n, :]
            grad_kernel[j] = window.reshape(-1, d_in).T @ flat_g
            grad_padded[..., j:j + n, :] += g @ kernel.data[j].T
        grads = [grad_padded[..., pad:pad + n, :], grad_kernel]
        if bias is not None:
            grads.append(flat_g.sum(axis=0))
        return grads

    return Tensor._from_op(out, parents, backward, "conv1d")
