"""
Differentiable operations over Tensor

Every public function computes its forward result with numpy and, when a
tape is active and any input requires a gradient, records a closure that
maps the output gradient back to the inputs.
"""

import math
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from src.autograd.tensor import BackwardFn, Tensor, active_tape, deterministic_reductions
from src.utils.exceptions import NormalizationError, ShapeError

Operand = Union[Tensor, np.ndarray, float, int]
IntTuple = Union[int, Sequence[int]]

BN_MOMENTUM = 0.1
NORM_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------

def _apply(op: str, inputs: Sequence[Tensor], out_data: np.ndarray, backward: BackwardFn) -> Tensor:
    tape = active_tape()
    requires = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor._wrap(out_data, requires_grad=requires)
    if requires:
        tape.record(op, inputs, out, backward)
    return out


def _as_tensor(value: Operand, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    if like is not None:
        return Tensor._wrap(np.asarray(value, dtype=like.dtype))
    return Tensor(value)


def _operands(a: Operand, b: Operand) -> Tuple[Tensor, Tensor]:
    like = a if isinstance(a, Tensor) else b if isinstance(b, Tensor) else None
    a, b = _as_tensor(a, like), _as_tensor(b, like)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"Shapes {a.shape} and {b.shape} are not broadcast-compatible")
    return a, b


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _normalize_axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise ShapeError(f"Axis {axis} out of range for a {ndim}-d tensor")
    return axis % ndim


def _tuple(value: IntTuple, length: int, what: str) -> Tuple[int, ...]:
    if isinstance(value, (int, np.integer)):
        return (int(value),) * length
    value = tuple(int(v) for v in value)
    if len(value) != length:
        raise ShapeError(f"{what} must have {length} entries, got {value}")
    return value


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a: Operand, b: Operand) -> Tensor:
    a, b = _operands(a, b)

    def backward(g):
        return (_unbroadcast(g, a.shape) if a.requires_grad else None,
                _unbroadcast(g, b.shape) if b.requires_grad else None)

    return _apply("add", (a, b), a.data + b.data, backward)


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = _operands(a, b)

    def backward(g):
        return (_unbroadcast(g, a.shape) if a.requires_grad else None,
                _unbroadcast(-g, b.shape) if b.requires_grad else None)

    return _apply("sub", (a, b), a.data - b.data, backward)


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = _operands(a, b)

    def backward(g):
        return (_unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
                _unbroadcast(g * a.data, b.shape) if b.requires_grad else None)

    return _apply("mul", (a, b), a.data * b.data, backward)


def multiply(a: Operand, b: Operand) -> Tensor:
    return mul(a, b)


def div(a: Operand, b: Operand) -> Tensor:
    a, b = _operands(a, b)

    def backward(g):
        return (_unbroadcast(g / b.data, a.shape) if a.requires_grad else None,
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape) if b.requires_grad else None)

    return _apply("div", (a, b), a.data / b.data, backward)


def neg(a: Tensor) -> Tensor:
    return _apply("neg", (a,), -a.data, lambda g: (-g,))


def power(a: Tensor, exponent: float) -> Tensor:
    out = a.data ** exponent

    def backward(g):
        return (g * exponent * a.data ** (exponent - 1),)

    return _apply("power", (a,), out, backward)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _apply("exp", (a,), out, lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return _apply("log", (a,), np.log(a.data), lambda g: (g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    return power(a, 0.5)


def relu(a: Tensor) -> Tensor:
    positive = a.data > 0
    out = np.where(positive, a.data, 0).astype(a.dtype, copy=False)
    return _apply("relu", (a,), out, lambda g: (g * positive,))


def gelu(a: Tensor) -> Tensor:
    """GELU, tanh approximation"""
    x = a.data
    t = np.tanh(_GELU_C * (x + 0.044715 * x ** 3))
    out = 0.5 * x * (1.0 + t)

    def backward(g):
        dt = (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * dt),)

    return _apply("gelu", (a,), out.astype(a.dtype, copy=False), backward)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def _reduction_axes(axis, ndim: int) -> Optional[Tuple[int, ...]]:
    if axis is None:
        return None
    if isinstance(axis, (int, np.integer)):
        axis = (axis,)
    return tuple(_normalize_axis(int(ax), ndim) for ax in axis)


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axes = _reduction_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if axes is not None and not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=True),)

    return _apply("sum", (a,), np.asarray(out, dtype=a.dtype), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _reduction_axes(axis, a.ndim)
    count = a.size if axes is None else int(np.prod([a.shape[ax] for ax in axes]))
    return mul(sum(a, axis=axes, keepdims=keepdims), 1.0 / count)


def max_over_axis(a: Tensor, axis: int) -> Tuple[Tensor, np.ndarray]:
    """
    Maximum along one axis

    Args:
        a: Input tensor
        axis: Axis to reduce

    Returns:
        Tuple of (values, argmax indices). Ties resolve to the first maximal
        index, which is where the gradient is routed.
    """
    axis = _normalize_axis(axis, a.ndim)
    if a.shape[axis] == 0:
        raise ShapeError("Cannot take the maximum over an empty axis")
    indices = np.argmax(a.data, axis=axis)
    expanded = np.expand_dims(indices, axis)
    values = np.take_along_axis(a.data, expanded, axis=axis).squeeze(axis)

    def backward(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, expanded, np.expand_dims(g, axis), axis=axis)
        return (full,)

    return _apply("max", (a,), values, backward), indices


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    axis = _normalize_axis(axis, a.ndim)
    peak = a.data.max(axis=axis, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0)
    e = np.exp(a.data - peak)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _apply("softmax", (a,), out, backward)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    axis = _normalize_axis(axis, a.ndim)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _apply("log_softmax", (a,), out, backward)


def elementwise(op: str, *operands: Operand, axis: int = -1):
    """
    Dispatch one of the named activation / reduction primitives

    Args:
        op: relu | gelu | add | multiply | softmax | max_over_axis | mean_over_axis
        operands: One tensor for unary ops, two for binary ops
        axis: Axis for softmax and the axis reductions
    """
    unary = {
        'relu': relu,
        'gelu': gelu,
        'softmax': lambda x: softmax(x, axis),
        'max_over_axis': lambda x: max_over_axis(x, axis),
        'mean_over_axis': lambda x: mean(x, axis=axis),
    }
    binary = {'add': add, 'multiply': mul}
    if op in unary:
        return unary[op](*operands)
    if op in binary:
        return binary[op](*operands)
    raise ValueError(f"Unknown elementwise op: {op}")


# ---------------------------------------------------------------------------
# shape manipulation
# ---------------------------------------------------------------------------

def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeError(f"Cannot reshape {a.shape} into {tuple(shape)}")
    return _apply("reshape", (a,), out, lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(_normalize_axis(ax, a.ndim) for ax in axes)
    inverse = tuple(np.argsort(axes))
    return _apply("transpose", (a,), a.data.transpose(axes), lambda g: (g.transpose(inverse),))


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (slice, int, np.integer)) or i is None or i is Ellipsis for i in items)


def getitem(a: Tensor, index) -> Tensor:
    out = a.data[index]
    basic = _is_basic_index(index)

    def backward(g):
        full = np.zeros_like(a.data)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _apply("getitem", (a,), np.array(out, copy=basic), backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    out = np.stack([t.data for t in tensors], axis=axis)
    axis = _normalize_axis(axis, out.ndim)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _apply("stack", tensors, out, backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    axis = _normalize_axis(axis, out.ndim)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _apply("concat", tensors, out, backward)


def pad(a: Tensor, pad_width: Sequence[Tuple[int, int]]) -> Tensor:
    """Zero padding; ``pad_width`` holds (before, after) per axis"""
    pad_width = [tuple(p) for p in pad_width]
    if all(p == (0, 0) for p in pad_width):
        return a
    out = np.pad(a.data, pad_width)
    crop = tuple(slice(before, before + n) for (before, _), n in zip(pad_width, a.shape))
    return _apply("pad", (a,), out, lambda g: (g[crop],))


def roll(a: Tensor, shifts: Sequence[int], axes: Sequence[int]) -> Tensor:
    shifts, axes = tuple(shifts), tuple(axes)
    if not any(shifts):
        return a
    out = np.roll(a.data, shifts, axis=axes)
    undo = tuple(-s for s in shifts)
    return _apply("roll", (a,), out, lambda g: (np.roll(g, undo, axis=axes),))


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def _tensordot(a: np.ndarray, b: np.ndarray, axes: Tuple[Sequence[int], Sequence[int]]) -> np.ndarray:
    """``np.tensordot`` that switches to a fixed-order einsum in deterministic mode"""
    if not deterministic_reductions():
        return np.tensordot(a, b, axes=axes)
    a_axes, b_axes = [list(side) for side in axes]
    a_labels = list(range(a.ndim))
    b_labels = list(range(a.ndim, a.ndim + b.ndim))
    for i, j in zip(a_axes, b_axes):
        b_labels[j] = a_labels[i]
    out_labels = [a_labels[i] for i in range(a.ndim) if i not in a_axes]
    out_labels += [b_labels[j] for j in range(b.ndim) if j not in b_axes]
    return np.einsum(a, a_labels, b, b_labels, out_labels, optimize=False)


def _matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if not deterministic_reductions():
        return np.matmul(a, b)
    return np.einsum('...ij,...jk->...ik', a, b, optimize=False)


def matmul(a: Operand, b: Operand) -> Tensor:
    like = a if isinstance(a, Tensor) else b
    a, b = _as_tensor(a, like), _as_tensor(b, like)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul expects operands of rank >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    out = _matmul(a.data, b.data)

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(_matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(_matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _apply("matmul", (a, b), out, backward)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """
    Affine map over the trailing axis

    Args:
        x: Input of shape [..., Din]
        weight: Weight of shape [Dout, Din]
        bias: Optional bias of shape [Dout]

    Returns:
        Tensor of shape [..., Dout]
    """
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear: input last axis {x.shape[-1:]} does not match weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"linear: bias shape {bias.shape} does not match weight {weight.shape}")
    out = _matmul(x.data, weight.data.T)
    if bias is not None:
        out = out + bias.data
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        flat_g = g.reshape(-1, weight.shape[0])
        gx = _matmul(g, weight.data) if x.requires_grad else None
        gw = _matmul(flat_g.T, x.data.reshape(-1, weight.shape[1])) if weight.requires_grad else None
        grads = [gx, gw]
        if bias is not None:
            grads.append(flat_g.sum(axis=0) if bias.requires_grad else None)
        return tuple(grads)

    return _apply("linear", inputs, out.astype(x.dtype, copy=False), backward)


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def conv_nd(x: Tensor, weight: Tensor, stride: IntTuple = 1, padding: IntTuple = 0) -> Tensor:
    """
    Direct N-d cross-correlation (no bias) over the trailing spatial axes

    The kernel is applied one offset at a time: each offset contributes a
    strided view of the zero-padded input contracted with the matching
    [Cout, Cin] weight slice.

    Args:
        x: Input [N, Cin, *spatial]
        weight: Kernel [Cout, Cin, *kernel]
        stride: Stride per spatial axis (>= 1)
        padding: Symmetric zero padding per spatial axis
    """
    spatial = weight.ndim - 2
    if x.ndim != spatial + 2:
        raise ShapeError(f"Input rank {x.ndim} does not match a {spatial}-d kernel")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(f"Input has {x.shape[1]} channels, kernel expects {weight.shape[1]}")
    stride = _tuple(stride, spatial, "stride")
    padding = _tuple(padding, spatial, "padding")
    if any(s < 1 for s in stride):
        raise ShapeError(f"Stride must be positive, got {stride}")
    if any(p < 0 for p in padding):
        raise ShapeError(f"Padding must be non-negative, got {padding}")

    kernel = weight.shape[2:]
    padded = tuple(n + 2 * p for n, p in zip(x.shape[2:], padding))
    if any(k > n for k, n in zip(kernel, padded)):
        raise ShapeError(f"Kernel {kernel} does not fit padded input {padded}")
    out_spatial = tuple((n - k) // s + 1 for n, k, s in zip(padded, kernel, stride))

    xp = np.pad(x.data, [(0, 0), (0, 0)] + [(p, p) for p in padding])
    wd = weight.data
    head = (slice(None), slice(None))

    def window(offset):
        return head + tuple(slice(o, o + s * (n - 1) + 1, s) for o, s, n in zip(offset, stride, out_spatial))

    offsets = list(np.ndindex(*kernel))
    acc = np.zeros((wd.shape[0], x.shape[0]) + out_spatial, dtype=np.result_type(x.dtype, wd.dtype))
    for offset in offsets:
        acc += _tensordot(wd[head + offset], xp[window(offset)], axes=([1], [1]))
    out = np.ascontiguousarray(np.moveaxis(acc, 0, 1))

    def backward(g):
        gt = np.moveaxis(g, 1, 0)
        gx = np.zeros_like(xp) if x.requires_grad else None
        gw = np.zeros_like(wd) if weight.requires_grad else None
        reduce_axes = [1] + list(range(2, 2 + spatial))
        patch_axes = [0] + list(range(2, 2 + spatial))
        for offset in offsets:
            view = window(offset)
            if gw is not None:
                gw[head + offset] = _tensordot(gt, xp[view], axes=(reduce_axes, patch_axes))
            if gx is not None:
                gx[view] += np.moveaxis(_tensordot(wd[head + offset], gt, axes=([0], [0])), 0, 1)
        if gx is not None:
            gx = gx[head + tuple(slice(p, p + n) for p, n in zip(padding, x.shape[2:]))]
        return gx, gw

    return _apply(f"conv{spatial}d", (x, weight), out, backward)


def conv2d(input: Tensor, weight: Tensor, stride: IntTuple = (1, 1), padding: IntTuple = (0, 0)) -> Tensor:
    """2D convolution of [N, Cin, H, W] with [Cout, Cin, kh, kw]"""
    if input.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and kernel, got {input.shape} and {weight.shape}")
    return conv_nd(input, weight, stride, padding)


def conv3d(input: Tensor, weight: Tensor, stride: IntTuple = (1, 1, 1), padding: IntTuple = (0, 0, 0)) -> Tensor:
    """3D convolution of [N, Cin, T, H, W] with [Cout, Cin, kt, kh, kw]"""
    if input.ndim != 5 or weight.ndim != 5:
        raise ShapeError(f"conv3d expects 5-d input and kernel, got {input.shape} and {weight.shape}")
    return conv_nd(input, weight, stride, padding)


def conv1d_temporal(input: Tensor, weight: Tensor) -> Tensor:
    """
    Convolution along T only, T preserved

    Args:
        input: [N, C, T, H, W]
        weight: [Cout, C, kt] with odd kt
    """
    if input.ndim != 5 or weight.ndim != 3:
        raise ShapeError(f"conv1d_temporal expects [N,C,T,H,W] and [Cout,C,kt], got {input.shape} and {weight.shape}")
    kt = weight.shape[2]
    if kt % 2 == 0:
        raise ShapeError(f"Temporal kernel size must be odd, got {kt}")
    kernel = reshape(weight, weight.shape + (1, 1))
    return conv_nd(input, kernel, stride=1, padding=(kt // 2, 0, 0))


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def batch_norm(
    x: Tensor,
    scale: Tensor,
    shift: Tensor,
    running_mean: Optional[np.ndarray],
    running_var: Optional[np.ndarray],
    training: bool,
    momentum: float = BN_MOMENTUM,
    eps: float = NORM_EPS
) -> Tensor:
    """
    Batch normalization over every axis except the channel axis (axis 1)

    In training mode the batch statistics normalize the input and the
    running buffers are updated in place with ``momentum``; in eval mode the
    running buffers are used.
    """
    if x.ndim < 2:
        raise ShapeError(f"batch_norm expects at least [N, C], got {x.shape}")
    channels = x.shape[1]
    if scale.shape != (channels,) or shift.shape != (channels,):
        raise ShapeError(f"Normalization affine must have shape ({channels},)")
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = (1, channels) + (1,) * (x.ndim - 2)

    if training:
        mu = mean(x, axis=axes, keepdims=True)
        centered = x - mu
        var = mean(centered * centered, axis=axes, keepdims=True)
        normalized = centered * power(var + eps, -0.5)
        if running_mean is not None and running_var is not None:
            count = x.size // channels
            batch_var = var.data.reshape(channels) * (count / max(count - 1, 1))
            running_mean *= (1.0 - momentum)
            running_mean += momentum * mu.data.reshape(channels)
            running_var *= (1.0 - momentum)
            running_var += momentum * batch_var
    else:
        if running_mean is None or running_var is None:
            raise NormalizationError("Eval-mode batch norm requires initialized running statistics")
        inv_std = (1.0 / np.sqrt(running_var + eps)).astype(x.dtype).reshape(bshape)
        normalized = (x - running_mean.astype(x.dtype).reshape(bshape)) * inv_std

    return normalized * reshape(scale, bshape) + reshape(shift, bshape)


def layer_norm(x: Tensor, scale: Tensor, shift: Tensor, eps: float = NORM_EPS) -> Tensor:
    """Layer normalization over the trailing feature axis"""
    if scale.shape != (x.shape[-1],) or shift.shape != (x.shape[-1],):
        raise ShapeError(f"Layer-norm affine must have shape ({x.shape[-1]},)")
    mu = mean(x, axis=-1, keepdims=True)
    centered = x - mu
    var = mean(centered * centered, axis=-1, keepdims=True)
    return centered * power(var + eps, -0.5) * scale + shift


def normalize_activations(
    kind: str,
    input: Tensor,
    scale: Tensor,
    shift: Tensor,
    mode: str = 'train',
    running_mean: Optional[np.ndarray] = None,
    running_var: Optional[np.ndarray] = None,
    momentum: float = BN_MOMENTUM
) -> Tensor:
    """
    Apply one of the normalization kinds used by the basic blocks

    Args:
        kind: 'batch-norm-2d' ([N,C,H,W]), 'batch-norm-3d' ([N,C,T,H,W]),
            'batch-norm-1d' ([N,C]) or 'layer-norm' (trailing axis)
        input: Activations
        scale: Learned scale
        shift: Learned shift
        mode: 'train' or 'eval'
    """
    if mode not in ('train', 'eval'):
        raise ValueError(f"Unknown normalization mode: {mode}")
    if kind == 'layer-norm':
        return layer_norm(input, scale, shift)
    expected = {'batch-norm-1d': 2, 'batch-norm-2d': 4, 'batch-norm-3d': 5}
    if kind not in expected:
        raise ValueError(f"Unknown normalization kind: {kind}")
    if input.ndim != expected[kind]:
        raise ShapeError(f"{kind} expects a {expected[kind]}-d input, got {input.shape}")
    return batch_norm(input, scale, shift, running_mean, running_var, mode == 'train', momentum)


# ---------------------------------------------------------------------------
# resampling
# ---------------------------------------------------------------------------

def bilinear_matrix(in_size: int, out_size: int, dtype=np.float64) -> np.ndarray:
    """
    Interpolation matrix [out_size, in_size] under half-pixel centers

    Source coordinate of output index d is (d + 0.5) * in/out - 0.5, clamped
    at 0 below and at the last index above (align_corners=False).
    """
    src = (np.arange(out_size) + 0.5) * (in_size / out_size) - 0.5
    src = np.clip(src, 0.0, None)
    lower = np.minimum(np.floor(src).astype(np.int64), in_size - 1)
    upper = np.minimum(lower + 1, in_size - 1)
    frac = src - lower
    matrix = np.zeros((out_size, in_size), dtype=np.float64)
    rows = np.arange(out_size)
    np.add.at(matrix, (rows, lower), 1.0 - frac)
    np.add.at(matrix, (rows, upper), frac)
    return matrix.astype(dtype)


def bilinear_resize(input: Tensor, target: Tuple[int, int]) -> Tensor:
    """
    Resize [N, C, H, W] to [N, C, H2, W2] by bilinear interpolation

    Uses the half-pixel-center convention (align_corners=False).
    """
    if input.ndim != 4:
        raise ShapeError(f"bilinear_resize expects [N,C,H,W], got {input.shape}")
    h2, w2 = (int(v) for v in target)
    if h2 < 1 or w2 < 1:
        raise ShapeError(f"Resize target must be positive, got {target}")
    rows = Tensor._wrap(bilinear_matrix(input.shape[2], h2, input.dtype))
    cols = Tensor._wrap(bilinear_matrix(input.shape[3], w2, input.dtype).T.copy())
    return matmul(matmul(rows, input), cols)
