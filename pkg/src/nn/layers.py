"""
Parameterized layers: convolutions, normalization and linear maps
"""

from typing import Optional, Sequence, Tuple

import numpy as np

from src.autograd import functional as F
from src.autograd.tensor import Parameter, Tensor, get_default_dtype
from src.nn.module import Module

NORM_KINDS = ('batch-norm-1d', 'batch-norm-2d', 'batch-norm-3d')


def he_normal(rng: np.random.Generator, shape: Sequence[int], fan_in: int) -> np.ndarray:
    """Zero-mean normal weights with variance 2 / fan_in"""
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=tuple(shape))


def lecun_normal(rng: np.random.Generator, shape: Sequence[int], fan_in: int) -> np.ndarray:
    """Zero-mean normal weights with variance 1 / fan_in"""
    return rng.normal(0.0, np.sqrt(1.0 / fan_in), size=tuple(shape))


class Conv(Module):
    """
    Bias-free N-d convolution (2-d kernels for [N,C,H,W], 3-d for [N,C,T,H,W])

    Args:
        in_channels: Input channels
        out_channels: Output channels
        kernel: Kernel extent per spatial axis
        stride: Stride per spatial axis
        padding: Zero padding per spatial axis
        rng: Generator for He initialization
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: Tuple[int, ...],
        stride: Tuple[int, ...],
        padding: Tuple[int, ...],
        rng: np.random.Generator
    ):
        super().__init__()
        self.kernel = tuple(kernel)
        self.stride = tuple(stride)
        self.padding = tuple(padding)
        fan_in = in_channels * int(np.prod(self.kernel))
        self.weight = Parameter(he_normal(rng, (out_channels, in_channels) + self.kernel, fan_in))

    def forward(self, x: Tensor) -> Tensor:
        if len(self.kernel) == 2:
            return F.conv2d(x, self.weight, self.stride, self.padding)
        return F.conv3d(x, self.weight, self.stride, self.padding)


class TemporalConv(Module):
    """Convolution along T only; weight [Cout, Cin, kt]"""

    def __init__(self, in_channels: int, out_channels: int, kt: int, rng: np.random.Generator):
        super().__init__()
        self.weight = Parameter(he_normal(rng, (out_channels, in_channels, kt), in_channels * kt))

    def forward(self, x: Tensor) -> Tensor:
        return F.conv1d_temporal(x, self.weight)


class BatchNorm(Module):
    """
    Batch normalization with learned scale/shift and running statistics

    Running statistics are kept in float64 and start at mean 0, variance 1.
    """

    def __init__(self, channels: int, kind: str = 'batch-norm-2d', momentum: float = F.BN_MOMENTUM):
        super().__init__()
        if kind not in NORM_KINDS:
            raise ValueError(f"Unknown batch-norm kind: {kind}")
        self.kind = kind
        self.momentum = momentum
        dtype = get_default_dtype()
        self.scale = Parameter(np.ones(channels, dtype=dtype))
        self.shift = Parameter(np.zeros(channels, dtype=dtype))
        self.register_buffer('running_mean', np.zeros(channels))
        self.register_buffer('running_var', np.ones(channels))

    def forward(self, x: Tensor) -> Tensor:
        return F.normalize_activations(
            self.kind, x, self.scale, self.shift,
            mode='train' if self.training else 'eval',
            running_mean=self.running_mean,
            running_var=self.running_var,
            momentum=self.momentum
        )


class LayerNorm(Module):
    """Layer normalization over the trailing feature axis"""

    def __init__(self, dim: int):
        super().__init__()
        dtype = get_default_dtype()
        self.scale = Parameter(np.ones(dim, dtype=dtype))
        self.shift = Parameter(np.zeros(dim, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return F.normalize_activations('layer-norm', x, self.scale, self.shift)


class Linear(Module):
    """Affine map over the trailing axis; weight [Dout, Din]"""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.weight = Parameter(lecun_normal(rng, (out_features, in_features), in_features))
        self.bias: Optional[Parameter] = Parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class ConvBN(Module):
    """Convolution followed by batch normalization"""

    def __init__(self, conv: Module, channels: int, kind: str):
        super().__init__()
        self.conv = conv
        self.bn = BatchNorm(channels, kind)

    def forward(self, x: Tensor) -> Tensor:
        return self.bn(self.conv(x))
