"""
Residual units (2D, 3D, pseudo-3D) and stochastic depth
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np

from src.autograd import functional as F
from src.autograd.tensor import Tensor
from src.nn.layers import BatchNorm, Conv, ConvBN, TemporalConv
from src.nn.module import Module
from src.utils.exceptions import ConfigurationError, ShapeError


class BlockKind(str, Enum):
    RES2D = "Res2D"
    RES3D = "Res3D"
    RESP3D = "ResP3D"
    SWIN2D = "Swin2D"
    SWIN3D = "Swin3D"

    @property
    def is_swin(self) -> bool:
        return self in (BlockKind.SWIN2D, BlockKind.SWIN3D)


@dataclass(frozen=True)
class BlockSpec:
    """
    Static description of one basic block

    Attributes:
        kind: Block kind
        in_channels: Input channels (token width for Swin kinds)
        out_channels: Output channels (equal to in_channels for Swin kinds)
        stride: Spatial stride, 1 or 2 (convolution kinds only)
        window: (t, h, w) window extents for Swin kinds
        shifted: Whether this Swin block uses the shifted partition
        heads: Attention heads
        drop_path_rate: Probability of dropping the residual branch
    """
    kind: BlockKind
    in_channels: int
    out_channels: int
    stride: int = 1
    window: Tuple[int, int, int] = (1, 1, 1)
    shifted: bool = False
    heads: int = 1
    drop_path_rate: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'kind', BlockKind(self.kind))
        object.__setattr__(self, 'window', tuple(int(w) for w in self.window))
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigurationError(f"Channel counts must be positive: {self}")
        if not 0.0 <= self.drop_path_rate < 1.0:
            raise ConfigurationError(f"drop_path_rate must lie in [0, 1), got {self.drop_path_rate}")
        if self.kind.is_swin:
            if self.stride != 1:
                raise ConfigurationError("Swin blocks do not downsample")
            if self.in_channels != self.out_channels:
                raise ConfigurationError("Swin blocks preserve the token width")
            if len(self.window) != 3 or min(self.window) < 1:
                raise ConfigurationError(f"Window extents must be >= 1, got {self.window}")
            if self.heads < 1 or self.in_channels % self.heads:
                raise ConfigurationError(f"Width {self.in_channels} is not divisible by {self.heads} heads")
            if self.kind is BlockKind.SWIN2D and self.window[0] != 1:
                raise ConfigurationError("Swin2D windows cannot span frames")
        elif self.stride not in (1, 2):
            raise ConfigurationError(f"Stride must be 1 or 2, got {self.stride}")

    @property
    def shift(self) -> Tuple[int, int, int]:
        if not self.shifted:
            return (0, 0, 0)
        return tuple(w // 2 for w in self.window)


def drop_path(
    branch: Tensor,
    rate: float,
    training: bool,
    rng: Optional[np.random.Generator] = None
) -> Tensor:
    """
    Stochastic depth on a residual branch

    In training mode each sample's branch is zeroed with probability
    ``rate`` and otherwise scaled by 1 / (1 - rate); eval mode is identity.

    Args:
        branch: Residual branch output, batch on axis 0
        rate: Drop probability in [0, 1)
        training: Train-mode flag
        rng: Generator for the per-sample keep mask
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigurationError(f"drop_path rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return branch
    if rng is None:
        raise ConfigurationError("Train-mode drop_path requires a random generator")
    keep = (rng.random(branch.shape[0]) >= rate).astype(branch.dtype) / (1.0 - rate)
    return branch * keep.reshape((-1,) + (1,) * (branch.ndim - 1))


class ResidualBlock(Module):
    """Shared residual wiring: relu(shortcut(x) + drop_path(branch(x)))"""

    input_rank = 4

    def __init__(self, spec: BlockSpec, rng: np.random.Generator):
        super().__init__()
        self.spec = spec
        self.rng = np.random.default_rng(rng.integers(2 ** 63))
        self.shortcut: Optional[Module] = None

    def branch(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != self.input_rank:
            raise ShapeError(f"{self.spec.kind.value} block expects a {self.input_rank}-d input, got {x.shape}")
        if x.shape[1] != self.spec.in_channels:
            raise ShapeError(f"Block expects {self.spec.in_channels} channels, got {x.shape[1]}")
        identity = x if self.shortcut is None else self.shortcut(x)
        residual = drop_path(self.branch(x), self.spec.drop_path_rate, self.training, self.rng)
        return F.relu(identity + residual)


class ResidualBlock2D(ResidualBlock):
    """3x3 conv-bn-relu-conv-bn on [NT, C, H, W]"""

    def __init__(self, spec: BlockSpec, rng: np.random.Generator):
        super().__init__(spec, rng)
        c_in, c_out, s = spec.in_channels, spec.out_channels, spec.stride
        self.conv1 = Conv(c_in, c_out, (3, 3), (s, s), (1, 1), rng)
        self.bn1 = BatchNorm(c_out, 'batch-norm-2d')
        self.conv2 = Conv(c_out, c_out, (3, 3), (1, 1), (1, 1), rng)
        self.bn2 = BatchNorm(c_out, 'batch-norm-2d')
        if s != 1 or c_in != c_out:
            self.shortcut = ConvBN(Conv(c_in, c_out, (1, 1), (s, s), (0, 0), rng), c_out, 'batch-norm-2d')

    def branch(self, x: Tensor) -> Tensor:
        return self.bn2(self.conv2(F.relu(self.bn1(self.conv1(x)))))


class ResidualBlock3D(ResidualBlock):
    """3x3x3 conv-bn-relu-conv-bn on [N, C, T, H, W]; temporal stride 1"""

    input_rank = 5

    def __init__(self, spec: BlockSpec, rng: np.random.Generator):
        super().__init__(spec, rng)
        c_in, c_out, s = spec.in_channels, spec.out_channels, spec.stride
        self.conv1 = Conv(c_in, c_out, (3, 3, 3), (1, s, s), (1, 1, 1), rng)
        self.bn1 = BatchNorm(c_out, 'batch-norm-3d')
        self.conv2 = Conv(c_out, c_out, (3, 3, 3), (1, 1, 1), (1, 1, 1), rng)
        self.bn2 = BatchNorm(c_out, 'batch-norm-3d')
        if s != 1 or c_in != c_out:
            self.shortcut = ConvBN(Conv(c_in, c_out, (1, 1, 1), (1, s, s), (0, 0, 0), rng), c_out, 'batch-norm-3d')

    def branch(self, x: Tensor) -> Tensor:
        return self.bn2(self.conv2(F.relu(self.bn1(self.conv1(x)))))


class ResidualBlockP3D(ResidualBlock):
    """
    Pseudo-3D unit on [N, C, T, H, W]

    Branch: spatial 1x3x3 (strided, in->out) -> temporal 3x1x1 (out->out)
    -> spatial 1x3x3 (out->out), each followed by batch-norm, with ReLU
    between them.
    """

    input_rank = 5

    def __init__(self, spec: BlockSpec, rng: np.random.Generator):
        super().__init__(spec, rng)
        c_in, c_out, s = spec.in_channels, spec.out_channels, spec.stride
        self.conv1 = Conv(c_in, c_out, (1, 3, 3), (1, s, s), (0, 1, 1), rng)
        self.bn1 = BatchNorm(c_out, 'batch-norm-3d')
        self.conv_t = TemporalConv(c_out, c_out, 3, rng)
        self.bn_t = BatchNorm(c_out, 'batch-norm-3d')
        self.conv2 = Conv(c_out, c_out, (1, 3, 3), (1, 1, 1), (0, 1, 1), rng)
        self.bn2 = BatchNorm(c_out, 'batch-norm-3d')
        if s != 1 or c_in != c_out:
            self.shortcut = ConvBN(Conv(c_in, c_out, (1, 1, 1), (1, s, s), (0, 0, 0), rng), c_out, 'batch-norm-3d')

    def branch(self, x: Tensor) -> Tensor:
        h = F.relu(self.bn1(self.conv1(x)))
        h = F.relu(self.bn_t(self.conv_t(h)))
        return self.bn2(self.conv2(h))


def build_block(spec: BlockSpec, rng: np.random.Generator) -> Module:
    """
    Instantiate the block described by ``spec``

    Args:
        spec: Block description
        rng: Generator for weight initialization

    Returns:
        Block module
    """
    if spec.kind is BlockKind.RES2D:
        return ResidualBlock2D(spec, rng)
    if spec.kind is BlockKind.RES3D:
        return ResidualBlock3D(spec, rng)
    if spec.kind is BlockKind.RESP3D:
        return ResidualBlockP3D(spec, rng)
    from src.nn.swin import SwinBlock
    return SwinBlock(spec, rng)


def param_shapes(spec: BlockSpec) -> Dict[str, Tuple[int, ...]]:
    """Parameter name -> shape for a block; depends only on ``spec``"""
    block = build_block(spec, np.random.default_rng(0))
    return {name: param.shape for name, param in block.named_parameters()}


def _run_block(kind: BlockKind, x: Tensor, spec: BlockSpec, params: Module) -> Tensor:
    if spec.kind is not kind or getattr(params, 'spec', None) != spec:
        raise ConfigurationError(f"Block parameters were built for {getattr(params, 'spec', None)}, not {spec}")
    return params(x)


def residual_block_2d(x: Tensor, spec: BlockSpec, params: Module) -> Tensor:
    """Apply a built 2D residual unit to [NT, C, H, W]"""
    return _run_block(BlockKind.RES2D, x, spec, params)


def residual_block_3d(x: Tensor, spec: BlockSpec, params: Module) -> Tensor:
    """Apply a built 3D residual unit to [N, C, T, H, W]"""
    return _run_block(BlockKind.RES3D, x, spec, params)


def residual_block_p3d(x: Tensor, spec: BlockSpec, params: Module) -> Tensor:
    """Apply a built pseudo-3D residual unit to [N, C, T, H, W]"""
    return _run_block(BlockKind.RESP3D, x, spec, params)
