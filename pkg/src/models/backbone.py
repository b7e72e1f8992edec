"""
DeepGaitV2 and SwinGait backbones

Convolution families: Conv0 -> Stage1 (2D) -> Stage2..4 (2D, 3D or P3D)
with channels (C, 2C, 4C, 8C) and spatial downsampling at Stage2 and
Stage3 entry. SwinGait families keep Conv0..Stage2, resize every frame to
30x20, cut 2x2 patches into 8C-wide tokens and run two Swin stages at 4C
and 8C.
"""

from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.autograd import functional as F
from src.autograd.tensor import Tensor
from src.nn.blocks import BlockKind, BlockSpec, build_block
from src.nn.layers import Conv, ConvBN, LayerNorm, Linear
from src.nn.module import Module, ModuleList
from src.utils.exceptions import ConfigurationError, ShapeError
from src.utils.logger import get_logger, log_execution_time

logger = get_logger(__name__)

INPUT_SIZE = (64, 44)
TOKEN_SOURCE_SIZE = (30, 20)
PATCH = 2
WINDOWS = {BlockKind.SWIN2D: (1, 3, 5), BlockKind.SWIN3D: (3, 3, 5)}

DEPTH_VARIANTS: Dict[str, Tuple[int, int, int, int]] = {
    '10-layer': (1, 1, 1, 1),
    '14-layer': (1, 2, 2, 1),
    '22-layer': (1, 4, 4, 1),
    '30-layer': (1, 4, 8, 1),
}
SWIN_DEFAULT_BLOCKS = (1, 4, 4, 2)
SWIN_NARROW_BLOCKS = (1, 2, 2, 2)


class Family(str, Enum):
    DEEPGAIT_2D = "DeepGaitV2-2D"
    DEEPGAIT_3D = "DeepGaitV2-3D"
    DEEPGAIT_P3D = "DeepGaitV2-P3D"
    SWIN_2D = "SwinGait-2D"
    SWIN_3D = "SwinGait-3D"

    @property
    def is_swin(self) -> bool:
        return self in (Family.SWIN_2D, Family.SWIN_3D)


class ConvKind(str, Enum):
    D2 = "2D"
    D3 = "3D"
    P3D = "P3D"

    @property
    def block_kind(self) -> BlockKind:
        return {ConvKind.D2: BlockKind.RES2D, ConvKind.D3: BlockKind.RES3D, ConvKind.P3D: BlockKind.RESP3D}[self]


_FAMILY_KIND = {
    Family.DEEPGAIT_2D: ConvKind.D2,
    Family.DEEPGAIT_3D: ConvKind.D3,
    Family.DEEPGAIT_P3D: ConvKind.P3D,
}
_SWIN_KINDS = {
    Family.SWIN_2D: (ConvKind.D2,),
    Family.SWIN_3D: (ConvKind.D3, ConvKind.P3D),
}


def depth_of(block_counts: Sequence[int]) -> int:
    """
    Layer count of a DeepGaitV2 configuration: 2 * sum(B) + 2

    Raises:
        ConfigurationError: Unless B has four entries, each >= 1
    """
    counts = tuple(int(b) for b in block_counts)
    if len(counts) != 4 or min(counts) < 1:
        raise ConfigurationError(f"Block counts must be four integers >= 1, got {counts}")
    return 2 * sum(counts) + 2


def block_counts_for(variant: str) -> Tuple[int, int, int, int]:
    """Block counts of a named depth variant such as ``22-layer``"""
    if variant not in DEPTH_VARIANTS:
        raise ConfigurationError(f"Unknown depth variant '{variant}'. Use one of {sorted(DEPTH_VARIANTS)}")
    return DEPTH_VARIANTS[variant]


def heads_for(dim: int) -> int:
    """Attention heads for a token width: D/32, reduced until it divides D"""
    heads = max(1, dim // 32)
    while dim % heads:
        heads -= 1
    return heads


@dataclass
class BackboneConfig:
    """
    Complete description of a backbone

    Attributes:
        family: Model family
        base_channels: Base width C
        block_counts: Blocks per stage (b1, b2, b3, b4)
        input_size: Silhouette size (H, W)
        swin_conv_kind: Convolution kind of the SwinGait conv stages
        part_count: Horizontal strips pooled by the head
        drop_path_rate: Stochastic depth rate (peak of the linear ramp)
    """
    family: Family
    base_channels: int = 64
    block_counts: Tuple[int, int, int, int] = (1, 4, 4, 1)
    input_size: Tuple[int, int] = INPUT_SIZE
    swin_conv_kind: Optional[ConvKind] = None
    part_count: Optional[int] = None
    drop_path_rate: Optional[float] = None

    def __post_init__(self):
        try:
            self.family = Family(self.family)
        except ValueError:
            raise ConfigurationError(f"Unknown family '{self.family}'. Use one of {[f.value for f in Family]}")
        self.block_counts = tuple(int(b) for b in self.block_counts)
        self.input_size = tuple(int(v) for v in self.input_size)
        depth_of(self.block_counts)
        if self.base_channels < 1:
            raise ConfigurationError(f"base_channels must be >= 1, got {self.base_channels}")

        if self.family.is_swin:
            allowed = _SWIN_KINDS[self.family]
            kind = allowed[0] if self.swin_conv_kind is None else self.swin_conv_kind
            try:
                kind = ConvKind(kind)
            except ValueError:
                raise ConfigurationError(f"Unknown swin_conv_kind '{kind}'")
            if kind not in allowed:
                raise ConfigurationError(f"{self.family.value} cannot use {kind.value} convolution stages")
            self.swin_conv_kind = kind
        elif self.swin_conv_kind is not None:
            raise ConfigurationError(f"swin_conv_kind only applies to SwinGait families, not {self.family.value}")

        if self.part_count is None:
            self.part_count = TOKEN_SOURCE_SIZE[0] // PATCH if self.family.is_swin else self.input_size[0] // 4
        if self.drop_path_rate is None:
            self.drop_path_rate = 0.1 if self.family.is_swin else 0.0
        if not 0.0 <= self.drop_path_rate < 1.0:
            raise ConfigurationError(f"drop_path_rate must lie in [0, 1), got {self.drop_path_rate}")
        if self.part_count < 1:
            raise ConfigurationError(f"part_count must be >= 1, got {self.part_count}")

    @property
    def conv_kind(self) -> ConvKind:
        """Convolution kind of Stage2 onwards (Stage1 is always 2D)"""
        return self.swin_conv_kind if self.family.is_swin else _FAMILY_KIND[self.family]

    @property
    def depth(self) -> int:
        return depth_of(self.block_counts)

    @property
    def output_channels(self) -> int:
        return 8 * self.base_channels

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['family'] = self.family.value
        data['swin_conv_kind'] = self.swin_conv_kind.value if self.swin_conv_kind else None
        data['block_counts'] = list(self.block_counts)
        data['input_size'] = list(self.input_size)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BackboneConfig":
        known = {'family', 'base_channels', 'block_counts', 'input_size', 'swin_conv_kind', 'part_count', 'drop_path_rate'}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"Unknown backbone keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class StageShape:
    """Per-sample output shape of one stage"""
    name: str
    shape: Tuple[int, ...]


def plan_shapes(config: BackboneConfig, frames: int) -> List[StageShape]:
    """
    Per-stage output shapes for a sequence of ``frames`` silhouettes

    Raises:
        ShapeError: If the input size does not survive two stride-2 stages
            or the final height is not divisible by part_count
    """
    if frames < 1:
        raise ShapeError(f"Sequences need at least one frame, got {frames}")
    c, t = config.base_channels, frames
    h, w = config.input_size
    if h % 4 or w % 4:
        raise ShapeError(f"Input size {config.input_size} must be divisible by 4")

    plan = [
        StageShape('Conv0', (t, c, h, w)),
        StageShape('Stage1', (t, c, h, w)),
        StageShape('Stage2', (t, 2 * c, h // 2, w // 2)),
    ]
    if config.family.is_swin:
        gh, gw = TOKEN_SOURCE_SIZE[0] // PATCH, TOKEN_SOURCE_SIZE[1] // PATCH
        plan += [
            StageShape('Resize', (t, 2 * c) + TOKEN_SOURCE_SIZE),
            StageShape('Tokens', (t, gh, gw, 8 * c)),
            StageShape('Stage3', (t, gh, gw, 4 * c)),
            StageShape('Stage4', (t, gh, gw, 8 * c)),
        ]
        final_height = gh
    else:
        plan += [
            StageShape('Stage3', (t, 4 * c, h // 4, w // 4)),
            StageShape('Stage4', (t, 8 * c, h // 4, w // 4)),
        ]
        final_height = h // 4
    if final_height % config.part_count:
        raise ShapeError(f"Final height {final_height} is not divisible by part_count {config.part_count}")
    return plan


def _conv_stage(
    kind: BlockKind,
    count: int,
    c_in: int,
    c_out: int,
    stride: int,
    rates: Sequence[float],
    rng: np.random.Generator
) -> ModuleList:
    blocks = ModuleList()
    for index in range(count):
        spec = BlockSpec(kind, c_in if index == 0 else c_out, c_out,
                         stride=stride if index == 0 else 1, drop_path_rate=rates[index])
        blocks.append(build_block(spec, rng))
    return blocks


def _swin_stage(kind: BlockKind, count: int, dim: int, rates: Sequence[float], rng: np.random.Generator) -> ModuleList:
    blocks = ModuleList()
    for index in range(count):
        spec = BlockSpec(kind, dim, dim, window=WINDOWS[kind], shifted=index % 2 == 1,
                         heads=heads_for(dim), drop_path_rate=rates[index])
        blocks.append(build_block(spec, rng))
    return blocks


def _ramp(rate: float, count: int) -> List[float]:
    if count <= 1:
        return [rate] * count
    return [float(r) for r in np.linspace(0.0, rate, count)]


class Backbone(Module):
    """
    Backbone built from a BackboneConfig

    Parameter names follow ``<stage>.<block_index>.<tensor_name>``, e.g.
    ``stage2.0.conv1.weight`` and ``stage3.1.attn.qkv.weight``.
    """

    def __init__(self, config: BackboneConfig, rng: np.random.Generator):
        super().__init__()
        plan_shapes(config, 1)
        self.config = config
        c = config.base_channels
        b1, b2, b3, b4 = config.block_counts
        kind = config.conv_kind.block_kind

        self.conv0 = ConvBN(Conv(1, c, (3, 3), (1, 1), (1, 1), rng), c, 'batch-norm-2d')
        if config.family.is_swin:
            conv_rates = [0.0] * (b1 + b2)
            swin_rates = _ramp(config.drop_path_rate, b3 + b4)
        else:
            conv_rates = _ramp(config.drop_path_rate, b1 + b2 + b3 + b4)
        self.stage1 = _conv_stage(BlockKind.RES2D, b1, c, c, 1, conv_rates[:b1], rng)
        self.stage2 = _conv_stage(kind, b2, c, 2 * c, 2, conv_rates[b1:b1 + b2], rng)

        if config.family.is_swin:
            swin_kind = BlockKind.SWIN2D if config.family is Family.SWIN_2D else BlockKind.SWIN3D
            self.embed3_norm = LayerNorm(8 * c)
            self.embed3 = Linear(8 * c, 4 * c, rng)
            self.stage3 = _swin_stage(swin_kind, b3, 4 * c, swin_rates[:b3], rng)
            self.embed4_norm = LayerNorm(4 * c)
            self.embed4 = Linear(4 * c, 8 * c, rng)
            self.stage4 = _swin_stage(swin_kind, b4, 8 * c, swin_rates[b3:], rng)
            self.final_norm = LayerNorm(8 * c)
        else:
            start = b1 + b2
            self.stage3 = _conv_stage(kind, b3, 2 * c, 4 * c, 2, conv_rates[start:start + b3], rng)
            self.stage4 = _conv_stage(kind, b4, 4 * c, 8 * c, 1, conv_rates[start + b3:], rng)

    @property
    def temporal(self) -> bool:
        """Whether stages after Stage1 operate on [N, C, T, H, W]"""
        return self.config.conv_kind is not ConvKind.D2

    @staticmethod
    def _run(stage: ModuleList, x: Tensor) -> Tensor:
        for block in stage:
            x = block(x)
        return x

    def _conv_stages(self, x: Tensor, n: int, t: int, stages: Sequence[ModuleList]) -> Tensor:
        """Run conv stages on [NT, C, H, W], switching to [N, C, T, H, W] for 3D kinds"""
        if not self.temporal:
            for stage in stages:
                x = self._run(stage, x)
            return x
        _, c, h, w = x.shape
        x = x.reshape(n, t, c, h, w).transpose(0, 2, 1, 3, 4)
        for stage in stages:
            x = self._run(stage, x)
        _, c, _, h, w = x.shape
        return x.transpose(0, 2, 1, 3, 4).reshape(n * t, c, h, w)

    def forward(self, sequence: Tensor) -> Tensor:
        """
        Args:
            sequence: Silhouettes [N, T, 1, H, W]

        Returns:
            [N, T, 8C, H/4, W/4] for convolution families, token grid
            [N, T, 15, 10, 8C] for SwinGait families
        """
        if sequence.ndim != 5 or sequence.shape[2] != 1 or tuple(sequence.shape[3:]) != self.config.input_size:
            raise ShapeError(
                f"Expected input [N, T, 1, {self.config.input_size[0]}, {self.config.input_size[1]}], got {sequence.shape}"
            )
        n, t = sequence.shape[:2]
        if t < 1:
            raise ShapeError("Sequences need at least one frame")
        x = sequence.reshape(n * t, 1, *self.config.input_size)
        x = F.relu(self.conv0(x))
        x = self._run(self.stage1, x)

        if not self.config.family.is_swin:
            x = self._conv_stages(x, n, t, (self.stage2, self.stage3, self.stage4))
            return x.reshape(n, t, *x.shape[1:])

        x = self._conv_stages(x, n, t, (self.stage2,))
        x = F.bilinear_resize(x, TOKEN_SOURCE_SIZE)
        tokens = self.tokenize(x, n, t)
        tokens = self.embed3(self.embed3_norm(tokens))
        tokens = self._run(self.stage3, tokens)
        tokens = self.embed4(self.embed4_norm(tokens))
        tokens = self._run(self.stage4, tokens)
        return self.final_norm(tokens)

    @staticmethod
    def tokenize(x: Tensor, n: int, t: int) -> Tensor:
        """Cut [NT, D, 30, 20] into 2x2 patches: token grid [N, T, 15, 10, 4D]"""
        _, d, h, w = x.shape
        gh, gw = h // PATCH, w // PATCH
        x = x.reshape(n * t, d, gh, PATCH, gw, PATCH).transpose(0, 2, 4, 1, 3, 5)
        return x.reshape(n, t, gh, gw, d * PATCH * PATCH)


@log_execution_time(logger)
def build_backbone(config: BackboneConfig, rng: np.random.Generator) -> Backbone:
    """
    Build a backbone with freshly initialized parameters

    Args:
        config: Backbone description
        rng: Generator for weight initialization

    Returns:
        Backbone in train mode
    """
    model = Backbone(config, rng)
    logger.info(
        f"Built {config.family.value} C={config.base_channels} B={list(config.block_counts)} "
        f"({len(model.parameters())} parameter tensors)"
    )
    return model
