"""
Parameter and FLOP accounting

FLOPs are analytic: one multiply-accumulate counts as one FLOP. A
convolution costs (kernel weights) x (output positions); a linear layer
costs its weight count per token; window attention adds 2 x L x D per token
for the score and value products (L tokens per window). Normalization,
activations and the bilinear resize are not counted.
"""

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from src.models.backbone import Backbone, plan_shapes
from src.nn.layers import Conv, Linear, TemporalConv
from src.nn.module import Module
from src.nn.swin import SwinBlock

FLOP_CONVENTION = "1 multiply-accumulate = 1 FLOP"


def format_count(value: float) -> str:
    """Human-readable count with K/M/G suffix"""
    for threshold, suffix in ((1e9, 'G'), (1e6, 'M'), (1e3, 'K')):
        if value >= threshold:
            return f"{value / threshold:.2f}{suffix}"
    return f"{value:.0f}"


def count_params(model: Module, include_head: bool = False) -> int:
    """
    Number of trainable parameter elements

    Args:
        model: Backbone or recognizer
        include_head: Count ``head.*`` parameters as well

    Returns:
        Total element count (buffers and metadata are never counted)
    """
    return int(sum(
        param.size for name, param in model.named_parameters()
        if include_head or not name.startswith('head.')
    ))


@dataclass
class FlopReport:
    """
    Attributes:
        total: FLOPs per silhouette (or per sequence when not per_silhouette)
        per_stage: Breakdown by stage name
        per_silhouette: Normalization of the figures
        convention: Counting convention
    """
    total: int
    per_stage: Dict[str, int] = field(default_factory=OrderedDict)
    per_silhouette: bool = True
    convention: str = FLOP_CONVENTION


def _conv_weights(module: Module) -> int:
    return sum(m.weight.size for m in module.modules() if isinstance(m, (Conv, TemporalConv)))


def _swin_per_token(block: SwinBlock) -> int:
    linear = sum(m.weight.size for m in block.modules() if isinstance(m, Linear))
    return linear + 2 * int(np.prod(block.spec.window)) * block.spec.in_channels


def count_flops(model: Backbone, per_silhouette: bool = True, frames: int = 1) -> FlopReport:
    """
    Analytic FLOPs of the backbone for 64x44 inputs

    Args:
        model: Backbone or recognizer (the head is not counted)
        per_silhouette: Normalize to one input frame
        frames: Sequence length used when not normalizing per frame

    Returns:
        FlopReport with the per-stage breakdown
    """
    config = model.config
    shapes = {stage.name: stage.shape for stage in plan_shapes(config, 1)}

    def positions(name: str) -> int:
        return shapes[name][-2] * shapes[name][-1]

    per_stage: Dict[str, int] = OrderedDict()
    per_stage['Conv0'] = _conv_weights(model.conv0) * positions('Conv0')
    per_stage['Stage1'] = _conv_weights(model.stage1) * positions('Stage1')
    per_stage['Stage2'] = _conv_weights(model.stage2) * positions('Stage2')
    if config.family.is_swin:
        tokens = shapes['Tokens'][1] * shapes['Tokens'][2]
        per_stage['Embed3'] = model.embed3.weight.size * tokens
        per_stage['Stage3'] = sum(_swin_per_token(block) for block in model.stage3) * tokens
        per_stage['Embed4'] = model.embed4.weight.size * tokens
        per_stage['Stage4'] = sum(_swin_per_token(block) for block in model.stage4) * tokens
    else:
        per_stage['Stage3'] = _conv_weights(model.stage3) * positions('Stage3')
        per_stage['Stage4'] = _conv_weights(model.stage4) * positions('Stage4')

    scale = 1 if per_silhouette else frames
    per_stage = OrderedDict((name, int(value) * scale) for name, value in per_stage.items())
    return FlopReport(sum(per_stage.values()), per_stage, per_silhouette)
