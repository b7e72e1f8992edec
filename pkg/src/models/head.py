"""
Temporal pooling, horizontal pooling and the separate FC + BNNeck head
"""

from dataclasses import dataclass

import numpy as np

from src.autograd import functional as F
from src.autograd.tensor import Tensor
from src.nn.layers import BatchNorm, Linear
from src.nn.module import Module, ModuleList
from src.utils.exceptions import ConfigurationError, ShapeError

POOLING_MODES = ('max+mean', 'max')
EMBED_DIM = 256


def temporal_pooling(features: Tensor) -> Tensor:
    """
    Element-wise maximum over the time axis

    Args:
        features: [N, T, ...]

    Returns:
        [N, ...]; the gradient flows to the argmax frame of every element
    """
    if features.ndim < 2 or features.shape[1] == 0:
        raise ShapeError(f"Temporal pooling needs T >= 1, got shape {features.shape}")
    pooled, _ = F.max_over_axis(features, axis=1)
    return pooled


def horizontal_pooling(feature_map: Tensor, parts: int, mode: str = 'max+mean') -> Tensor:
    """
    Pool equal-height horizontal strips to one vector each

    Args:
        feature_map: [N, C, H, W]
        parts: Strip count P; must divide H
        mode: 'max+mean' (sum of both) or 'max'

    Returns:
        Part vectors [N, P, C]
    """
    if mode not in POOLING_MODES:
        raise ConfigurationError(f"Unknown pooling mode '{mode}'. Use one of {POOLING_MODES}")
    if feature_map.ndim != 4:
        raise ShapeError(f"Horizontal pooling expects [N, C, H, W], got {feature_map.shape}")
    n, c, h, w = feature_map.shape
    if parts < 1 or h % parts:
        raise ShapeError(f"Height {h} is not divisible by {parts} parts")
    strips = feature_map.reshape(n, c, parts, (h // parts) * w)
    pooled, _ = F.max_over_axis(strips, axis=3)
    if mode == 'max+mean':
        pooled = pooled + strips.mean(axis=3)
    return pooled.transpose(0, 2, 1)


@dataclass
class HeadOutput:
    """
    Attributes:
        embeddings: Pre-BN part embeddings [N, P, dim] (triplet loss, retrieval)
        logits: Post-BNNeck classifier outputs [N, P, num_classes]
    """
    embeddings: Tensor
    logits: Tensor


class SeparateHead(Module):
    """
    Per-part FC, BNNeck and bias-free classifier

    Part i only touches ``fc.i``, ``bn.i`` and ``cls.i``.
    """

    def __init__(self, parts: int, in_dim: int, num_classes: int, rng: np.random.Generator, embed_dim: int = EMBED_DIM):
        super().__init__()
        if num_classes < 1:
            raise ConfigurationError(f"num_classes must be >= 1, got {num_classes}")
        self.parts = parts
        self.fc = ModuleList([Linear(in_dim, embed_dim, rng) for _ in range(parts)])
        self.bn = ModuleList([BatchNorm(embed_dim, 'batch-norm-1d') for _ in range(parts)])
        self.cls = ModuleList([Linear(embed_dim, num_classes, rng, bias=False) for _ in range(parts)])

    def forward(self, part_vectors: Tensor) -> HeadOutput:
        if part_vectors.ndim != 3 or part_vectors.shape[1] != self.parts:
            raise ShapeError(f"Head expects [N, {self.parts}, C] part vectors, got {part_vectors.shape}")
        embeddings, logits = [], []
        for index in range(self.parts):
            embedding = self.fc[index](part_vectors[:, index])
            embeddings.append(embedding)
            logits.append(self.cls[index](self.bn[index](embedding)))
        return HeadOutput(F.stack(embeddings, axis=1), F.stack(logits, axis=1))


def head_forward(part_vectors: Tensor, head: SeparateHead) -> HeadOutput:
    """Map part vectors [N, P, 8C] to embeddings and logits"""
    return head(part_vectors)
