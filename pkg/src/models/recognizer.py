"""
Full recognition pipeline: backbone -> TP -> HP -> separate head
"""

from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from src.autograd.tensor import Tensor, no_grad
from src.models.backbone import Backbone, BackboneConfig
from src.models.head import EMBED_DIM, HeadOutput, SeparateHead, horizontal_pooling, temporal_pooling
from src.utils.checkpoint import Checkpoint, load_checkpoint
from src.utils.exceptions import CheckpointError, ShapeError
from src.utils.logger import get_logger

logger = get_logger(__name__)


class GaitRecognizer(Backbone):
    """
    Backbone with the recognition head attached as ``head``

    Backbone parameters keep their top-level names (``conv0.*``,
    ``stage*.*``); head parameters live under ``head.fc.<i>``,
    ``head.bn.<i>`` and ``head.cls.<i>``.
    """

    def __init__(
        self,
        config: BackboneConfig,
        num_classes: int,
        rng: np.random.Generator,
        embed_dim: int = EMBED_DIM,
        pooling: str = 'max+mean'
    ):
        super().__init__(config, rng)
        self.pooling = pooling
        self.num_classes = num_classes
        self.embed_dim = embed_dim
        self.head = SeparateHead(config.part_count, config.output_channels, num_classes, rng, embed_dim)

    def features(self, sequence: Tensor) -> Tensor:
        """Backbone output of ``sequence`` [N, T, 1, H, W]"""
        return super().forward(sequence)

    def part_vectors(self, features: Tensor) -> Tensor:
        """TP then HP: backbone output -> [N, P, 8C]"""
        pooled = temporal_pooling(features)
        if self.config.family.is_swin:
            pooled = pooled.transpose(0, 3, 1, 2)
        return horizontal_pooling(pooled, self.config.part_count, self.pooling)

    def forward(self, sequence: Tensor) -> HeadOutput:
        return self.head(self.part_vectors(self.features(sequence)))

    def embed(self, sequence: Tensor) -> np.ndarray:
        """
        Eval-mode part embeddings [N, P, dim] for retrieval

        Restores the previous train/eval mode afterwards.
        """
        if sequence.ndim != 5 or sequence.shape[1] < 1:
            raise ShapeError(f"Cannot embed an empty sequence batch of shape {sequence.shape}")
        was_training = self.training
        self.eval()
        try:
            with no_grad():
                return self.forward(sequence).embeddings.numpy()
        finally:
            self.train(was_training)


def build_recognizer(
    config: BackboneConfig,
    num_classes: int,
    rng: np.random.Generator,
    embed_dim: int = EMBED_DIM,
    pooling: str = 'max+mean'
) -> GaitRecognizer:
    """Build a recognizer with freshly initialized backbone and head"""
    model = GaitRecognizer(config, num_classes, rng, embed_dim, pooling)
    logger.info(
        f"Built {config.family.value} recognizer: C={config.base_channels}, "
        f"B={list(config.block_counts)}, parts={config.part_count}, classes={num_classes}"
    )
    return model


def recognizer_meta(model: GaitRecognizer, **extra) -> Dict[str, Any]:
    """Configuration needed to rebuild ``model`` from a checkpoint"""
    meta = {
        'backbone': model.config.to_dict(),
        'num_classes': model.num_classes,
        'embed_dim': model.embed_dim,
        'pooling': model.pooling,
    }
    meta.update(extra)
    return meta


def recognizer_from_checkpoint(checkpoint: Union[Path, str, Checkpoint]) -> GaitRecognizer:
    """
    Rebuild a recognizer from a checkpoint carrying its run configuration

    Raises:
        CheckpointError: If the checkpoint has no embedded configuration
    """
    if not isinstance(checkpoint, Checkpoint):
        checkpoint = load_checkpoint(Path(checkpoint))
    meta = checkpoint.config or {}
    if 'backbone' not in meta or 'num_classes' not in meta:
        raise CheckpointError("Checkpoint carries no model configuration")
    model = GaitRecognizer(
        BackboneConfig.from_dict(meta['backbone']),
        int(meta['num_classes']),
        np.random.default_rng(0),
        int(meta.get('embed_dim', EMBED_DIM)),
        meta.get('pooling', 'max+mean'),
    )
    model.load_state_dict(checkpoint.tensors)
    return model
