"""
Batch-all triplet loss, part-wise cross-entropy and their sum
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.autograd import functional as F
from src.autograd.tensor import Tensor
from src.utils.exceptions import ConfigurationError, LossError

DISTANCE_EPS = 1e-12


@dataclass
class LossConfig:
    """
    Attributes:
        triplet_margin: Margin of the triplet hinge
    """
    triplet_margin: float = 0.2

    def __post_init__(self):
        if self.triplet_margin <= 0:
            raise ConfigurationError(f"triplet_margin must be > 0, got {self.triplet_margin}")


@dataclass
class TripletResult:
    loss: Tensor
    nonzero_triplet_count: int


@dataclass
class LossBreakdown:
    """Combined loss with its components"""
    total: Tensor
    triplet: Tensor
    cross_entropy: Tensor
    nonzero_triplet_count: int


def triplet_indices(labels: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All (anchor, positive, negative) index triples of a labelled batch"""
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    positive = same & ~np.eye(len(labels), dtype=bool)
    valid = positive[:, :, None] & ~same[:, None, :]
    return np.nonzero(valid)


def pairwise_distances(embeddings: Tensor) -> Tensor:
    """
    Euclidean distances per part

    Args:
        embeddings: [P, N, D]

    Returns:
        [P, N, N], computed as sqrt(relu(|a|^2 + |b|^2 - 2ab) + 1e-12)
    """
    squared = (embeddings * embeddings).sum(axis=-1)
    gram = embeddings @ embeddings.transpose(0, 2, 1)
    d2 = squared.reshape(*squared.shape, 1) + squared.reshape(squared.shape[0], 1, squared.shape[1]) - 2.0 * gram
    return F.sqrt(F.relu(d2) + DISTANCE_EPS)


def triplet_loss(embeddings: Tensor, labels: np.ndarray, margin: float = 0.2) -> TripletResult:
    """
    Batch-all triplet loss over every part

    For each part, the hinge max(0, d(a,p) - d(a,n) + margin) is averaged over
    the triplets where it is non-zero; the part losses are then averaged.

    Args:
        embeddings: [N, P, D] pre-BN part embeddings
        labels: [N] subject labels
        margin: Hinge margin (>= 0)

    Returns:
        TripletResult with the loss and the non-zero triplet count summed over parts

    Raises:
        LossError: When the batch holds no valid triplet
    """
    labels = np.asarray(labels)
    if embeddings.ndim != 3 or embeddings.shape[0] != len(labels):
        raise LossError(f"Embeddings {embeddings.shape} do not match {len(labels)} labels")
    if margin < 0:
        raise LossError(f"Margin must be non-negative, got {margin}")
    anchor, positive, negative = triplet_indices(labels)
    if len(anchor) == 0:
        raise LossError("Batch contains no valid triplet (needs two classes and a repeated class)")

    distances = pairwise_distances(embeddings.transpose(1, 0, 2))
    hinge = F.relu(distances[:, anchor, positive] - distances[:, anchor, negative] + margin)
    active = (hinge.data > 0).sum(axis=1)
    per_part = hinge.sum(axis=1) * (1.0 / np.maximum(active, 1)).astype(hinge.dtype)
    return TripletResult(per_part.mean(), int(active.sum()))


def cross_entropy_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """
    Softmax cross-entropy per part, averaged over parts and batch

    Args:
        logits: [N, P, K]
        labels: [N] class indices in [0, K)
    """
    labels = np.asarray(labels)
    if logits.ndim != 3 or logits.shape[0] != len(labels):
        raise LossError(f"Logits {logits.shape} do not match {len(labels)} labels")
    classes = logits.shape[2]
    if len(labels) and (labels.min() < 0 or labels.max() >= classes):
        raise LossError(f"Labels must lie in [0, {classes}), got range [{labels.min()}, {labels.max()}]")
    n, parts = logits.shape[:2]
    log_probs = F.log_softmax(logits, axis=-1)
    picked = log_probs[np.arange(n)[:, None], np.arange(parts)[None, :], labels[:, None]]
    return -picked.mean()


def combined_loss(embeddings: Tensor, logits: Tensor, labels: np.ndarray, config: LossConfig) -> LossBreakdown:
    """Unweighted sum of the triplet and cross-entropy losses"""
    triplet = triplet_loss(embeddings, labels, config.triplet_margin)
    ce = cross_entropy_loss(logits, labels)
    return LossBreakdown(triplet.loss + ce, triplet.loss, ce, triplet.nonzero_triplet_count)
