"""
(q, k) batch sampling, frame shuffling and gallery/probe splitting
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.data.augment import AugmentPolicy, spatial_augment
from src.data.silhouette import THRESHOLD, GaitDataset, SilhouetteSequence
from src.utils.exceptions import ConfigurationError, SamplingError
from src.utils.logger import get_logger

logger = get_logger(__name__)


@dataclass
class BatchSpec:
    """
    Attributes:
        q: Subjects per batch
        k: Sequences per subject
        frames_per_seq: Frames T drawn from every sequence
        ordered_sampling: Contiguous windows (True) or draws with replacement (False)
    """
    q: int = 8
    k: int = 8
    frames_per_seq: int = 30
    ordered_sampling: bool = True

    def __post_init__(self):
        if self.q < 2 or self.k < 2:
            raise ConfigurationError(f"Batches need q >= 2 and k >= 2, got q={self.q}, k={self.k}")
        if self.frames_per_seq < 1:
            raise ConfigurationError(f"frames_per_seq must be >= 1, got {self.frames_per_seq}")

    @property
    def batch_size(self) -> int:
        return self.q * self.k


@dataclass
class Batch:
    """
    Attributes:
        clips: float array [q*k, T, 1, H, W] with values in {0, 1}
        labels: Dense class indices [q*k]
        subjects: Subject id per clip
        frame_indices: Source frame index per clip and step [q*k, T]
    """
    clips: np.ndarray
    labels: np.ndarray
    subjects: List[str]
    frame_indices: np.ndarray


def select_frames(length: int, count: int, ordered: bool, rng: np.random.Generator) -> np.ndarray:
    """
    Frame indices for one clip

    Ordered: a random cyclic window, so short sequences repeat.
    Unordered: ``count`` uniform draws with replacement.
    """
    if length < 1:
        raise SamplingError("Cannot sample frames from an empty sequence")
    if ordered:
        start = int(rng.integers(length))
        return (start + np.arange(count)) % length
    return rng.integers(0, length, size=count)


def to_clip(frames: np.ndarray, dtype=np.float32) -> np.ndarray:
    """uint8 frames [T, H, W] -> model input [T, 1, H, W] in {0, 1}"""
    return (frames[:, None] >= THRESHOLD).astype(dtype)


def sample_batch(
    dataset: GaitDataset,
    spec: BatchSpec,
    rng: np.random.Generator,
    augment: Optional[AugmentPolicy] = None,
    label_index: Optional[Dict[str, int]] = None
) -> Batch:
    """
    Draw q subjects with k sequences each and T frames per sequence

    Args:
        dataset: Source sequences
        spec: Batch structure
        rng: Generator for every random choice
        augment: Optional per-sequence spatial augmentation
        label_index: Subject -> class index (defaults to the dataset's)

    Raises:
        SamplingError: When fewer than q subjects have k sequences
    """
    groups = {subject: seqs for subject, seqs in dataset.by_subject().items() if len(seqs) >= spec.k}
    if len(groups) < spec.q:
        raise SamplingError(
            f"Need {spec.q} subjects with >= {spec.k} sequences, dataset has {len(groups)}"
        )
    label_index = label_index or dataset.label_index()
    subjects = sorted(groups)
    chosen = rng.choice(len(subjects), size=spec.q, replace=False)

    clips, labels, names, indices = [], [], [], []
    for subject_pos in chosen:
        subject = subjects[subject_pos]
        sequences = groups[subject]
        for seq_pos in rng.choice(len(sequences), size=spec.k, replace=False):
            seq = sequences[seq_pos]
            if augment is not None:
                seq = spatial_augment(seq, rng, augment)
            frame_ids = select_frames(len(seq), spec.frames_per_seq, spec.ordered_sampling, rng)
            clips.append(to_clip(seq.frames[frame_ids]))
            labels.append(label_index[subject])
            names.append(subject)
            indices.append(frame_ids)
    return Batch(np.stack(clips), np.asarray(labels, dtype=np.int64), names, np.stack(indices))


def shuffle_frames(seq: SilhouetteSequence, rng: np.random.Generator) -> SilhouetteSequence:
    """
    Uniformly permute the frames of a sequence; labels unchanged

    Raises:
        SamplingError: For sequences shorter than two frames
    """
    if len(seq) < 2:
        raise SamplingError("Shuffling needs at least two frames")
    return seq.with_frames(seq.frames[rng.permutation(len(seq))], ordered=False)


def split_gallery_probe(
    dataset: GaitDataset,
    gallery_per_subject: int = 1,
    gallery_conditions: Optional[Sequence[str]] = None
) -> Tuple[GaitDataset, GaitDataset]:
    """
    Split a dataset into gallery and probe sets

    By condition label when ``gallery_conditions`` is given, otherwise the
    first ``gallery_per_subject`` sequences of every subject (in key order)
    form the gallery.
    """
    gallery: List[SilhouetteSequence] = []
    probe: List[SilhouetteSequence] = []
    if gallery_conditions is not None:
        wanted = set(gallery_conditions)
        for seq in dataset:
            (gallery if seq.condition_label in wanted else probe).append(seq)
    else:
        if gallery_per_subject < 1:
            raise ConfigurationError("gallery_per_subject must be >= 1")
        for sequences in dataset.by_subject().values():
            gallery.extend(sequences[:gallery_per_subject])
            probe.extend(sequences[gallery_per_subject:])
    logger.debug(f"Split {len(dataset)} sequences into {len(gallery)} gallery / {len(probe)} probe")
    return GaitDataset(gallery), GaitDataset(probe)
