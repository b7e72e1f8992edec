"""
Silhouette containers, alignment to 64x44 and the dumb-patch analyzer
"""

from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, Iterator, List, Optional, Union

import cv2
import numpy as np

from src.utils.exceptions import DatasetError, EmptySilhouetteError, ShapeError

FOREGROUND = 255
THRESHOLD = 128
ALIGNED_SIZE = (64, 44)


def binarize(mask: np.ndarray) -> np.ndarray:
    """8-bit mask -> {0, 255} at threshold 128"""
    return np.where(np.asarray(mask) >= THRESHOLD, FOREGROUND, 0).astype(np.uint8)


@dataclass
class SilhouetteFrame:
    """One 8-bit silhouette mask (0 background, 255 foreground)"""
    mask: np.ndarray

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=np.uint8)
        if self.mask.ndim != 2:
            raise DatasetError(f"Silhouette frames are 2-d masks, got shape {self.mask.shape}")

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def width(self) -> int:
        return self.mask.shape[1]


@dataclass
class SilhouetteSequence:
    """
    Ordered silhouette frames of one walk

    Attributes:
        frames: uint8 array [T, H, W]
        subject_id: Subject identifier
        view_label: Camera view label
        condition_label: Walking condition / sequence label
        ordered: Whether frame order reflects capture order
    """
    frames: np.ndarray
    subject_id: str
    view_label: str = "000"
    condition_label: str = "nm-01"
    ordered: bool = True

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.uint8)
        if self.frames.ndim != 3 or self.frames.shape[0] < 1:
            raise DatasetError(f"A sequence needs frames shaped [T>=1, H, W], got {self.frames.shape}")
        self.subject_id = str(self.subject_id)
        self.view_label = str(self.view_label)
        self.condition_label = str(self.condition_label)

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def key(self) -> str:
        """Unique identifier ``subject/condition/view``"""
        return f"{self.subject_id}/{self.condition_label}/{self.view_label}"

    @property
    def frame_size(self):
        return self.frames.shape[1:]

    def frame(self, index: int) -> SilhouetteFrame:
        return SilhouetteFrame(self.frames[index])

    def with_frames(self, frames: np.ndarray, ordered: Optional[bool] = None) -> "SilhouetteSequence":
        return replace(self, frames=frames, ordered=self.ordered if ordered is None else ordered)


@dataclass
class GaitDataset:
    """Immutable index of silhouette sequences"""
    sequences: List[SilhouetteSequence] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.sequences)

    def __iter__(self) -> Iterator[SilhouetteSequence]:
        return iter(self.sequences)

    def __getitem__(self, index: int) -> SilhouetteSequence:
        return self.sequences[index]

    @property
    def subject_ids(self) -> List[str]:
        return sorted({seq.subject_id for seq in self.sequences})

    def by_subject(self) -> Dict[str, List[SilhouetteSequence]]:
        groups: Dict[str, List[SilhouetteSequence]] = OrderedDict()
        for seq in sorted(self.sequences, key=lambda s: s.key):
            groups.setdefault(seq.subject_id, []).append(seq)
        return groups

    def label_index(self) -> Dict[str, int]:
        """Dense class index per subject, in sorted subject order"""
        return {subject: index for index, subject in enumerate(self.subject_ids)}


def normalize_silhouette(raw: Union[SilhouetteFrame, np.ndarray]) -> SilhouetteFrame:
    """
    Align a raw silhouette to 64x44

    Crops the foreground bounding box, scales it to height 64 keeping the
    aspect ratio, centres the foreground centroid column in a 44-pixel
    window (zero-padded when narrower) and re-binarizes.

    Raises:
        EmptySilhouetteError: If no pixel reaches the foreground threshold
    """
    mask = raw.mask if isinstance(raw, SilhouetteFrame) else np.asarray(raw, dtype=np.uint8)
    foreground = mask >= THRESHOLD
    if not foreground.any():
        raise EmptySilhouetteError("Silhouette has no foreground pixel")

    rows = np.flatnonzero(foreground.any(axis=1))
    cols = np.flatnonzero(foreground.any(axis=0))
    crop = binarize(mask[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1])

    height, width = ALIGNED_SIZE
    scaled_width = max(1, int(round(crop.shape[1] * height / crop.shape[0])))
    resized = cv2.resize(crop, (scaled_width, height), interpolation=cv2.INTER_LINEAR)

    weights = resized.astype(np.float64).sum(axis=0)
    centroid = float((weights * np.arange(scaled_width)).sum() / weights.sum())
    center = int(np.floor(centroid + 0.5)) + width
    canvas = np.pad(binarize(resized), ((0, 0), (width, width)))
    return SilhouetteFrame(canvas[:, center - width // 2:center + width // 2])


def normalize_sequence(seq: SilhouetteSequence) -> SilhouetteSequence:
    """Align every frame of a sequence"""
    return seq.with_frames(np.stack([normalize_silhouette(frame).mask for frame in seq.frames]))


def _frames_of(source) -> Iterable[np.ndarray]:
    if isinstance(source, SilhouetteFrame):
        yield source.mask
    elif isinstance(source, SilhouetteSequence):
        yield from source.frames
    elif isinstance(source, GaitDataset):
        for seq in source:
            yield from seq.frames
    else:
        array = np.asarray(source)
        if array.ndim == 2:
            yield array
        else:
            yield from array.reshape(-1, *array.shape[-2:])


def dumb_patch_fraction(source, patch_size: int) -> float:
    """
    Fraction of non-overlapping patches that are uniformly foreground or background

    Frames whose size is not a multiple of ``patch_size`` are padded with
    background.

    Args:
        source: Frame, sequence, dataset or array [..., H, W]
        patch_size: Square patch side

    Returns:
        Fraction in [0, 1]
    """
    if patch_size < 1:
        raise ShapeError(f"Patch size must be positive, got {patch_size}")
    dumb = total = 0
    for frame in _frames_of(source):
        binary = np.asarray(frame) >= THRESHOLD
        h, w = binary.shape
        ph, pw = -(-h // patch_size) * patch_size, -(-w // patch_size) * patch_size
        binary = np.pad(binary, ((0, ph - h), (0, pw - w)))
        patches = binary.reshape(ph // patch_size, patch_size, pw // patch_size, patch_size)
        full = patches.all(axis=(1, 3))
        empty = ~patches.any(axis=(1, 3))
        dumb += int((full | empty).sum())
        total += full.size
    if total == 0:
        raise DatasetError("No frames to analyze")
    return dumb / total
