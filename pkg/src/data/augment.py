"""
Sequence-consistent spatial augmentation

Parameters are drawn once per sequence and applied to every frame, so the
temporal structure of the walk is untouched.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import cv2
import numpy as np

from src.data.silhouette import SilhouetteSequence, binarize


@dataclass
class AugmentPolicy:
    """
    Per-transform application probabilities and magnitudes

    Attributes:
        flip_p: Horizontal flip probability
        rotate_p: Rotation probability
        rotate_max_deg: Rotation angle bound (degrees, symmetric)
        perspective_p: Small perspective warp probability
        perspective_max: Corner displacement bound as a fraction of the frame size
        erase_p: Random rectangular erase probability
        erase_max_fraction: Erased rectangle side bound as a fraction of the frame size
    """
    flip_p: float = 0.5
    rotate_p: float = 0.3
    rotate_max_deg: float = 10.0
    perspective_p: float = 0.3
    perspective_max: float = 0.06
    erase_p: float = 0.3
    erase_max_fraction: float = 0.3

    @classmethod
    def disabled(cls) -> "AugmentPolicy":
        return cls(flip_p=0.0, rotate_p=0.0, perspective_p=0.0, erase_p=0.0)


@dataclass(frozen=True)
class AugmentParams:
    """Concrete transform shared by all frames of one sequence"""
    flip: bool = False
    angle: Optional[float] = None
    corner_shift: Optional[Tuple[Tuple[float, float], ...]] = None
    erase: Optional[Tuple[int, int, int, int]] = None

    @property
    def is_identity(self) -> bool:
        return not self.flip and self.angle is None and self.corner_shift is None and self.erase is None


def sample_augment_params(
    frame_size: Tuple[int, int],
    rng: np.random.Generator,
    policy: AugmentPolicy
) -> AugmentParams:
    """Draw one AugmentParams for a sequence of frames sized (H, W)"""
    h, w = frame_size
    flip = bool(rng.random() < policy.flip_p)
    angle = float(rng.uniform(-policy.rotate_max_deg, policy.rotate_max_deg)) if rng.random() < policy.rotate_p else None
    corner_shift = None
    if rng.random() < policy.perspective_p:
        offsets = rng.uniform(-policy.perspective_max, policy.perspective_max, size=(4, 2)) * (w, h)
        corner_shift = tuple(tuple(float(v) for v in row) for row in offsets)
    erase = None
    if rng.random() < policy.erase_p:
        eh = int(rng.integers(1, max(2, int(h * policy.erase_max_fraction) + 1)))
        ew = int(rng.integers(1, max(2, int(w * policy.erase_max_fraction) + 1)))
        top = int(rng.integers(0, h - eh + 1))
        left = int(rng.integers(0, w - ew + 1))
        erase = (top, left, eh, ew)
    return AugmentParams(flip, angle, corner_shift, erase)


def apply_augment(frame: np.ndarray, params: AugmentParams) -> np.ndarray:
    """Apply one AugmentParams to a single uint8 frame; output stays binary"""
    out = frame
    h, w = frame.shape
    if params.flip:
        out = out[:, ::-1]
    if params.angle is not None:
        matrix = cv2.getRotationMatrix2D((w / 2.0, h / 2.0), params.angle, 1.0)
        out = binarize(cv2.warpAffine(np.ascontiguousarray(out), matrix, (w, h), flags=cv2.INTER_LINEAR, borderValue=0))
    if params.corner_shift is not None:
        corners = np.float32([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]])
        target = (corners + np.float32(params.corner_shift)).astype(np.float32)
        matrix = cv2.getPerspectiveTransform(corners, target)
        out = binarize(cv2.warpPerspective(np.ascontiguousarray(out), matrix, (w, h), flags=cv2.INTER_LINEAR, borderValue=0))
    if params.erase is not None:
        top, left, eh, ew = params.erase
        out = np.array(out)
        out[top:top + eh, left:left + ew] = 0
    return np.ascontiguousarray(out, dtype=np.uint8)


def spatial_augment(
    seq: SilhouetteSequence,
    rng: np.random.Generator,
    policy: Optional[AugmentPolicy] = None
) -> SilhouetteSequence:
    """
    Augment every frame of a sequence with one shared transform

    Args:
        seq: Input sequence
        rng: Generator for the transform draw
        policy: Probabilities and magnitudes (default policy when omitted)

    Returns:
        New sequence with the same length and labels
    """
    policy = policy or AugmentPolicy()
    params = sample_augment_params(seq.frame_size, rng, policy)
    if params.is_identity:
        return seq
    return seq.with_frames(np.stack([apply_augment(frame, params) for frame in seq.frames]))
