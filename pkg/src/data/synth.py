"""
Procedural walking stick-figure silhouettes for desk-scale experiments

A walker is an articulated 2D figure (head, torso, two-segment arms and legs)
whose joint angles follow sinusoids at the identity's gait frequency. Frames
are rasterized with OpenCV on a 64x64 canvas and optionally aligned to 64x44.
"""

from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import cv2
import numpy as np

from src.data.silhouette import FOREGROUND, GaitDataset, SilhouetteSequence, normalize_sequence
from src.utils.exceptions import ConfigurationError
from src.utils.logger import get_logger, log_execution_time

logger = get_logger(__name__)

CANVAS = 64
FIGURE_HEIGHT = 56.0
TOP_MARGIN = 4.0
VIEW_ANGLES = (90.0, 54.0, 126.0, 18.0, 162.0, 0.0)

# Documented physical ranges: (low, high)
RANGES = {
    'torso_ratio': (0.28, 0.34),
    'thigh_ratio': (0.22, 0.27),
    'shin_ratio': (0.22, 0.27),
    'arm_ratio': (0.30, 0.38),
    'torso_width': (5.0, 10.0),
    'gait_frequency': (1.0 / 32.0, 1.0 / 18.0),
    'stride_amplitude': (0.30, 0.60),
    'phase_offset': (0.0, 2.0 * np.pi),
    'view_angle': (0.0, 180.0),
}


@dataclass(frozen=True)
class WalkerIdentity:
    """
    Body and motion parameters of one synthetic subject

    Lengths are fractions of the figure height, ``torso_width`` is in pixels,
    ``gait_frequency`` in cycles per frame, angles in radians except
    ``view_angle`` (degrees, 90 = side view).
    """
    torso_ratio: float = 0.31
    thigh_ratio: float = 0.25
    shin_ratio: float = 0.25
    arm_ratio: float = 0.34
    torso_width: float = 7.0
    gait_frequency: float = 1.0 / 24.0
    stride_amplitude: float = 0.45
    phase_offset: float = 0.0
    view_angle: float = 90.0

    def __post_init__(self):
        for name, (low, high) in RANGES.items():
            value = getattr(self, name)
            if not low <= value <= high:
                raise ConfigurationError(f"WalkerIdentity.{name}={value} outside [{low}, {high}]")

    @property
    def period(self) -> float:
        """Frames per gait cycle"""
        return 1.0 / self.gait_frequency

    def at_view(self, view_angle: float) -> "WalkerIdentity":
        return replace(self, view_angle=float(view_angle))


def random_identity(rng: np.random.Generator, view_angle: float = 90.0) -> WalkerIdentity:
    """Draw every body and motion parameter uniformly within its range"""
    values = {name: float(rng.uniform(low, high)) for name, (low, high) in RANGES.items() if name != 'view_angle'}
    return WalkerIdentity(view_angle=view_angle, **values)


def _point(x: float, y: float) -> Tuple[int, int]:
    return int(round(x)), int(round(y))


def render_pose(identity: WalkerIdentity, phase: float, amplitude: Optional[float] = None) -> np.ndarray:
    """
    Rasterize the figure at one gait phase

    Args:
        identity: Body parameters
        phase: Gait phase in radians (left leg forward at pi/2)
        amplitude: Stride amplitude override

    Returns:
        uint8 mask [64, 64] in {0, 255}
    """
    amplitude = identity.stride_amplitude if amplitude is None else amplitude
    projection = np.sin(np.radians(identity.view_angle))
    canvas = np.zeros((CANVAS, CANVAS), dtype=np.uint8)

    head_radius = 0.07 * FIGURE_HEIGHT
    bob = 0.8 * np.cos(2.0 * phase)
    cx = CANVAS / 2.0
    neck_y = TOP_MARGIN + 2.0 * head_radius + bob
    hip_y = neck_y + identity.torso_ratio * FIGURE_HEIGHT
    thigh = identity.thigh_ratio * FIGURE_HEIGHT
    shin = identity.shin_ratio * FIGURE_HEIGHT
    upper_arm = lower_arm = 0.5 * identity.arm_ratio * FIGURE_HEIGHT
    limb = max(2, int(round(0.45 * identity.torso_width)))

    cv2.circle(canvas, _point(cx, neck_y - head_radius), int(round(head_radius)), FOREGROUND, -1, cv2.LINE_8)
    half = identity.torso_width / 2.0
    torso = np.array([
        _point(cx - half, neck_y), _point(cx + half, neck_y),
        _point(cx + half * 0.8, hip_y), _point(cx - half * 0.8, hip_y),
    ], dtype=np.int32)
    cv2.fillConvexPoly(canvas, torso, FOREGROUND, cv2.LINE_8)

    for side in (0.0, np.pi):
        swing = amplitude * np.sin(phase + side)
        flex = 0.9 * amplitude * max(0.0, np.sin(phase + side + np.pi / 3.0))
        knee = (cx + thigh * np.sin(swing) * projection, hip_y + thigh * np.cos(swing))
        foot = (knee[0] + shin * np.sin(swing - flex) * projection, knee[1] + shin * np.cos(swing - flex))
        cv2.line(canvas, _point(cx, hip_y), _point(*knee), FOREGROUND, limb, cv2.LINE_8)
        cv2.line(canvas, _point(*knee), _point(*foot), FOREGROUND, limb, cv2.LINE_8)

        arm_swing = -0.7 * amplitude * np.sin(phase + side)
        shoulder = (cx, neck_y + 2.0)
        elbow = (shoulder[0] + upper_arm * np.sin(arm_swing) * projection, shoulder[1] + upper_arm * np.cos(arm_swing))
        hand = (elbow[0] + lower_arm * np.sin(arm_swing + 0.3) * projection, elbow[1] + lower_arm * np.cos(arm_swing + 0.3))
        cv2.line(canvas, _point(*shoulder), _point(*elbow), FOREGROUND, max(2, limb - 1), cv2.LINE_8)
        cv2.line(canvas, _point(*elbow), _point(*hand), FOREGROUND, max(2, limb - 1), cv2.LINE_8)
    return canvas


def synth_walker(
    identity: WalkerIdentity,
    frames: int,
    rng: np.random.Generator,
    normalize: bool = True,
    variation: float = 0.0,
    subject_id: str = "synthetic",
    condition_label: str = "nm-01"
) -> SilhouetteSequence:
    """
    Generate one walking sequence

    The generator draws a start phase and, when ``variation`` > 0, relative
    jitter of frequency and amplitude; the output is fully determined by
    ``identity`` and the generator state.

    Args:
        identity: Subject parameters
        frames: Sequence length T
        rng: Generator seeding start phase and jitter
        normalize: Align frames to 64x44 (raw 64x64 otherwise)
        variation: Relative per-sequence jitter of frequency and amplitude
        subject_id: Label of the produced sequence
        condition_label: Sequence label

    Returns:
        SilhouetteSequence with T frames
    """
    if frames < 1:
        raise ConfigurationError(f"A walker needs at least one frame, got {frames}")
    start = float(rng.uniform(0.0, 2.0 * np.pi))
    frequency_scale, amplitude_scale = 1.0 + variation * rng.uniform(-1.0, 1.0, size=2)
    frequency = identity.gait_frequency * frequency_scale
    amplitude = identity.stride_amplitude * amplitude_scale

    phases = start + identity.phase_offset + 2.0 * np.pi * frequency * np.arange(frames)
    stack = np.stack([render_pose(identity, phase, amplitude) for phase in phases])
    seq = SilhouetteSequence(
        stack,
        subject_id=subject_id,
        view_label=f"{int(round(identity.view_angle)):03d}",
        condition_label=condition_label,
    )
    return normalize_sequence(seq) if normalize else seq


@log_execution_time(logger)
def synth_corpus(
    subjects: int = 40,
    sequences: int = 8,
    views: int = 2,
    frames: int = 40,
    seed: int = 0,
    motion_only: bool = False,
    normalize: bool = True,
    variation: float = 0.03
) -> GaitDataset:
    """
    Generate a labelled corpus of synthetic walkers

    Every subject gets ``sequences`` walks at each of the first ``views``
    view angles. With ``motion_only`` all subjects share one body template
    and differ only in gait frequency, so single frames carry no identity.

    Args:
        subjects: Number of identities
        sequences: Walks per subject and view
        views: Number of view angles (at most len(VIEW_ANGLES))
        frames: Frames per walk
        seed: Corpus seed
        motion_only: Frequency-only identities
        normalize: Align frames to 64x44
        variation: Per-walk jitter of frequency and amplitude

    Returns:
        GaitDataset of subjects * views * sequences sequences
    """
    if not 1 <= views <= len(VIEW_ANGLES):
        raise ConfigurationError(f"views must be in [1, {len(VIEW_ANGLES)}], got {views}")
    if subjects < 1 or sequences < 1:
        raise ConfigurationError("A corpus needs at least one subject and one sequence")

    if motion_only:
        template = random_identity(np.random.default_rng([seed, subjects, 1]))
        low, high = RANGES['gait_frequency']
        identities: List[WalkerIdentity] = [
            replace(template, gait_frequency=float(f)) for f in np.linspace(low, high, subjects)
        ]
    else:
        identities = [random_identity(np.random.default_rng([seed, index])) for index in range(subjects)]

    width = max(3, len(str(subjects)))
    result = []
    for index, identity in enumerate(identities):
        subject = f"{index + 1:0{width}d}"
        for view_index, angle in enumerate(VIEW_ANGLES[:views]):
            viewed = identity.at_view(angle)
            for walk in range(sequences):
                rng = np.random.default_rng([seed, index, view_index, walk])
                result.append(synth_walker(
                    viewed, frames, rng,
                    normalize=normalize,
                    variation=variation,
                    subject_id=subject,
                    condition_label=f"nm-{walk + 1:02d}",
                ))
    logger.info(f"Synthesized {len(result)} sequences for {subjects} subjects ({'motion-only' if motion_only else 'full'})")
    return GaitDataset(result)
