"""
Shared fixtures for the GaitForge test suite
"""

import logging

import numpy as np
import pytest

from src.autograd.tensor import precision
from src.data.silhouette import FOREGROUND, GaitDataset, SilhouetteSequence
from src.models.backbone import BackboneConfig, Family


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def float64():
    """Run the test body in 64-bit tensor mode"""
    with precision(np.float64):
        yield


@pytest.fixture(autouse=True)
def _quiet_gaitforge_logs():
    logging.getLogger("gaitforge").setLevel(logging.WARNING)
    yield


def make_sequence(rng, subject, condition="nm-01", view="090", frames=6, size=(64, 44)):
    mask = (rng.random((frames,) + size) > 0.5).astype(np.uint8) * FOREGROUND
    return SilhouetteSequence(mask, subject_id=subject, view_label=view, condition_label=condition)


@pytest.fixture
def tiny_dataset(rng):
    """4 subjects x 3 walks of 6 random 64x44 frames"""
    sequences = [
        make_sequence(rng, f"{s:03d}", condition=f"nm-{c + 1:02d}", view="090" if c % 2 == 0 else "054")
        for s in range(1, 5)
        for c in range(3)
    ]
    return GaitDataset(sequences)


def tiny_config(family=Family.DEEPGAIT_2D, channels=2, **kwargs):
    return BackboneConfig(family, base_channels=channels, block_counts=(1, 1, 1, 1), drop_path_rate=0.0, **kwargs)


@pytest.fixture
def tiny_2d_config():
    return tiny_config(Family.DEEPGAIT_2D)


@pytest.fixture
def tiny_p3d_config():
    return tiny_config(Family.DEEPGAIT_P3D)
