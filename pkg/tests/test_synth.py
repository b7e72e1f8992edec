"""
Tests for the procedural walker corpus
"""

from dataclasses import replace

import numpy as np
import pytest

from src.data.synth import RANGES, WalkerIdentity, random_identity, render_pose, synth_corpus, synth_walker
from src.utils.exceptions import ConfigurationError


def test_identity_ranges():
    with pytest.raises(ConfigurationError):
        WalkerIdentity(gait_frequency=0.5)
    identity = random_identity(np.random.default_rng(0))
    for name, (low, high) in RANGES.items():
        assert low <= getattr(identity, name) <= high
    assert WalkerIdentity().period == pytest.approx(24.0)


def test_render_is_binary_and_non_empty():
    frame = render_pose(WalkerIdentity(), phase=0.3)
    assert frame.shape == (64, 64)
    assert set(np.unique(frame)) == {0, 255}


def test_walker_is_deterministic():
    identity = random_identity(np.random.default_rng(4))
    a = synth_walker(identity, 10, np.random.default_rng(9))
    b = synth_walker(identity, 10, np.random.default_rng(9))
    np.testing.assert_array_equal(a.frames, b.frames)
    assert a.frames.shape == (10, 64, 44)


def test_half_cycle_phase_offset_matches_later_frames():
    plain = WalkerIdentity()
    shifted = replace(plain, phase_offset=np.pi)
    a = synth_walker(plain, 24, np.random.default_rng(1), normalize=False).frames
    b = synth_walker(shifted, 12, np.random.default_rng(1), normalize=False).frames
    disagreement = (a[12:24] != b).mean()
    assert disagreement < 0.01


def test_walk_is_periodic():
    frames = synth_walker(WalkerIdentity(), 25, np.random.default_rng(2), normalize=False).frames
    assert (frames[0] != frames[24]).mean() < 0.01
    assert (frames[0] != frames[6]).mean() > 0.0


def test_side_view_swings_legs_more_than_frontal():
    side = WalkerIdentity(view_angle=90.0)
    frontal = side.at_view(0.0)
    spread = [
        [np.ptp(np.flatnonzero(render_pose(identity, phase)[-12:].any(axis=0))) for phase in np.linspace(0, np.pi, 5)]
        for identity in (side, frontal)
    ]
    assert max(spread[0]) > max(spread[1])


def test_motion_only_identities_share_a_body():
    corpus = synth_corpus(subjects=3, sequences=1, views=1, frames=2, seed=5, motion_only=True, normalize=False)
    assert len(corpus) == 3
    template = random_identity(np.random.default_rng([5, 3, 1]))
    slow, fast = replace(template, gait_frequency=RANGES['gait_frequency'][0]), replace(template, gait_frequency=RANGES['gait_frequency'][1])
    a = synth_walker(slow, 1, np.random.default_rng(8), normalize=False)
    b = synth_walker(fast, 1, np.random.default_rng(8), normalize=False)
    np.testing.assert_array_equal(a.frames[0], b.frames[0])


def test_corpus_layout():
    corpus = synth_corpus(subjects=2, sequences=2, views=2, frames=3, seed=0)
    assert len(corpus) == 8
    assert corpus.subject_ids == ['001', '002']
    assert {s.view_label for s in corpus} == {'090', '054'}
    assert {s.condition_label for s in corpus} == {'nm-01', 'nm-02'}
    assert all(s.frames.shape == (3, 64, 44) for s in corpus)


def test_corpus_is_reproducible():
    a = synth_corpus(subjects=2, sequences=1, views=1, frames=4, seed=11)
    b = synth_corpus(subjects=2, sequences=1, views=1, frames=4, seed=11)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.frames, y.frames)


@pytest.mark.parametrize("kwargs", [dict(views=0), dict(views=7), dict(subjects=0)])
def test_corpus_validation(kwargs):
    with pytest.raises(ConfigurationError):
        synth_corpus(**kwargs)
