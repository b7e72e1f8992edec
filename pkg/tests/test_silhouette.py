"""
Tests for silhouette containers, alignment and the dumb-patch analyzer
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.data.silhouette import (
    FOREGROUND,
    GaitDataset,
    SilhouetteFrame,
    SilhouetteSequence,
    binarize,
    dumb_patch_fraction,
    normalize_sequence,
    normalize_silhouette,
)
from src.utils.exceptions import DatasetError, EmptySilhouetteError, ShapeError


def _rectangle(canvas, top, left, height, width):
    mask = np.zeros(canvas, dtype=np.uint8)
    mask[top:top + height, left:left + width] = FOREGROUND
    return mask


class TestContainers:
    def test_sequence_validation(self):
        with pytest.raises(DatasetError):
            SilhouetteSequence(np.zeros((0, 4, 4)), subject_id='001')
        with pytest.raises(DatasetError):
            SilhouetteSequence(np.zeros((4, 4)), subject_id='001')
        with pytest.raises(DatasetError):
            SilhouetteFrame(np.zeros((2, 2, 2)))

    def test_key_and_labels(self):
        seq = SilhouetteSequence(np.zeros((2, 4, 4)), subject_id=7, view_label='090', condition_label='bg-02')
        assert seq.key == '7/bg-02/090'
        assert seq.frame_size == (4, 4)
        assert seq.frames.dtype == np.uint8

    def test_dataset_index(self, tiny_dataset):
        assert tiny_dataset.subject_ids == ['001', '002', '003', '004']
        assert tiny_dataset.label_index() == {'001': 0, '002': 1, '003': 2, '004': 3}
        groups = tiny_dataset.by_subject()
        assert [len(v) for v in groups.values()] == [3, 3, 3, 3]
        assert [s.key for s in groups['002']] == sorted(s.key for s in groups['002'])

    def test_binarize_threshold(self):
        np.testing.assert_array_equal(binarize(np.array([0, 127, 128, 255])), [0, 0, 255, 255])


class TestNormalize:
    def test_aligned_input_is_a_fixed_point(self):
        mask = _rectangle((64, 44), 0, 17, 64, 10)
        np.testing.assert_array_equal(normalize_silhouette(mask).mask, mask)

    def test_scales_to_full_height(self):
        out = normalize_silhouette(_rectangle((128, 128), 10, 30, 100, 20)).mask
        assert out.shape == (64, 44)
        rows = np.flatnonzero(out.any(axis=1))
        assert rows[0] == 0 and rows[-1] == 63
        assert set(np.unique(out)) <= {0, FOREGROUND}

    @settings(max_examples=20, deadline=None)
    @given(dy=st.integers(0, 40), dx=st.integers(0, 60))
    def test_translation_invariant(self, dy, dx):
        base = normalize_silhouette(_rectangle((128, 128), 5, 5, 60, 18)).mask
        moved = normalize_silhouette(_rectangle((128, 128), 5 + dy, 5 + dx, 60, 18)).mask
        np.testing.assert_array_equal(base, moved)

    def test_foreground_is_centred(self):
        out = normalize_silhouette(_rectangle((90, 200), 20, 150, 40, 12)).mask
        cols = np.flatnonzero(out.any(axis=0))
        assert abs((cols[0] + cols[-1]) / 2 - 21.5) <= 1.0

    def test_empty_mask(self):
        with pytest.raises(EmptySilhouetteError):
            normalize_silhouette(np.full((64, 64), 100, dtype=np.uint8))

    def test_sequence_keeps_labels(self):
        seq = SilhouetteSequence(np.stack([_rectangle((80, 80), 10, 10, 50, 15)] * 3), subject_id='009')
        aligned = normalize_sequence(seq)
        assert aligned.frames.shape == (3, 64, 44)
        assert aligned.key == seq.key


class TestDumbPatches:
    def test_blank_frame_is_all_dumb(self):
        assert dumb_patch_fraction(np.zeros((64, 44), dtype=np.uint8), 4) == 1.0

    def test_checkerboard_has_no_dumb_patch(self):
        board = (np.indices((8, 8)).sum(axis=0) % 2 * FOREGROUND).astype(np.uint8)
        assert dumb_patch_fraction(board, 2) == 0.0
        assert dumb_patch_fraction(board, 1) == 1.0

    def test_half_covered(self):
        frame = _rectangle((4, 4), 0, 0, 4, 2)
        assert dumb_patch_fraction(frame, 2) == 1.0
        assert dumb_patch_fraction(frame, 4) == 0.0

    def test_partial_patches_padded_with_background(self):
        assert dumb_patch_fraction(np.full((3, 3), FOREGROUND, dtype=np.uint8), 2) == 0.25

    def test_dataset_source(self, tiny_dataset):
        value = dumb_patch_fraction(tiny_dataset, 1)
        assert value == 1.0
        assert 0.0 <= dumb_patch_fraction(tiny_dataset, 4) < 0.1

    def test_grows_as_patches_shrink(self):
        frame = normalize_silhouette(_rectangle((100, 100), 10, 40, 80, 20)).mask
        fractions = [dumb_patch_fraction(frame, size) for size in (8, 4, 2, 1)]
        assert fractions == sorted(fractions)

    def test_invalid_patch(self):
        with pytest.raises(ShapeError):
            dumb_patch_fraction(np.zeros((4, 4)), 0)
        with pytest.raises(DatasetError):
            dumb_patch_fraction(GaitDataset([]), 2)
