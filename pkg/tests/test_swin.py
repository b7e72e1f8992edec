"""
Tests for window partitioning and shifted-window attention
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.autograd.tensor import Tensor, no_grad
from src.nn.blocks import BlockKind, BlockSpec, build_block, param_shapes
from src.nn.swin import (
    SwinBlock,
    WindowAttention,
    relative_position_index,
    swin_block,
    window_attention,
    window_partition,
    window_reverse,
)
from src.utils.exceptions import ConfigurationError, ShapeError


@settings(max_examples=25, deadline=None)
@given(
    t=st.integers(1, 4), h=st.integers(1, 7), w=st.integers(1, 9),
    window=st.sampled_from([(1, 3, 5), (3, 3, 5), (2, 2, 2)]),
    shifted=st.booleans(),
)
def test_reverse_inverts_partition(t, h, w, window, shifted):
    tokens = np.random.default_rng(t * 100 + h * 10 + w).standard_normal((2, t, h, w, 3))
    shift = tuple(k // 2 for k in window) if shifted else (0, 0, 0)
    windows, mask = window_partition(Tensor(tokens), window, shift)
    assert windows.shape[1:] == (int(np.prod(window)), 3)
    assert windows.shape[0] == 2 * mask.num_windows
    np.testing.assert_allclose(window_reverse(windows, mask, 2).data, tokens.astype(np.float32))


def test_exact_fit_without_shift_needs_no_mask():
    _, mask = window_partition(Tensor(np.zeros((1, 3, 15, 10, 2))), (3, 3, 5), (0, 0, 0))
    assert mask.all_pass
    assert mask.num_windows == 1 * 5 * 2


def test_padding_is_masked_out():
    _, mask = window_partition(Tensor(np.zeros((1, 1, 4, 5, 2))), (1, 3, 5), (0, 0, 0))
    assert mask.padded == (1, 6, 5)
    assert not mask.all_pass
    second_row = mask.allowed[1]
    valid = np.zeros(15, dtype=bool)
    valid[:5] = True
    np.testing.assert_array_equal(second_row[0], valid)


def test_shifted_mask_separates_regions():
    _, mask = window_partition(Tensor(np.zeros((1, 1, 6, 10, 2))), (1, 3, 5), (0, 1, 2))
    np.testing.assert_array_equal(mask.allowed, mask.allowed.transpose(0, 2, 1))
    assert mask.allowed[0].all()
    assert not mask.allowed[-1].all()
    assert mask.allowed[:, np.arange(15), np.arange(15)].all()


def test_shift_must_be_smaller_than_window():
    with pytest.raises(ShapeError):
        window_partition(Tensor(np.zeros((1, 3, 6, 10, 2))), (3, 3, 5), (3, 0, 0))


def test_relative_position_index_range():
    index = relative_position_index((3, 3, 5))
    assert index.shape == (45, 45)
    assert index.min() == 0
    assert index.max() == 5 * 5 * 9 - 1
    assert len(set(np.diag(index))) == 1


def test_attention_weights_respect_mask(rng):
    tokens = Tensor(rng.standard_normal((2, 1, 4, 5, 4)))
    windows, mask = window_partition(tokens, (1, 3, 5), (0, 1, 2))
    attention = WindowAttention(4, 2, (1, 3, 5), rng)
    out, weights = attention(windows, mask, return_weights=True)
    assert out.shape == windows.shape
    np.testing.assert_allclose(weights.sum(axis=-1), 1.0, atol=1e-5)
    per_window = weights.reshape(2, mask.num_windows, 2, 15, 15)
    forbidden = ~mask.allowed
    for b in range(2):
        for head in range(2):
            assert (per_window[b, :, head][forbidden] == 0).all()


def test_attention_rejects_indivisible_heads(rng):
    with pytest.raises(ShapeError):
        window_attention(
            Tensor(rng.standard_normal((1, 3, 6))), None,
            Tensor(np.zeros((18, 6))), None, Tensor(np.zeros((6, 6))), None, None, heads=4,
        )


def test_block_parameter_count():
    shapes = param_shapes(BlockSpec(BlockKind.SWIN2D, 4, 4, window=(1, 3, 5), heads=2))
    assert sum(int(np.prod(s)) for s in shapes.values()) == 12 * 16 + 13 * 4 + 5 * 9 * 2
    assert shapes['attn.relative_position_bias'] == (45, 2)


def test_2d_block_keeps_frames_independent(rng):
    spec = BlockSpec(BlockKind.SWIN2D, 4, 4, window=(1, 3, 5), shifted=True, heads=2)
    block = build_block(spec, rng).eval()
    x = rng.standard_normal((1, 3, 6, 5, 4))
    changed = x.copy()
    changed[:, 1] += 1.0
    with no_grad():
        a, b = block(Tensor(x)).data, block(Tensor(changed)).data
    np.testing.assert_allclose(a[:, 0], b[:, 0], atol=1e-6)
    np.testing.assert_allclose(a[:, 2], b[:, 2], atol=1e-6)
    assert not np.allclose(a[:, 1], b[:, 1])


def test_3d_block_mixes_neighbouring_frames(rng):
    spec = BlockSpec(BlockKind.SWIN3D, 4, 4, window=(3, 3, 5), heads=2)
    block = build_block(spec, rng).eval()
    x = rng.standard_normal((1, 3, 6, 5, 4))
    changed = x.copy()
    changed[:, 1] += 1.0
    with no_grad():
        a, b = block(Tensor(x)).data, block(Tensor(changed)).data
    assert not np.allclose(a[:, 0], b[:, 0])


def test_swin_block_checks_grid(rng):
    spec = BlockSpec(BlockKind.SWIN3D, 4, 4, window=(3, 3, 5), heads=2)
    block = build_block(spec, rng)
    assert isinstance(block, SwinBlock)
    with pytest.raises(ShapeError):
        swin_block(Tensor(np.zeros((1, 3, 6, 5, 8))), spec, block)
    with pytest.raises(ConfigurationError):
        swin_block(Tensor(np.zeros((1, 3, 6, 5, 4))), BlockSpec(BlockKind.SWIN3D, 4, 4, heads=4), block)


def test_swin_block_rejects_conv_spec(rng):
    with pytest.raises(ConfigurationError):
        SwinBlock(BlockSpec(BlockKind.RES2D, 4, 4), rng)
