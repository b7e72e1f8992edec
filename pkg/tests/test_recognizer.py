"""
Tests for the full recognizer, checkpoint rebuilds and warm-starting
"""

import numpy as np
import pytest

from src.autograd.tensor import Tensor
from src.models.backbone import Family
from src.models.profiler import count_params
from src.models.recognizer import build_recognizer, recognizer_from_checkpoint, recognizer_meta
from src.models.warm_start import WARM_LR, build_param_groups, warm_start_from
from src.utils.checkpoint import load_checkpoint, save_checkpoint
from src.utils.exceptions import CheckpointError, WarmStartError
from tests.conftest import tiny_config


def _clips(rng, n=2, t=3):
    return Tensor((rng.random((n, t, 1, 64, 44)) > 0.5).astype(np.float32))


@pytest.mark.parametrize("family,parts", [(Family.DEEPGAIT_2D, 16), (Family.DEEPGAIT_P3D, 16), (Family.SWIN_2D, 15)])
def test_output_shapes(family, parts, rng):
    model = build_recognizer(tiny_config(family), num_classes=5, rng=rng, embed_dim=8)
    out = model(_clips(rng))
    assert out.embeddings.shape == (2, parts, 8)
    assert out.logits.shape == (2, parts, 5)


def test_head_parameters_counted_separately(rng):
    model = build_recognizer(tiny_config(), num_classes=5, rng=rng, embed_dim=8)
    head = sum(p.size for name, p in model.named_parameters() if name.startswith('head.'))
    assert count_params(model, include_head=True) == count_params(model) + head
    assert head == 16 * (16 * 8 + 8 + 2 * 8 + 8 * 5)


def test_embed_restores_mode_and_ignores_frame_order(rng):
    model = build_recognizer(tiny_config(), num_classes=3, rng=rng, embed_dim=8)
    clips = _clips(rng, n=1, t=5)
    first = model.embed(clips)
    assert model.training
    reversed_clips = Tensor(clips.data[:, ::-1].copy())
    np.testing.assert_allclose(model.embed(reversed_clips), first, rtol=1e-4, atol=1e-5)


@pytest.mark.parametrize("family", [Family.DEEPGAIT_3D, Family.DEEPGAIT_P3D, Family.SWIN_3D])
def test_temporal_models_see_frame_order(family, rng):
    model = build_recognizer(tiny_config(family), num_classes=3, rng=rng, embed_dim=8)
    clips = _clips(rng, n=1, t=6)
    first = model.embed(clips)
    changes = []
    for _ in range(5):
        permuted = Tensor(clips.data[:, rng.permutation(6)].copy())
        changes.append(np.abs(model.embed(permuted) - first).max())
    assert max(changes) > 1e-3


def test_checkpoint_rebuild(rng, tmp_path):
    model = build_recognizer(tiny_config(Family.DEEPGAIT_P3D), num_classes=4, rng=rng, embed_dim=8)
    path = save_checkpoint(tmp_path / 'm.gfckpt', model.state_dict(), recognizer_meta(model, seed=7))
    assert load_checkpoint(path).config['seed'] == 7

    rebuilt = recognizer_from_checkpoint(path)
    clips = _clips(rng)
    np.testing.assert_allclose(rebuilt.embed(clips), model.embed(clips), atol=1e-6)


def test_checkpoint_without_config(rng, tmp_path):
    model = build_recognizer(tiny_config(), num_classes=2, rng=rng, embed_dim=8)
    path = save_checkpoint(tmp_path / 'bare.gfckpt', model.state_dict())
    with pytest.raises(CheckpointError):
        recognizer_from_checkpoint(path)


class TestWarmStart:
    def test_copies_shared_stages(self, rng, tmp_path):
        source = build_recognizer(tiny_config(Family.DEEPGAIT_2D), num_classes=4, rng=rng, embed_dim=8)
        path = save_checkpoint(tmp_path / 'src.gfckpt', source.state_dict())
        target = build_recognizer(tiny_config(Family.SWIN_2D), num_classes=4, rng=np.random.default_rng(5), embed_dim=8)
        fresh_embed = target.embed3.weight.data.copy()

        warm_start_from(target, path)
        source_params = dict(source.named_parameters())
        for name, param in target.named_parameters():
            if name.startswith(('conv0.', 'stage1.', 'stage2.', 'head.')):
                np.testing.assert_array_equal(param.data, source_params[name].data)
        np.testing.assert_array_equal(target.embed3.weight.data, fresh_embed)
        assert 'head.fc.14.weight' in target.warm_parameter_names
        assert not any(name.startswith('stage3.') for name in target.warm_parameter_names)

    def test_param_groups(self, rng):
        source = build_recognizer(tiny_config(Family.DEEPGAIT_2D), num_classes=4, rng=rng, embed_dim=8)
        target = build_recognizer(tiny_config(Family.SWIN_2D), num_classes=4, rng=rng, embed_dim=8)
        assert [g.name for g in build_param_groups(target, 1e-4)] == ['fresh']

        warm_start_from(target, source.state_dict())
        groups = {g.name: g for g in build_param_groups(target, 1e-4)}
        assert groups['warm'].lr == WARM_LR
        assert groups['fresh'].lr == 1e-4
        assert len(groups['warm'].params) + len(groups['fresh'].params) == len(target.parameters())

    def test_shape_mismatch(self, rng):
        source = build_recognizer(tiny_config(Family.DEEPGAIT_3D), num_classes=4, rng=rng, embed_dim=8)
        target = build_recognizer(tiny_config(Family.SWIN_2D), num_classes=4, rng=rng, embed_dim=8)
        with pytest.raises(WarmStartError):
            warm_start_from(target, source.state_dict())

    def test_missing_tensor(self, rng):
        source = build_recognizer(tiny_config(Family.DEEPGAIT_2D), num_classes=4, rng=rng, embed_dim=8)
        state = source.state_dict()
        del state['stage1.0.conv1.weight']
        target = build_recognizer(tiny_config(Family.SWIN_2D), num_classes=4, rng=rng, embed_dim=8)
        with pytest.raises(WarmStartError):
            warm_start_from(target, state)
