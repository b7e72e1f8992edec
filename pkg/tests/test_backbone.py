"""
Tests for backbone construction, stage shapes and model accounting
"""

import numpy as np
import pytest

from src.autograd import functional as F
from src.autograd.tensor import Tensor, no_grad
from src.models.backbone import (
    DEPTH_VARIANTS,
    SWIN_DEFAULT_BLOCKS,
    SWIN_NARROW_BLOCKS,
    BackboneConfig,
    ConvKind,
    Family,
    block_counts_for,
    build_backbone,
    depth_of,
    heads_for,
    plan_shapes,
)
from src.models.profiler import FLOP_CONVENTION, count_flops, count_params, format_count
from src.utils.exceptions import ConfigurationError, ShapeError
from tests.conftest import tiny_config


def _within(value, target, tolerance):
    return abs(value - target) <= tolerance * target


def _as_plan_layout(shape, frames):
    """Map a single-sequence activation shape onto the (T, ...) layout of plan_shapes"""
    if len(shape) == 5 and shape[:2] == (1, frames):
        return tuple(shape[1:])
    if len(shape) == 5:
        n, c, t, h, w = shape
        return (t, c, h, w)
    return tuple(shape)


class TestConfig:
    @pytest.mark.parametrize("variant,depth", [('10-layer', 10), ('14-layer', 14), ('22-layer', 22), ('30-layer', 30)])
    def test_depth_variants(self, variant, depth):
        assert depth_of(block_counts_for(variant)) == depth

    @pytest.mark.parametrize("counts", [(1, 4, 4), (0, 4, 4, 1), (1, 4, 4, 1, 1)])
    def test_invalid_block_counts(self, counts):
        with pytest.raises(ConfigurationError):
            depth_of(counts)

    def test_unknown_variant(self):
        with pytest.raises(ConfigurationError):
            block_counts_for('18-layer')

    def test_family_defaults(self):
        conv = BackboneConfig(Family.DEEPGAIT_2D)
        swin = BackboneConfig('SwinGait-3D')
        assert (conv.part_count, conv.drop_path_rate) == (16, 0.0)
        assert (swin.part_count, swin.drop_path_rate) == (15, 0.1)
        assert swin.swin_conv_kind is ConvKind.D3
        assert conv.depth == 22

    def test_swin_conv_kinds(self):
        assert BackboneConfig(Family.SWIN_3D, swin_conv_kind='P3D').conv_kind is ConvKind.P3D
        with pytest.raises(ConfigurationError):
            BackboneConfig(Family.SWIN_2D, swin_conv_kind='3D')
        with pytest.raises(ConfigurationError):
            BackboneConfig(Family.DEEPGAIT_2D, swin_conv_kind='2D')

    def test_unknown_family(self):
        with pytest.raises(ConfigurationError):
            BackboneConfig('ResNet-50')

    def test_dict_round_trip(self):
        config = BackboneConfig(Family.SWIN_3D, base_channels=32, block_counts=SWIN_NARROW_BLOCKS, swin_conv_kind='P3D')
        assert BackboneConfig.from_dict(config.to_dict()) == config
        with pytest.raises(ConfigurationError):
            BackboneConfig.from_dict({**config.to_dict(), 'dropout': 0.5})

    def test_heads_divide_width(self):
        assert heads_for(256) == 8
        assert heads_for(512) == 16
        assert heads_for(8) == 1
        assert heads_for(96) == 3


class TestShapes:
    def test_conv_plan(self):
        plan = {s.name: s.shape for s in plan_shapes(BackboneConfig(Family.DEEPGAIT_P3D), 30)}
        assert list(plan) == ['Conv0', 'Stage1', 'Stage2', 'Stage3', 'Stage4']
        assert plan['Stage2'] == (30, 128, 32, 22)
        assert plan['Stage4'] == (30, 512, 16, 11)

    def test_swin_plan(self):
        plan = {s.name: s.shape for s in plan_shapes(BackboneConfig(Family.SWIN_2D), 30)}
        assert list(plan) == ['Conv0', 'Stage1', 'Stage2', 'Resize', 'Tokens', 'Stage3', 'Stage4']
        assert plan['Resize'] == (30, 128, 30, 20)
        assert plan['Tokens'] == (30, 15, 10, 512)
        assert plan['Stage3'] == (30, 15, 10, 256)

    def test_part_count_must_divide_height(self):
        with pytest.raises(ShapeError):
            plan_shapes(BackboneConfig(Family.DEEPGAIT_2D, part_count=5), 1)

    def test_needs_a_frame(self):
        with pytest.raises(ShapeError):
            plan_shapes(BackboneConfig(Family.DEEPGAIT_2D), 0)

    @pytest.mark.parametrize("family", list(Family))
    def test_forward_matches_plan(self, family, rng):
        config = tiny_config(family)
        model = build_backbone(config, rng)
        with no_grad():
            out = model(Tensor(rng.random((2, 3, 1, 64, 44))))
        final = plan_shapes(config, 3)[-1].shape
        assert out.shape == (2,) + final
        if not family.is_swin:
            assert out.shape == (2, 3, 16, 16, 11)

    def test_input_size_checked(self, rng):
        model = build_backbone(tiny_config(), rng)
        with pytest.raises(ShapeError):
            model(Tensor(np.zeros((1, 3, 1, 64, 40))))

    def test_2d_family_processes_frames_independently(self, rng):
        model = build_backbone(tiny_config(), rng).eval()
        frames = rng.random((1, 4, 1, 64, 44))
        with no_grad():
            whole = model(Tensor(frames)).data
            single = model(Tensor(frames[:, 2:3])).data
        np.testing.assert_allclose(whole[:, 2:3], single, rtol=1e-4, atol=1e-5)

    @pytest.mark.parametrize("frames,channels", [
        (1, 16),
        pytest.param(8, 16, marks=pytest.mark.slow),
        pytest.param(30, 16, marks=pytest.mark.slow),
        pytest.param(1, 64, marks=pytest.mark.slow),
        pytest.param(8, 64, marks=pytest.mark.slow),
        pytest.param(30, 64, marks=pytest.mark.slow),
    ])
    @pytest.mark.parametrize("family", list(Family))
    def test_every_stage_matches_plan(self, family, frames, channels, mocker):
        config = BackboneConfig(family, base_channels=channels, block_counts=(1, 1, 1, 1), drop_path_rate=0.0)
        model = build_backbone(config, np.random.default_rng(0)).eval()
        spies = {
            "Conv0": mocker.spy(model.conv0, "forward"),
            "Stage1": mocker.spy(model.stage1[-1], "forward"),
            "Stage2": mocker.spy(model.stage2[-1], "forward"),
            "Stage3": mocker.spy(model.stage3[-1], "forward"),
            "Stage4": mocker.spy(model.stage4[-1], "forward"),
        }
        resize = mocker.spy(F, "bilinear_resize")
        embed = mocker.spy(model.embed3_norm, "forward") if family.is_swin else None
        with no_grad():
            model(Tensor(np.ones((1, frames, 1, 64, 44))))

        seen = {name: _as_plan_layout(spy.spy_return.shape, frames) for name, spy in spies.items()}
        if family.is_swin:
            seen["Resize"] = _as_plan_layout(resize.spy_return.shape, frames)
            seen["Tokens"] = _as_plan_layout(embed.call_args.args[0].shape, frames)
        assert seen == {s.name: s.shape for s in plan_shapes(config, frames)}

    def test_parameter_names(self, rng):
        names = {name for name, _ in build_backbone(tiny_config(Family.SWIN_3D, channels=4), rng).named_parameters()}
        assert 'stage2.0.conv1.weight' in names
        assert 'stage3.0.attn.qkv.weight' in names
        assert 'embed4.weight' in names


class TestAccounting:
    @pytest.mark.parametrize("family,blocks,target", [
        (Family.DEEPGAIT_2D, DEPTH_VARIANTS['22-layer'], 9.3e6),
        (Family.DEEPGAIT_3D, DEPTH_VARIANTS['22-layer'], 27.5e6),
        (Family.DEEPGAIT_P3D, DEPTH_VARIANTS['22-layer'], 11.1e6),
        (Family.SWIN_2D, SWIN_DEFAULT_BLOCKS, 10.9e6),
        (Family.SWIN_3D, SWIN_DEFAULT_BLOCKS, 13.1e6),
    ])
    def test_full_width_parameter_counts(self, family, blocks, target):
        model = build_backbone(BackboneConfig(family, block_counts=blocks), np.random.default_rng(0))
        assert _within(count_params(model), target, 0.05)

    @pytest.mark.parametrize("family,channels,target", [
        (Family.DEEPGAIT_2D, 32, 2.3e6),
        (Family.DEEPGAIT_2D, 128, 37.3e6),
        (Family.DEEPGAIT_3D, 32, 6.9e6),
        pytest.param(Family.DEEPGAIT_3D, 128, 109.8e6, marks=pytest.mark.slow),
        (Family.DEEPGAIT_P3D, 32, 2.8e6),
        pytest.param(Family.DEEPGAIT_P3D, 128, 44.4e6, marks=pytest.mark.slow),
    ])
    def test_width_scaling(self, family, channels, target):
        model = build_backbone(BackboneConfig(family, base_channels=channels), np.random.default_rng(0))
        assert _within(count_params(model), target, 0.05)

    @pytest.mark.parametrize("family,target", [(Family.SWIN_2D, 8.8e6), (Family.SWIN_3D, 9.8e6)])
    def test_narrow_swin_parameter_counts(self, family, target):
        model = build_backbone(BackboneConfig(family, block_counts=SWIN_NARROW_BLOCKS), np.random.default_rng(0))
        assert _within(count_params(model), target, 0.05)

    @pytest.mark.parametrize("family,target", [
        (Family.DEEPGAIT_2D, 2.4e9),
        (Family.DEEPGAIT_3D, 6.8e9),
        (Family.DEEPGAIT_P3D, 2.9e9),
    ])
    def test_flops_per_silhouette(self, family, target):
        report = count_flops(build_backbone(BackboneConfig(family), np.random.default_rng(0)))
        assert _within(report.total, target, 0.15)
        assert report.convention == FLOP_CONVENTION

    def test_flops_scale_with_width_squared(self):
        narrow = count_flops(build_backbone(BackboneConfig(Family.DEEPGAIT_2D, base_channels=32), np.random.default_rng(0)))
        wide = count_flops(build_backbone(BackboneConfig(Family.DEEPGAIT_2D), np.random.default_rng(0)))
        assert _within(narrow.total / wide.total, 0.6 / 2.4, 0.10)

    def test_flop_breakdown(self, rng):
        model = build_backbone(tiny_config(), rng)
        report = count_flops(model)
        assert report.per_stage['Conv0'] == 9 * 2 * 64 * 44
        assert report.total == sum(report.per_stage.values())
        assert count_flops(model, per_silhouette=False, frames=30).total == 30 * report.total

    def test_swin_flops_include_attention(self, rng):
        report = count_flops(build_backbone(tiny_config(Family.SWIN_2D, channels=4), rng))
        assert list(report.per_stage) == ['Conv0', 'Stage1', 'Stage2', 'Embed3', 'Stage3', 'Embed4', 'Stage4']
        assert report.per_stage['Embed3'] == 32 * 16 * 150

    def test_format_count(self):
        assert format_count(9_310_000) == "9.31M"
        assert format_count(2.42e9) == "2.42G"
        assert format_count(512) == "512"
