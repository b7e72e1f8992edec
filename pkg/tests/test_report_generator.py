"""
Tests for the markdown report generator
"""

import numpy as np
import pytest

from src.autograd.gradcheck import GradCheckReport
from src.evaluation.retrieval import EvalReport, ShuffleAblation
from src.models.backbone import BackboneConfig, Family, build_backbone, plan_shapes
from src.models.profiler import count_flops, count_params
from src.reporting.report_generator import ReportGenerator
from src.utils.exceptions import ReportGenerationError
from tests.conftest import tiny_config


@pytest.fixture
def reports():
    return ReportGenerator()


def _eval_report(excluded=()):
    return EvalReport({1: 0.75, 5: 1.0}, 0.8125, [1, 2, 1, 1], 4, list(excluded), True)


def test_inspect_report(reports, rng):
    config = tiny_config(Family.SWIN_2D)
    model = build_backbone(config, rng)
    text = reports.generate_inspect_report(config, plan_shapes(config, 30), count_params(model), None, count_flops(model))
    assert text.startswith("# GaitForge - Model Inspection (SwinGait-2D)")
    assert "| Tokens | 30 x 15 x 10 x 16 |" in text
    assert "with head" not in text
    assert "1 multiply-accumulate = 1 FLOP" in text


def test_eval_report(reports, tmp_path):
    text = reports.generate_eval_report(_eval_report(), tmp_path / 'm.gfckpt')
    assert "- **Rank-1:** 0.7500" in text
    assert "- **mAP:** 0.8125" in text
    assert "- **Identical-view exclusion:** on" in text
    assert "**SUCCESS**" in text


def test_eval_report_warns_on_excluded_probes(reports):
    text = reports.generate_eval_report(_eval_report(['z/nm-01/090']))
    assert "## Warnings" in text
    assert "**COMPLETED WITH WARNINGS**" in text


def test_ablation_report(reports):
    intact, shuffled = _eval_report(), EvalReport({1: 0.25, 5: 0.5}, 0.4, [], 4)
    text = reports.generate_ablation_report(ShuffleAblation(0.75, 0.25, 0.5, intact, shuffled))
    assert "| shuffled | 0.2500 | 0.4000 |" in text
    assert "- **Delta (intact - shuffled):** 0.5000" in text


def test_patch_report_sorted(reports):
    text = reports.generate_patch_report({4: 0.9, 1: 1.0, 2: 0.95}, frames=10)
    assert text.index("| 1x1 |") < text.index("| 2x2 |") < text.index("| 4x4 |")


def test_gradcheck_report_flags_failures(reports):
    text = reports.generate_gradcheck_report({
        'ok': GradCheckReport(1e-8, True, 1e-4, 12),
        'bad': GradCheckReport(0.5, False, 1e-4, 12),
    })
    assert "| bad | 5.0000e-01 | 1e-04 | 12 | FAIL |" in text
    assert "**FAILED**" in text


def test_save_report(reports, tmp_path):
    path = tmp_path / 'nested' / 'r.md'
    reports.save_report("# hi", path)
    assert path.read_text() == "# hi"
    with pytest.raises(ReportGenerationError):
        reports.save_report("# hi", tmp_path / 'nested' / 'r.md' / 'child.md')


def test_full_width_inspection_mentions_counts(reports):
    config = BackboneConfig(Family.DEEPGAIT_2D)
    model = build_backbone(config, np.random.default_rng(0))
    text = reports.generate_inspect_report(config, plan_shapes(config, 30), count_params(model), None, count_flops(model))
    assert "- **Depth:** 22 layers" in text
    assert "- **Parameters (backbone):** " in text
