"""
Tests for central-difference gradient verification
"""

import numpy as np
import pytest

from src.autograd import functional as F
from src.autograd.gradcheck import grad_check
from src.autograd.tensor import Tensor, active_tape
from src.models.gradcheck_suite import CASES, run_gradcheck_suite
from src.models.losses import cross_entropy_loss
from src.utils.exceptions import ConfigurationError, GradientCheckError


def test_linear_map_is_exact(float64, rng):
    weight = rng.standard_normal((4, 3))

    def objective(x):
        return (x @ Tensor(weight)).sum()

    report = grad_check(objective, Tensor(rng.standard_normal((2, 4))))
    assert report.passed
    assert report.max_relative_error < 1e-8


def test_conv_relu_sum(float64, rng):
    weight = Tensor(rng.uniform(0.5, 1.5, (2, 2, 3, 3)))
    x = Tensor(rng.uniform(0.5, 1.5, (1, 2, 5, 5)))
    report = grad_check(lambda inp: F.relu(F.conv2d(inp, weight, padding=1)).sum(), x, wrt=[weight])
    assert report.max_relative_error < 1e-6
    assert report.checked_coordinates == x.size + weight.size


def test_softmax_cross_entropy(float64, rng):
    labels = np.array([0, 2, 1])
    report = grad_check(lambda logits: cross_entropy_loss(logits, labels), Tensor(rng.standard_normal((3, 2, 4))))
    assert report.max_relative_error < 1e-6


def test_coordinate_sampling_caps_work(float64, rng):
    x = Tensor(rng.standard_normal(100))
    report = grad_check(lambda t: (t * t).sum(), x, max_coordinates=7)
    assert report.checked_coordinates == 7


def test_requires_float64_mode(rng):
    with pytest.raises(GradientCheckError):
        grad_check(lambda t: t.sum(), Tensor(rng.standard_normal(3)))


def test_epsilon_range(float64, rng):
    with pytest.raises(GradientCheckError):
        grad_check(lambda t: t.sum(), Tensor(rng.standard_normal(3)), epsilon=1e-2)


def test_non_scalar_function(float64, rng):
    with pytest.raises(GradientCheckError):
        grad_check(lambda t: t * 2.0, Tensor(rng.standard_normal(3)))


def test_wrong_gradient_is_detected(float64, rng):
    def squared_with_identity_gradient(t):
        out = Tensor._wrap(t.data ** 2, requires_grad=True)
        tape = active_tape()
        if tape is not None:
            tape.record("broken_square", (t,), out, lambda g: (g,))
        return out.sum()

    report = grad_check(squared_with_identity_gradient, Tensor(rng.uniform(1.0, 2.0, 4)))
    assert not report.passed


@pytest.mark.parametrize("case", ["residual_block_2d", "residual_block_p3d", "swin_block_2d"])
def test_block_cases_pass(case):
    results = run_gradcheck_suite(seed=0, cases=[case], max_coordinates=8)
    assert results[case].passed, results[case]


@pytest.mark.slow
@pytest.mark.parametrize("case", [
    "pipeline_10_layer_2d",
    "pipeline_10_layer_3d",
    "pipeline_10_layer_p3d",
    "pipeline_10_layer_swin_2d",
])
def test_pipeline_cases_pass(case):
    results = run_gradcheck_suite(seed=0, cases=[case], max_coordinates=6)
    assert results[case].passed, results[case]
    assert results[case].checked_coordinates == 4 * 6


def test_unknown_case():
    with pytest.raises(ConfigurationError):
        run_gradcheck_suite(cases=["nope"])


@pytest.mark.slow
def test_full_suite_passes():
    results = run_gradcheck_suite(seed=0)
    assert list(results) == list(CASES)
    failed = {name: r.max_relative_error for name, r in results.items() if not r.passed}
    assert not failed
