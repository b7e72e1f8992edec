"""
Tests for the SGD and AdamW update rules
"""

import numpy as np
import pytest

from src.autograd.tensor import Parameter
from src.models.warm_start import WARM_LR
from src.training.optim import (
    SGD,
    AdamW,
    OptimizerConfig,
    OptimizerKind,
    OptimizerState,
    build_optimizer,
    optimizer_step,
)
from src.utils.exceptions import ConfigurationError, OptimizationError
from tests.conftest import tiny_config


def test_sgd_momentum_by_hand():
    config = OptimizerConfig('sgd', lr=0.1, weight_decay=0.0, momentum=0.9)
    state = OptimizerState()
    params = [np.array([1.0])]
    params, state = optimizer_step(params, [np.array([1.0])], state, config)
    np.testing.assert_allclose(params[0], [0.9])
    params, state = optimizer_step(params, [np.array([1.0])], state, config)
    np.testing.assert_allclose(params[0], [0.9 - 0.1 * 1.9])


def test_sgd_weight_decay_is_l2():
    config = OptimizerConfig('sgd', lr=0.5, weight_decay=0.1, momentum=0.0)
    params, _ = optimizer_step([np.array([2.0])], [np.array([0.0])], OptimizerState(), config)
    np.testing.assert_allclose(params[0], [2.0 - 0.5 * 0.2])


def test_adamw_decay_is_decoupled():
    config = OptimizerConfig('adamw', lr=1e-3, weight_decay=2e-2)
    params, _ = optimizer_step([np.array([3.0, -4.0])], [np.zeros(2)], OptimizerState(), config)
    np.testing.assert_allclose(params[0], np.array([3.0, -4.0]) * (1.0 - 1e-3 * 2e-2))


def test_adamw_first_step_moves_by_lr():
    config = OptimizerConfig('adamw', lr=0.01, weight_decay=0.0)
    params, _ = optimizer_step([np.array([0.0])], [np.array([-5.0])], OptimizerState(), config)
    np.testing.assert_allclose(params[0], [0.01], rtol=1e-6)


def test_adamw_converges_on_quadratic():
    config = OptimizerConfig('adamw', lr=0.01, weight_decay=0.0)
    state, params = OptimizerState(), [np.array([0.0, 6.0])]
    for _ in range(2000):
        params, state = optimizer_step(params, [2.0 * (params[0] - 3.0)], state, config)
    np.testing.assert_allclose(params[0], [3.0, 3.0], atol=0.05)


def test_parameters_without_gradient_are_untouched():
    config = OptimizerConfig('sgd', lr=0.1)
    state = OptimizerState()
    frozen = np.array([7.0])
    params, state = optimizer_step([np.array([1.0]), frozen], [np.array([1.0]), None], state, config)
    assert params[1] is frozen
    assert 1 not in state.steps
    with pytest.raises(OptimizationError):
        optimizer_step([np.array([1.0])], [None], state, config)


def test_per_parameter_rates():
    config = OptimizerConfig('sgd', lr=0.1, weight_decay=0.0, momentum=0.0)
    params, _ = optimizer_step([np.zeros(1), np.zeros(1)], [np.ones(1), np.ones(1)], OptimizerState(), config, [1.0, 0.5])
    np.testing.assert_allclose([params[0][0], params[1][0]], [-1.0, -0.5])


def test_dtype_is_preserved():
    config = OptimizerConfig('adamw', lr=0.1)
    params, _ = optimizer_step([np.ones(3, dtype=np.float32)], [np.ones(3)], OptimizerState(), config)
    assert params[0].dtype == np.float32


@pytest.mark.parametrize("kwargs", [
    dict(kind='rmsprop'), dict(lr=0.0), dict(lr=0.1, lr_min=0.2), dict(momentum=1.0),
    dict(betas=(0.9, 1.0)), dict(weight_decay=-1.0), dict(group_lrs={'warm': 0.0}),
])
def test_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        OptimizerConfig(**kwargs)


def test_kind_is_case_insensitive():
    assert OptimizerConfig('AdamW').kind is OptimizerKind.ADAMW


def test_optimizer_steps_parameters():
    param = Parameter(np.array([1.0, 2.0]))
    param.grad = np.array([1.0, 1.0], dtype=np.float32)
    from src.models.warm_start import ParamGroup
    optimizer = SGD([ParamGroup('fresh', [param], lr=0.5)], OptimizerConfig('sgd', lr=0.5, weight_decay=0.0, momentum=0.0))
    optimizer.step()
    np.testing.assert_allclose(param.data, [0.5, 1.5])
    optimizer.zero_grad()
    assert param.grad is None
    with pytest.raises(ConfigurationError):
        AdamW([ParamGroup('fresh', [param], lr=0.5)], OptimizerConfig('sgd'))


def test_build_optimizer_groups(rng):
    from src.models.recognizer import build_recognizer
    from src.models.backbone import Family
    from src.models.warm_start import warm_start_from

    source = build_recognizer(tiny_config(Family.DEEPGAIT_2D), 3, rng, embed_dim=4)
    model = build_recognizer(tiny_config(Family.SWIN_2D), 3, rng, embed_dim=4)
    optimizer = build_optimizer(model, OptimizerConfig('adamw', lr=3e-4))
    assert [g.name for g in optimizer.groups] == ['fresh']
    assert isinstance(optimizer, AdamW)

    warm_start_from(model, source.state_dict())
    optimizer = build_optimizer(model, OptimizerConfig('adamw', lr=3e-4))
    assert optimizer.base_lrs == {'fresh': 3e-4, 'warm': WARM_LR}
    overridden = build_optimizer(model, OptimizerConfig('adamw', lr=3e-4, group_lrs={'warm': 1e-5}))
    assert overridden.base_lrs['warm'] == 1e-5
