"""
SGD (momentum, L2 weight decay) and AdamW (decoupled weight decay)
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.autograd.tensor import Parameter
from src.models.warm_start import WARM_LR, ParamGroup, build_param_groups
from src.nn.module import Module
from src.utils.exceptions import ConfigurationError, OptimizationError
from src.utils.logger import get_logger

logger = get_logger(__name__)


class OptimizerKind(str, Enum):
    SGD = "sgd"
    ADAMW = "adamw"


@dataclass
class OptimizerConfig:
    """
    Attributes:
        kind: 'sgd' or 'adamw'
        lr: Initial learning rate of the main group
        weight_decay: L2 coefficient (SGD) or decoupled decay (AdamW)
        momentum: SGD momentum
        betas: AdamW moment decay rates
        eps: AdamW denominator floor
        lr_min: Cosine schedule floor
        group_lrs: Per-group initial learning rate overrides, keyed by group name
    """
    kind: OptimizerKind = OptimizerKind.SGD
    lr: float = 0.1
    weight_decay: float = 5e-5
    momentum: float = 0.9
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    lr_min: float = 0.0
    group_lrs: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        try:
            self.kind = OptimizerKind(self.kind.lower() if isinstance(self.kind, str) else self.kind)
        except ValueError:
            raise ConfigurationError(f"Unknown optimizer '{self.kind}'. Use one of {[k.value for k in OptimizerKind]}")
        self.betas = tuple(float(b) for b in self.betas)
        if self.lr <= 0:
            raise ConfigurationError(f"Learning rate must be > 0, got {self.lr}")
        if not 0 <= self.lr_min <= self.lr:
            raise ConfigurationError(f"lr_min must lie in [0, lr], got {self.lr_min}")
        if self.weight_decay < 0:
            raise ConfigurationError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if not 0 <= self.momentum < 1:
            raise ConfigurationError(f"momentum must lie in [0, 1), got {self.momentum}")
        if len(self.betas) != 2 or not all(0 <= b < 1 for b in self.betas):
            raise ConfigurationError(f"betas must be two values in [0, 1), got {self.betas}")
        for name, lr in self.group_lrs.items():
            if lr <= 0:
                raise ConfigurationError(f"Learning rate of group '{name}' must be > 0, got {lr}")

    def to_dict(self) -> Dict:
        return {
            'kind': self.kind.value,
            'lr': self.lr,
            'weight_decay': self.weight_decay,
            'momentum': self.momentum,
            'betas': list(self.betas),
            'eps': self.eps,
            'lr_min': self.lr_min,
            'group_lrs': dict(self.group_lrs),
        }


@dataclass
class OptimizerState:
    """Per-parameter slots keyed by the parameter's position in the flat list"""
    steps: Dict[int, int] = field(default_factory=dict)
    momentum: Dict[int, np.ndarray] = field(default_factory=dict)
    exp_avg: Dict[int, np.ndarray] = field(default_factory=dict)
    exp_avg_sq: Dict[int, np.ndarray] = field(default_factory=dict)


def _sgd_update(index: int, param: np.ndarray, grad: np.ndarray, state: OptimizerState, config: OptimizerConfig, lr: float) -> np.ndarray:
    grad = grad + config.weight_decay * param if config.weight_decay else grad
    if config.momentum:
        buffer = state.momentum.get(index)
        buffer = grad.copy() if buffer is None else config.momentum * buffer + grad
        state.momentum[index] = buffer
        grad = buffer
    return param - lr * grad


def _adamw_update(index: int, param: np.ndarray, grad: np.ndarray, state: OptimizerState, config: OptimizerConfig, lr: float) -> np.ndarray:
    beta1, beta2 = config.betas
    step = state.steps[index]
    param = param * (1.0 - lr * config.weight_decay)
    m = beta1 * state.exp_avg.get(index, np.zeros_like(grad)) + (1.0 - beta1) * grad
    v = beta2 * state.exp_avg_sq.get(index, np.zeros_like(grad)) + (1.0 - beta2) * grad * grad
    state.exp_avg[index], state.exp_avg_sq[index] = m, v
    m_hat = m / (1.0 - beta1 ** step)
    v_hat = v / (1.0 - beta2 ** step)
    return param - lr * m_hat / (np.sqrt(v_hat) + config.eps)


def optimizer_step(
    params: Sequence[np.ndarray],
    grads: Sequence[Optional[np.ndarray]],
    state: OptimizerState,
    config: OptimizerConfig,
    lr: Union[float, Sequence[float], None] = None
) -> Tuple[List[np.ndarray], OptimizerState]:
    """
    Apply one update to every parameter that has a gradient

    Parameters whose gradient is None are returned unchanged and their
    slots are not advanced.

    Args:
        params: Parameter arrays
        grads: Gradient per parameter (None to skip)
        state: Slots from previous steps (updated in place)
        config: Optimizer hyperparameters
        lr: Scalar or per-parameter learning rate (config.lr when omitted)

    Returns:
        Updated parameter arrays and the state

    Raises:
        OptimizationError: If no parameter has a gradient
    """
    if len(params) != len(grads):
        raise OptimizationError(f"{len(params)} parameters but {len(grads)} gradients")
    if all(grad is None for grad in grads):
        raise OptimizationError("No parameter has a gradient; run backward before stepping")
    if lr is None or np.isscalar(lr):
        rates = [config.lr if lr is None else float(lr)] * len(params)
    else:
        rates = list(lr)
    update = _sgd_update if config.kind is OptimizerKind.SGD else _adamw_update

    updated = []
    for index, (param, grad, rate) in enumerate(zip(params, grads, rates)):
        if grad is None:
            updated.append(param)
            continue
        if grad.shape != param.shape:
            raise OptimizationError(f"Gradient shape {grad.shape} does not match parameter {param.shape}")
        state.steps[index] = state.steps.get(index, 0) + 1
        updated.append(update(index, param, grad, state, config, rate).astype(param.dtype, copy=False))
    return updated, state


class Optimizer:
    """
    Stateful optimizer over parameter groups

    Each group keeps its initial learning rate in ``base_lrs``; the schedule
    rewrites ``group.lr`` every step.
    """

    def __init__(self, groups: Sequence[ParamGroup], config: OptimizerConfig):
        if not groups or not any(group.params for group in groups):
            raise OptimizationError("Optimizer needs at least one parameter")
        self.config = config
        self.groups = list(groups)
        self.base_lrs = {group.name: group.lr for group in self.groups}
        self.state = OptimizerState()

    @property
    def params(self) -> List[Parameter]:
        return [param for group in self.groups for param in group.params]

    def zero_grad(self) -> None:
        for param in self.params:
            param.zero_grad()

    def step(self) -> None:
        """Update parameters from their gradient buffers"""
        params, rates = [], []
        for group in self.groups:
            params.extend(group.params)
            rates.extend([group.lr] * len(group.params))
        updated, self.state = optimizer_step(
            [p.data for p in params], [p.grad for p in params], self.state, self.config, rates
        )
        for param, data in zip(params, updated):
            param.data = data


class SGD(Optimizer):
    def __init__(self, groups: Sequence[ParamGroup], config: OptimizerConfig):
        if config.kind is not OptimizerKind.SGD:
            raise ConfigurationError(f"SGD built from a {config.kind.value} config")
        super().__init__(groups, config)


class AdamW(Optimizer):
    def __init__(self, groups: Sequence[ParamGroup], config: OptimizerConfig):
        if config.kind is not OptimizerKind.ADAMW:
            raise ConfigurationError(f"AdamW built from a {config.kind.value} config")
        super().__init__(groups, config)


def build_optimizer(model: Module, config: OptimizerConfig) -> Optimizer:
    """
    Optimizer over a model's parameters

    Warm-started parameters form a separate ``warm`` group whose learning
    rate defaults to 3e-5 (``group_lrs`` overrides any group).
    """
    groups = build_param_groups(model, config.group_lrs.get('fresh', config.lr), config.group_lrs.get('warm', WARM_LR))
    cls = SGD if config.kind is OptimizerKind.SGD else AdamW
    optimizer = cls(groups, config)
    logger.info(
        f"{config.kind.value} optimizer: "
        + ", ".join(f"{g.name}={len(g.params)} tensors @ lr {g.lr:g}" for g in groups)
        + f"; momentum={config.momentum}, betas={config.betas}, weight_decay={config.weight_decay:g}"
    )
    return optimizer
