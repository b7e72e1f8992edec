"""
Learning-rate schedules: multi-step decay and step-quantized cosine annealing
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Tuple

from src.utils.exceptions import ConfigurationError, ScheduleError


class ScheduleKind(str, Enum):
    MULTISTEP = "multistep"
    COSINE = "cosine"


@dataclass
class ScheduleConfig:
    """
    Attributes:
        kind: 'multistep' or 'cosine'
        total_steps: Training length
        milestones: Steps at which multistep decays (strictly increasing, < total_steps)
        gamma: Multistep decay factor
        i_max: Cosine half period; the rate holds at lr_min from here on
        update_granularity: Cosine updates every this many steps
    """
    kind: ScheduleKind = ScheduleKind.MULTISTEP
    total_steps: int = 60000
    milestones: Tuple[int, ...] = field(default_factory=tuple)
    gamma: float = 0.1
    i_max: Optional[int] = None
    update_granularity: int = 1000

    def __post_init__(self):
        try:
            self.kind = ScheduleKind(self.kind.lower() if isinstance(self.kind, str) else self.kind)
        except ValueError:
            raise ConfigurationError(f"Unknown schedule '{self.kind}'. Use one of {[k.value for k in ScheduleKind]}")
        self.milestones = tuple(int(m) for m in self.milestones)
        if self.total_steps < 0:
            raise ConfigurationError(f"total_steps must be >= 0, got {self.total_steps}")
        if any(b <= a for a, b in zip(self.milestones, self.milestones[1:])):
            raise ConfigurationError(f"Milestones must be strictly increasing, got {list(self.milestones)}")
        if self.milestones and (self.milestones[0] <= 0 or self.milestones[-1] >= self.total_steps):
            raise ConfigurationError(f"Milestones must lie in (0, {self.total_steps}), got {list(self.milestones)}")
        if not 0 < self.gamma <= 1:
            raise ConfigurationError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.update_granularity < 1:
            raise ConfigurationError(f"update_granularity must be >= 1, got {self.update_granularity}")
        if self.kind is ScheduleKind.COSINE:
            if self.i_max is None:
                self.i_max = self.total_steps
            if self.i_max < 1:
                raise ConfigurationError(f"Cosine schedules need i_max >= 1, got {self.i_max}")

    def to_dict(self) -> Dict:
        return {
            'kind': self.kind.value,
            'total_steps': self.total_steps,
            'milestones': list(self.milestones),
            'gamma': self.gamma,
            'i_max': self.i_max,
            'update_granularity': self.update_granularity,
        }


def lr_at(step: int, schedule: ScheduleConfig, base_lr: float, lr_min: float = 0.0) -> float:
    """
    Learning rate in effect at ``step``

    Multistep: base_lr * gamma ** (milestones passed).
    Cosine: lr_min + (base_lr - lr_min) * (1 + cos(pi * q / i_max)) / 2 with q
    the step rounded down to the update granularity; lr_min from step i_max on.

    Args:
        step: Zero-based step in [0, total_steps)
        schedule: Schedule description
        base_lr: Initial learning rate
        lr_min: Cosine floor (capped at base_lr)

    Raises:
        ScheduleError: If ``step`` lies outside [0, total_steps)
    """
    if not 0 <= step < schedule.total_steps:
        raise ScheduleError(f"Step {step} outside [0, {schedule.total_steps})")
    if schedule.kind is ScheduleKind.MULTISTEP:
        passed = sum(1 for milestone in schedule.milestones if milestone <= step)
        return base_lr * schedule.gamma ** passed

    floor = min(lr_min, base_lr)
    quantized = (step // schedule.update_granularity) * schedule.update_granularity
    if step >= schedule.i_max:
        return floor
    return floor + (base_lr - floor) * (1.0 + math.cos(math.pi * quantized / schedule.i_max)) / 2.0
