"""
Warm-starting SwinGait from a trained DeepGaitV2 checkpoint
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Set, Union

import numpy as np

from src.autograd.tensor import Parameter
from src.nn.module import Module
from src.utils.checkpoint import Checkpoint, load_checkpoint
from src.utils.exceptions import WarmStartError
from src.utils.logger import get_logger

logger = get_logger(__name__)

WARM_PREFIXES = ('conv0.', 'stage1.', 'stage2.', 'head.')
WARM_LR = 3e-5


@dataclass
class ParamGroup:
    """Parameters sharing one learning rate"""
    name: str
    params: List[Parameter] = field(default_factory=list)
    lr: float = 0.0


def warm_start_from(
    swin_model: Module,
    checkpoint: Union[Path, str, Checkpoint, Dict[str, np.ndarray]]
) -> Module:
    """
    Copy Conv0, Stage1, Stage2 and head tensors from a DeepGaitV2 checkpoint

    Swin stages and embeddings keep their fresh initialization. The copied
    parameter names are recorded on ``swin_model.warm_parameter_names`` so
    ``build_param_groups`` can give them the reduced learning rate.

    Raises:
        WarmStartError: On a missing mapped name or a shape mismatch
    """
    if isinstance(checkpoint, (str, Path)):
        checkpoint = load_checkpoint(Path(checkpoint))
    source = checkpoint.parameters if isinstance(checkpoint, Checkpoint) else dict(checkpoint)

    params = dict(swin_model.named_parameters())
    buffers = {}
    for module_name, module in swin_model.named_modules():
        for name in module._buffers:
            buffers[f"{module_name}.{name}" if module_name else name] = (module, name)

    warm: Set[str] = set()
    for name in sorted(set(params) | set(buffers)):
        if not name.startswith(WARM_PREFIXES):
            continue
        if name not in source:
            raise WarmStartError(f"Checkpoint lacks '{name}' required for warm start")
        value = np.asarray(source[name])
        if name in params:
            if value.shape != params[name].shape:
                raise WarmStartError(f"Shape mismatch for '{name}': checkpoint {value.shape}, model {params[name].shape}")
            params[name].data = value.astype(params[name].dtype, copy=True)
            warm.add(name)
        else:
            module, attr = buffers[name]
            current = module._buffers[attr]
            if current is not None and current.shape != value.shape:
                raise WarmStartError(f"Shape mismatch for '{name}': checkpoint {value.shape}, model {current.shape}")
            module._buffers[attr] = value.astype(np.float64, copy=True)

    swin_model.warm_parameter_names = warm
    logger.info(f"Warm-started {len(warm)} parameter tensors")
    return swin_model


def build_param_groups(model: Module, base_lr: float, warm_lr: float = WARM_LR) -> List[ParamGroup]:
    """
    Split parameters into ``fresh`` (base_lr) and ``warm`` (warm_lr) groups

    The warm group is present only after ``warm_start_from``.
    """
    warm_names: Optional[Set[str]] = getattr(model, 'warm_parameter_names', None) or set()
    fresh = ParamGroup('fresh', lr=base_lr)
    warm = ParamGroup('warm', lr=warm_lr)
    for name, param in model.named_parameters():
        (warm if name in warm_names else fresh).params.append(param)
    return [group for group in (fresh, warm) if group.params]
