"""
Built-in gradient verification of every block kind and the 10-layer pipelines

All cases run in 64-bit mode at tiny widths. Each case reduces its output to
a scalar through a fixed random projection and checks input and parameter
gradients against central differences.
"""

from collections import OrderedDict
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.autograd.gradcheck import GradCheckReport, grad_check
from src.autograd.tensor import Tensor, precision
from src.models.backbone import BackboneConfig, Family
from src.models.losses import LossConfig, combined_loss
from src.models.recognizer import GaitRecognizer
from src.nn.blocks import BlockKind, BlockSpec, build_block
from src.nn.module import Module
from src.utils.exceptions import ConfigurationError
from src.utils.logger import get_logger, log_execution_time

logger = get_logger(__name__)

TOLERANCE = 1e-4
EPSILON = 1e-6

Case = Callable[[np.random.Generator], Tuple[Callable[..., Tensor], List[Tensor], List[Tensor]]]


def _projected(module: Module, shape: Sequence[int], rng: np.random.Generator):
    """Scalar objective sum(module(x) * w) with a fixed random w"""
    x = Tensor(rng.standard_normal(shape))
    weights: Dict[str, np.ndarray] = {}

    def objective(inp: Tensor) -> Tensor:
        out = module(inp)
        if 'w' not in weights:
            weights['w'] = np.random.default_rng(1).standard_normal(out.shape)
        return (out * weights['w']).sum()

    return objective, [x]


def _block_case(spec: BlockSpec, shape: Sequence[int]) -> Case:
    def build(rng: np.random.Generator):
        block = build_block(spec, rng)
        block.train()
        objective, inputs = _projected(block, shape, rng)
        return objective, inputs, block.parameters()
    return build


def _pipeline_case(family: Family) -> Case:
    def build(rng: np.random.Generator):
        config = BackboneConfig(family, base_channels=2, block_counts=(1, 1, 1, 1), drop_path_rate=0.0)
        model = GaitRecognizer(config, num_classes=2, rng=rng, embed_dim=4)
        model.train()
        labels = np.array([0, 0, 1, 1])
        clips = Tensor((rng.random((4, 2, 1, 64, 44)) > 0.5).astype(np.float64))

        def objective() -> Tensor:
            output = model(clips)
            return combined_loss(output.embeddings, output.logits, labels, LossConfig()).total

        named = dict(model.named_parameters())
        deep = 'stage3.0.attn.qkv.weight' if config.family.is_swin else 'stage3.0.conv1.weight'
        wrt = [named[name] for name in ('conv0.conv.weight', 'stage2.0.conv1.weight', deep, 'head.fc.0.weight')]
        return objective, [], wrt
    return build


CASES: Dict[str, Case] = OrderedDict([
    ('residual_block_2d', _block_case(BlockSpec(BlockKind.RES2D, 2, 3, stride=2), (2, 2, 6, 6))),
    ('residual_block_3d', _block_case(BlockSpec(BlockKind.RES3D, 2, 3, stride=2), (1, 2, 3, 6, 6))),
    ('residual_block_p3d', _block_case(BlockSpec(BlockKind.RESP3D, 2, 3, stride=2), (1, 2, 3, 6, 6))),
    ('swin_block_2d', _block_case(
        BlockSpec(BlockKind.SWIN2D, 4, 4, window=(1, 3, 5), shifted=True, heads=2), (1, 2, 4, 6, 4))),
    ('swin_block_3d', _block_case(
        BlockSpec(BlockKind.SWIN3D, 4, 4, window=(3, 3, 5), shifted=True, heads=2), (1, 3, 4, 6, 4))),
    ('pipeline_10_layer_2d', _pipeline_case(Family.DEEPGAIT_2D)),
    ('pipeline_10_layer_3d', _pipeline_case(Family.DEEPGAIT_3D)),
    ('pipeline_10_layer_p3d', _pipeline_case(Family.DEEPGAIT_P3D)),
    ('pipeline_10_layer_swin_2d', _pipeline_case(Family.SWIN_2D)),
])


@log_execution_time(logger)
def run_gradcheck_suite(
    seed: int = 0,
    cases: Optional[Sequence[str]] = None,
    max_coordinates: int = 12,
    tolerance: float = TOLERANCE
) -> Dict[str, GradCheckReport]:
    """
    Run the named gradient checks (all when ``cases`` is None)

    Args:
        seed: Seed for weights, inputs and coordinate sampling
        cases: Subset of CASES keys
        max_coordinates: Per-tensor cap on checked coordinates
        tolerance: Pass threshold on the maximum relative error

    Returns:
        Report per case, in suite order
    """
    names = list(CASES) if cases is None else list(cases)
    unknown = [name for name in names if name not in CASES]
    if unknown:
        raise ConfigurationError(f"Unknown gradient-check cases: {unknown}. Available: {list(CASES)}")

    results: Dict[str, GradCheckReport] = OrderedDict()
    with precision(np.float64):
        for name in names:
            rng = np.random.default_rng(seed)
            objective, inputs, wrt = CASES[name](rng)
            results[name] = grad_check(
                objective, inputs,
                epsilon=EPSILON,
                tolerance=tolerance,
                wrt=wrt,
                max_coordinates=max_coordinates,
                rng=rng,
            )
            verdict = "passed" if results[name].passed else "FAILED"
            logger.info(f"gradcheck {name}: {verdict} (max relative error {results[name].max_relative_error:.3e})")
    return results
