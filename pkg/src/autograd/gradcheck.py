"""
Central-difference gradient verification
"""

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.autograd.tensor import Tape, Tensor, get_default_dtype, no_grad
from src.utils.exceptions import GradientCheckError
from src.utils.logger import get_logger

logger = get_logger(__name__)

EPSILON_RANGE = (1e-7, 1e-4)


@dataclass
class GradCheckReport:
    """Outcome of one gradient check"""
    max_relative_error: float
    passed: bool
    tolerance: float
    checked_coordinates: int
    worst_input: int = -1
    worst_index: Tuple[int, ...] = ()


def _scalar(value: Tensor) -> Tensor:
    if not isinstance(value, Tensor) or value.size != 1:
        shape = getattr(value, 'shape', type(value).__name__)
        raise GradientCheckError(f"Checked function must return a scalar tensor, got {shape}")
    return value


def _coordinates(shape: Tuple[int, ...], limit: Optional[int], rng: np.random.Generator) -> List[Tuple[int, ...]]:
    total = int(np.prod(shape)) if shape else 1
    if limit is None or total <= limit:
        flat = np.arange(total)
    else:
        flat = np.sort(rng.choice(total, size=limit, replace=False))
    return [tuple(int(i) for i in np.unravel_index(f, shape)) for f in flat]


def grad_check(
    function: Callable[..., Tensor],
    inputs: Union[Tensor, Sequence[Tensor]],
    epsilon: float = 1e-6,
    tolerance: float = 1e-5,
    wrt: Optional[Sequence[Tensor]] = None,
    max_coordinates: Optional[int] = None,
    floor: float = 1e-3,
    rng: Optional[np.random.Generator] = None
) -> GradCheckReport:
    """
    Compare tape gradients against central differences

    Args:
        function: Called as ``function(*inputs)``; must return a scalar tensor
        inputs: Tensor or tensors passed to ``function``; all are checked
        epsilon: Finite-difference step, within [1e-7, 1e-4]
        tolerance: Pass threshold on the maximum relative error
        wrt: Extra tensors captured by ``function`` (e.g. module parameters)
            whose gradients are also checked
        max_coordinates: Per-tensor cap on checked coordinates; sampled when
            a tensor has more elements
        floor: Lower bound on the relative-error denominator so that
            coordinates with vanishing gradients compare absolutely
        rng: Generator used for coordinate sampling

    Returns:
        GradCheckReport with the maximum relative error and pass flag

    Raises:
        GradientCheckError: Outside 64-bit mode, epsilon out of range or a
            non-scalar function value
    """
    if get_default_dtype() != np.float64:
        raise GradientCheckError("Gradient checks require 64-bit precision mode")
    if not EPSILON_RANGE[0] <= epsilon <= EPSILON_RANGE[1]:
        raise GradientCheckError(f"epsilon must lie in {EPSILON_RANGE}, got {epsilon}")

    args = [inputs] if isinstance(inputs, Tensor) else list(inputs)
    targets = args + [t for t in (wrt or []) if all(t is not a for a in args)]
    for tensor in targets:
        if tensor.dtype != np.float64:
            raise GradientCheckError(f"Checked tensor has dtype {tensor.dtype}; float64 required")
        tensor.requires_grad = True
        tensor.zero_grad()

    with Tape() as tape:
        loss = _scalar(function(*args))
    tape.backward(loss)
    analytic = [t.grad.copy() for t in targets]

    rng = rng or np.random.default_rng(0)
    report = GradCheckReport(0.0, True, tolerance, 0)
    for position, tensor in enumerate(targets):
        for index in _coordinates(tensor.shape, max_coordinates, rng):
            original = tensor.data[index]
            with no_grad():
                tensor.data[index] = original + epsilon
                upper = _scalar(function(*args)).item()
                tensor.data[index] = original - epsilon
                lower = _scalar(function(*args)).item()
            tensor.data[index] = original

            numeric = (upper - lower) / (2.0 * epsilon)
            exact = float(analytic[position][index])
            error = abs(exact - numeric) / max(abs(exact), abs(numeric), floor)
            report.checked_coordinates += 1
            if error > report.max_relative_error:
                report.max_relative_error = error
                report.worst_input = position
                report.worst_index = index

    report.passed = report.max_relative_error < tolerance
    logger.debug(
        f"grad_check: {report.checked_coordinates} coordinates, "
        f"max relative error {report.max_relative_error:.3e}"
    )
    return report
