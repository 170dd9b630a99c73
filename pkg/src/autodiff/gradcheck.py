"""
Central finite-difference gradient checks.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from src.autodiff.engine import DiffGraph, DiffNode, Parameter, backpropagate

logger = logging.getLogger(__name__)

FD_STEP = 1e-5


@dataclass
class GradCheckResult:
    """Relative errors per parameter name and the worst of them."""

    errors: Dict[str, float]

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n|| / max(||a||, ||n||)``, zero when both vanish."""
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale < 1e-12:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def finite_difference(
    loss_value: Callable[[], float],
    array: np.ndarray,
    step: float = FD_STEP,
    entries: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Central differences of a scalar function with respect to ``array``.

    The array is perturbed in place and restored after each probe.

    Args:
        loss_value: Recomputes the loss from the current contents of ``array``
        array: Array the loss depends on
        step: Perturbation size
        entries: Optional flat indices to probe; others are left at zero

    Returns:
        Numeric gradient with the shape of ``array``
    """
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    grad_flat = grad.reshape(-1)
    indices = range(flat.size) if entries is None else entries
    for idx in indices:
        original = flat[idx]
        flat[idx] = original + step
        upper = loss_value()
        flat[idx] = original - step
        lower = loss_value()
        flat[idx] = original
        grad_flat[idx] = (upper - lower) / (2.0 * step)
    return grad


def check_gradients(
    build_loss: Callable[[DiffGraph], DiffNode],
    params: Sequence[Parameter],
    step: float = FD_STEP,
    max_entries: Optional[int] = None,
    seed: int = 0,
) -> GradCheckResult:
    """
    Compare backpropagated gradients against central finite differences.

    Args:
        build_loss: Builds the scalar loss on a fresh graph from the parameters' current values
        params: Parameters to check
        step: Finite-difference step
        max_entries: Probe at most this many random entries per parameter
        seed: Seed for entry sampling

    Returns:
        GradCheckResult with one relative error per parameter
    """
    for param in params:
        param.zero_grad()
    graph = DiffGraph()
    backpropagate(graph, build_loss(graph))
    analytic = {id(p): p.gradient.copy() for p in params}
    for param in params:
        param.zero_grad()

    def loss_value() -> float:
        return build_loss(DiffGraph(track=False)).item()

    rng = np.random.default_rng(seed)
    errors: Dict[str, float] = {}
    for i, param in enumerate(params):
        entries = None
        if max_entries is not None and param.value.size > max_entries:
            entries = rng.choice(param.value.size, size=max_entries, replace=False)
        numeric = finite_difference(loss_value, param.value, step, entries)
        expected = analytic[id(param)]
        if entries is not None:
            expected = expected.reshape(-1)[entries]
            numeric = numeric.reshape(-1)[entries]
        errors[param.name or f"param{i}"] = relative_error(expected, numeric)

    logger.debug(f"Gradient check over {len(params)} parameters: max error {max(errors.values(), default=0.0):.2e}")
    return GradCheckResult(errors)
