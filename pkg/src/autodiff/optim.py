"""
Adam optimiser for ``Parameter`` lists.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.autodiff.engine import Parameter
from src.errors import UninitializedStateError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """First and second moment estimates, one pair per parameter, plus the step count."""

    step: int = 0
    first: List[np.ndarray] = field(default_factory=list)
    second: List[np.ndarray] = field(default_factory=list)
    names: Tuple[str, ...] = ()

    @classmethod
    def create(cls, params: Sequence[Parameter]) -> "AdamState":
        return cls(
            step=0,
            first=[np.zeros_like(p.value) for p in params],
            second=[np.zeros_like(p.value) for p in params],
            names=tuple(p.name or "" for p in params),
        )


def adam_step(
    params: Sequence[Parameter],
    state: Optional[AdamState],
    lr: float = 1e-4,
    betas: Tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> AdamState:
    """
    Apply one bias-corrected Adam update in place and zero the gradients.

    Args:
        params: Parameters to update (gradients populated by backpropagate)
        state: State from ``AdamState.create`` for exactly these parameters
        lr: Learning rate
        betas: Exponential decay rates of the moment estimates
        eps: Denominator stabiliser

    Returns:
        The updated state
    """
    if state is None:
        raise UninitializedStateError("adam_step called before AdamState.create")
    if len(state.first) != len(params) or any(
        p.value.shape != m.shape for p, m in zip(params, state.first)
    ):
        raise UninitializedStateError("AdamState was created for a different parameter list")

    beta1, beta2 = betas
    state.step += 1
    correction1 = 1.0 - beta1**state.step
    correction2 = 1.0 - beta2**state.step

    for i, param in enumerate(params):
        grad = param.gradient
        state.first[i] = beta1 * state.first[i] + (1.0 - beta1) * grad
        state.second[i] = beta2 * state.second[i] + (1.0 - beta2) * grad * grad
        m_hat = state.first[i] / correction1
        v_hat = state.second[i] / correction2
        param.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
        param.zero_grad()

    return state
