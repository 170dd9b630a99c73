"""
Adapter construction and the two-matrix bottleneck adapter.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, List

import numpy as np

from src.autodiff.engine import DiffGraph, DiffNode, Parameter
from src.errors import ShapeMismatchError
from src.models.backbone import BackboneConfig
from src.models.cats import CatsAdapter
from src.models.layers import Module, xavier_uniform

logger = logging.getLogger(__name__)

ADAPTER_KINDS = ("none", "linear", "cats")


class BaselineAdapter(Module):
    """``H + gelu(H W_down) W_up`` with W_up zero-initialised."""

    def __init__(self, d_model: int, rank: int = 8, seed: int = 0) -> None:
        rng = np.random.default_rng(seed)
        self.down = Parameter(xavier_uniform(rng, (d_model, rank), d_model, rank), "down")
        self.up = Parameter(np.zeros((rank, d_model)), "up")

    def __call__(self, g: DiffGraph, hidden: DiffNode) -> DiffNode:
        if hidden.shape[-1] != self.down.value.shape[0]:
            raise ShapeMismatchError(f"Adapter expects width {self.down.value.shape[0]}, got {hidden.shape}")
        return g.add(hidden, g.matmul(g.gelu(g.matmul(hidden, self.down)), self.up))


@dataclass(frozen=True)
class AdapterSpec:
    """Which adapter to insert after each block and its size settings."""

    kind: str = "cats"
    kernel_size: int = 5
    rank: int = 8
    length: int = 48

    def __post_init__(self) -> None:
        if self.kind not in ADAPTER_KINDS:
            raise ValueError(f"Unknown adapter kind: {self.kind}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def build_adapters(spec: AdapterSpec, config: BackboneConfig, seed: int = 0) -> List[Module]:
    """
    One freshly initialised adapter per encoder block.

    Args:
        spec: Adapter kind and sizes
        config: Backbone the adapters attach to
        seed: Base seed; block k uses ``seed + k``

    Returns:
        Empty list for ``none``, otherwise K adapters
    """
    if spec.kind == "none":
        return []
    if spec.kind == "linear":
        return [BaselineAdapter(config.d_model, spec.rank, seed + k) for k in range(config.n_blocks)]
    return [CatsAdapter(config.d_model, spec.length, spec.kernel_size, seed + k) for k in range(config.n_blocks)]


def adapter_parameters(adapters: List[Module]) -> List[Parameter]:
    return [p for adapter in adapters for p in adapter.parameters()]
