"""
CATS adapter: depthwise temporal convolutions around one graph-attention layer.

Hidden states (B, L, d) are read as d channel nodes carrying L-step features:
phi(H) = H + TDC_up(gelu(GAT(TDC_down(H)))) with TDC_up zero-initialised, so
a fresh adapter is the identity.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from src.autodiff.engine import DiffGraph, DiffNode, Parameter
from src.errors import ShapeMismatchError
from src.models.backbone import BackboneConfig
from src.models.layers import Module, xavier_uniform

logger = logging.getLogger(__name__)


class TdcLayer(Module):
    """
    Temporal depthwise convolution: one kernel of ``kernel_size`` taps per channel.

    Stride 1 and symmetric padding of (r - 1) / 2 keep the temporal length.
    """

    def __init__(self, channels: int, kernel_size: int = 5, rng: Optional[np.random.Generator] = None) -> None:
        if kernel_size < 1 or kernel_size % 2 == 0:
            raise ShapeMismatchError(f"TDC kernel size must be odd, got {kernel_size}")
        if rng is None:
            kernel = np.zeros((channels, kernel_size))
        else:
            kernel = xavier_uniform(rng, (channels, kernel_size), kernel_size, kernel_size)
        self.kernel = Parameter(kernel, "kernel")
        self.bias = Parameter(np.zeros(channels), "bias")

    @property
    def channels(self) -> int:
        return self.kernel.value.shape[0]

    @property
    def padding(self) -> int:
        return (self.kernel.value.shape[1] - 1) // 2

    def __call__(self, g: DiffGraph, x: DiffNode) -> DiffNode:
        """x has shape (..., channels, length)."""
        if x.shape[-2] != self.channels:
            raise ShapeMismatchError(f"TDC expects {self.channels} channels, got {x.shape}")
        out = g.conv1d(x, self.kernel, padding=self.padding, stride=1)
        return g.add(out, g.reshape(self.bias, (self.channels, 1)))


class GatLayer(Module):
    """
    Single-head graph attention on a fully connected graph with self-loops.

    Node i's output is ``sum_j alpha_ij W x_j`` with
    ``alpha_ij = softmax_j(LeakyReLU(a_1 . W x_i + a_2 . W x_j))``.
    """

    def __init__(self, features: int, rng: np.random.Generator) -> None:
        self.weight = Parameter(xavier_uniform(rng, (features, features), features, features), "weight")
        self.attn = Parameter(xavier_uniform(rng, (2 * features,), 2 * features, 1), "attn")

    @property
    def features(self) -> int:
        return self.weight.value.shape[0]

    def _project(self, g: DiffGraph, nodes: DiffNode) -> DiffNode:
        if nodes.shape[-1] != self.features:
            raise ShapeMismatchError(f"GAT expects node features of length {self.features}, got {nodes.shape}")
        return g.matmul(nodes, g.transpose(self.weight))

    def _weights(self, g: DiffGraph, projected: DiffNode) -> DiffNode:
        f = self.features
        a_self = g.reshape(g.slice(self.attn, (slice(0, f),)), (f, 1))
        a_other = g.reshape(g.slice(self.attn, (slice(f, 2 * f),)), (f, 1))
        s_self = g.matmul(projected, a_self)
        s_other = g.matmul(projected, a_other)
        nd = len(projected.shape)
        swap = tuple(range(nd - 2)) + (nd - 1, nd - 2)
        return g.softmax(g.leaky_relu(g.add(s_self, g.transpose(s_other, swap))))

    def attention_weights(self, g: DiffGraph, nodes: DiffNode) -> DiffNode:
        """Row-stochastic (..., N, N) attention matrix."""
        return self._weights(g, self._project(g, nodes))

    def __call__(self, g: DiffGraph, nodes: DiffNode) -> DiffNode:
        """nodes has shape (..., N, F)."""
        projected = self._project(g, nodes)
        return g.matmul(self._weights(g, projected), projected)


class CatsAdapter(Module):
    """Residual adapter for (B, L, d) hidden states with L fixed at construction."""

    def __init__(self, d_model: int, length: int, kernel_size: int = 5, seed: int = 0) -> None:
        rng = np.random.default_rng(seed)
        self.length = length
        self.tdc_down = TdcLayer(d_model, kernel_size, rng)
        self.gat = GatLayer(length, rng)
        self.tdc_up = TdcLayer(d_model, kernel_size, None)

    def __call__(self, g: DiffGraph, hidden: DiffNode) -> DiffNode:
        if hidden.shape[-2] != self.length or hidden.shape[-1] != self.tdc_down.channels:
            raise ShapeMismatchError(
                f"CATS adapter expects (..., {self.length}, {self.tdc_down.channels}), got {hidden.shape}"
            )
        nd = len(hidden.shape)
        swap = tuple(range(nd - 2)) + (nd - 1, nd - 2)
        channels = g.transpose(hidden, swap)
        mixed = self.tdc_up(g, g.gelu(self.gat(g, self.tdc_down(g, channels))))
        return g.transpose(g.add(channels, mixed), swap)


@dataclass(frozen=True)
class ParameterCounts:
    adapter: int
    backbone: int
    forecaster: int

    @property
    def ratio(self) -> float:
        return self.adapter / self.backbone

    def to_dict(self) -> Dict[str, float]:
        return {
            "adapter_params": self.adapter,
            "backbone_params": self.backbone,
            "forecaster_params": self.forecaster,
            "ratio": self.ratio,
        }


def tdc_parameters(channels: int, kernel_size: int) -> int:
    return channels * (kernel_size + 1)


def gat_parameters(features: int) -> int:
    return features * features + 2 * features


def backbone_parameters(config: BackboneConfig) -> int:
    """Embedding, K blocks and g_c in closed form."""
    d, f = config.d_model, config.d_ff
    embedding = config.n_vars * d + d
    attention = 4 * (d * d + d)
    feed_forward = d * f + f + f * d + d
    norms = 2 * (2 * d)
    head = d * config.n_classes + config.n_classes
    return embedding + config.n_blocks * (attention + feed_forward + norms) + head


def count_parameters(
    config: BackboneConfig,
    kernel_size: int = 5,
    adapter: str = "cats",
    rank: int = 8,
    length: Optional[int] = None,
) -> ParameterCounts:
    """
    Closed-form parameter counts of the adapters and the backbone.

    Args:
        config: Backbone configuration
        kernel_size: TDC kernel size r
        adapter: ``cats``, ``linear`` or ``none``
        rank: Bottleneck of the linear adapter
        length: GAT feature length F (defaults to the window length)

    Returns:
        ParameterCounts; the ratio is adapter / backbone
    """
    features = config.window_len if length is None else length
    if adapter == "cats":
        per_block = 2 * tdc_parameters(config.d_model, kernel_size) + gat_parameters(features)
    elif adapter == "linear":
        per_block = 2 * config.d_model * rank
    elif adapter == "none":
        per_block = 0
    else:
        raise ValueError(f"Unknown adapter kind: {adapter}")
    forecaster = config.d_model * config.n_vars + config.n_vars
    return ParameterCounts(per_block * config.n_blocks, backbone_parameters(config), forecaster)
