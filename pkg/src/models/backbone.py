"""
Compact Transformer encoder for multivariate time series classification.

Windows arrive as (B, L, D). Adapters, when supplied, run after every encoder
block and both the block output and the adapter output are kept, because the
correlation loss reads the source stream before the adapter and the target
stream after it.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src.autodiff.engine import DiffGraph, DiffNode
from src.errors import AdapterCountError, ShapeMismatchError
from src.models.layers import EncoderBlock, Linear, Module, sinusoidal_table

logger = logging.getLogger(__name__)

MAX_POSITIONS = 512


@dataclass(frozen=True)
class BackboneConfig:
    """Shape hyper-parameters of the encoder."""

    n_vars: int
    n_classes: int
    d_model: int = 128
    n_blocks: int = 3
    n_heads: int = 4
    d_ff: int = 256
    window_len: int = 48
    max_len: int = MAX_POSITIONS

    def __post_init__(self) -> None:
        counts = (self.n_vars, self.n_classes, self.d_model, self.n_blocks, self.n_heads, self.d_ff, self.window_len)
        if min(counts) < 1:
            raise ShapeMismatchError(f"All backbone sizes must be >= 1: {asdict(self)}")
        if self.d_model % self.n_heads != 0:
            raise ShapeMismatchError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")

    @classmethod
    def from_settings(cls, settings: Any, n_vars: int, n_classes: int) -> "BackboneConfig":
        return cls(
            n_vars=n_vars,
            n_classes=n_classes,
            d_model=settings["d_model"],
            n_blocks=settings["n_blocks"],
            n_heads=settings["n_heads"],
            d_ff=settings["d_ff"],
            window_len=settings["window_len"],
        )

    def to_dict(self) -> Dict[str, int]:
        return asdict(self)


@dataclass
class ForwardResult:
    """Everything one forward pass exposes to the losses."""

    pre_adapter: List[DiffNode]
    post_adapter: List[DiffNode]
    pooled: DiffNode
    logits: DiffNode
    attention: List[np.ndarray] = field(default_factory=list)

    @property
    def hidden(self) -> DiffNode:
        return self.post_adapter[-1]


class BackboneModel(Module):
    """
    Embedding, sinusoidal positions, K post-norm encoder blocks and two heads.

    ``classifier`` (g_c) mean-pools over time; ``forecaster`` (g_f) maps every
    time step back to D values.
    """

    def __init__(self, config: BackboneConfig, seed: int = 0) -> None:
        self.config = config
        rng = np.random.default_rng(seed)
        self.embedding = Linear(rng, config.n_vars, config.d_model)
        self.blocks = [EncoderBlock(rng, config.d_model, config.n_heads, config.d_ff) for _ in range(config.n_blocks)]
        self.classifier = Linear(rng, config.d_model, config.n_classes)
        self.forecaster = Linear(rng, config.d_model, config.n_vars)
        self.positions = sinusoidal_table(config.max_len, config.d_model)

    def backbone_parameters(self) -> int:
        """Embedding, blocks and g_c; g_f is counted separately."""
        modules: List[Module] = [self.embedding, *self.blocks, self.classifier]
        return sum(m.num_parameters() for m in modules)

    def forward(self, g: DiffGraph, windows: np.ndarray, adapters: Optional[Sequence[Module]] = None) -> ForwardResult:
        """
        Run windows through the encoder.

        Args:
            g: Graph to build on
            windows: Array of shape (B, L, D) or a single (L, D) window
            adapters: None/empty, or exactly one adapter per block

        Returns:
            ForwardResult with per-block hidden states, pooled features and logits
        """
        x = np.asarray(windows, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[2] != self.config.n_vars:
            raise ShapeMismatchError(f"Expected windows (B, L, {self.config.n_vars}), got {x.shape}")
        length = x.shape[1]
        if length > self.config.max_len:
            raise ShapeMismatchError(f"Window length {length} exceeds positional table {self.config.max_len}")
        adapters = list(adapters or [])
        if adapters and len(adapters) != self.config.n_blocks:
            raise AdapterCountError(f"Expected 0 or {self.config.n_blocks} adapters, got {len(adapters)}")

        h = g.add(self.embedding(g, g.constant(x)), g.constant(self.positions[:length]))
        pre: List[DiffNode] = []
        post: List[DiffNode] = []
        attention: List[np.ndarray] = []
        for k, block in enumerate(self.blocks):
            h, weights = block(g, h)
            attention.append(weights)
            pre.append(h)
            if adapters:
                h = adapters[k](g, h)
            post.append(h)

        pooled = g.mean(h, axis=1)
        return ForwardResult(pre, post, pooled, self.classifier(g, pooled), attention)

    def forecast(self, g: DiffGraph, result: ForwardResult) -> DiffNode:
        """g_f applied to every time step of the last hidden state: (B, L, D)."""
        return self.forecaster(g, result.hidden)

    def freeze_backbone(self) -> "BackboneModel":
        """Freeze embedding, blocks and g_c; g_f stays trainable."""
        for module in [self.embedding, *self.blocks, self.classifier]:
            module.freeze()
        self.forecaster.unfreeze()
        logger.debug(f"Backbone frozen; {self.forecaster.num_parameters()} forecaster parameters trainable")
        return self


def freeze_backbone(model: BackboneModel) -> BackboneModel:
    return model.freeze_backbone()
