"""
Parameter containers and the dense building blocks of the backbone.
"""

import logging
import math
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from src.autodiff.engine import DiffGraph, DiffNode, Parameter
from src.errors import ShapeMismatchError

logger = logging.getLogger(__name__)

LAYER_NORM_EPS = 1e-5


def xavier_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Module:
    """Walks its attributes to find Parameters, nested Modules and lists of Modules."""

    def _children(self) -> Iterator[Tuple[str, object]]:
        for name, value in vars(self).items():
            if isinstance(value, (Parameter, Module)):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Parameter, Module)):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Parameter]]:
        found: List[Tuple[str, Parameter]] = []
        for name, child in self._children():
            path = f"{prefix}{name}"
            if isinstance(child, Parameter):
                found.append((path, child))
            else:
                found.extend(child.named_parameters(f"{path}."))
        return found

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def trainable_parameters(self) -> List[Parameter]:
        return [p for p in self.parameters() if p.trainable]

    def num_parameters(self, trainable_only: bool = False) -> int:
        params = self.trainable_parameters() if trainable_only else self.parameters()
        return int(sum(p.value.size for p in params))

    def freeze(self) -> None:
        for param in self.parameters():
            param.freeze()

    def unfreeze(self) -> None:
        for param in self.parameters():
            param.unfreeze()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        for name, param in self.named_parameters():
            if name not in state:
                raise ShapeMismatchError(f"Missing parameter {name} in state")
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != param.value.shape:
                raise ShapeMismatchError(f"{name}: expected {param.value.shape}, got {value.shape}")
            param.value[...] = value


class Linear(Module):
    """``x W + b`` over the last axis."""

    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int, bias: bool = True, zero: bool = False) -> None:
        weight = np.zeros((d_in, d_out)) if zero else xavier_uniform(rng, (d_in, d_out), d_in, d_out)
        self.weight = Parameter(weight, "weight")
        self.bias: Optional[Parameter] = Parameter(np.zeros(d_out), "bias") if bias else None

    @property
    def d_in(self) -> int:
        return self.weight.value.shape[0]

    def __call__(self, g: DiffGraph, x: DiffNode) -> DiffNode:
        if x.shape[-1] != self.d_in:
            raise ShapeMismatchError(f"Linear expects last axis {self.d_in}, got {x.shape}")
        out = g.matmul(x, self.weight)
        return g.add(out, self.bias) if self.bias is not None else out


class LayerNorm(Module):
    def __init__(self, dim: int) -> None:
        self.gain = Parameter(np.ones(dim), "gain")
        self.shift = Parameter(np.zeros(dim), "shift")

    def __call__(self, g: DiffGraph, x: DiffNode) -> DiffNode:
        centered = g.sub(x, g.mean(x, axis=-1, keepdims=True))
        variance = g.mean(g.mul(centered, centered), axis=-1, keepdims=True)
        std = g.sqrt(g.add(variance, g.constant(LAYER_NORM_EPS)))
        return g.add(g.mul(g.div(centered, std), self.gain), self.shift)


class MultiHeadAttention(Module):
    """Scaled dot-product self-attention over the time axis of (B, L, d) inputs."""

    def __init__(self, rng: np.random.Generator, d_model: int, n_heads: int) -> None:
        if d_model % n_heads != 0:
            raise ShapeMismatchError(f"d_model {d_model} not divisible by {n_heads} heads")
        self.n_heads = n_heads
        self.query = Linear(rng, d_model, d_model)
        self.key = Linear(rng, d_model, d_model)
        self.value = Linear(rng, d_model, d_model)
        self.output = Linear(rng, d_model, d_model)

    def _split(self, g: DiffGraph, x: DiffNode) -> DiffNode:
        batch, length, width = x.shape
        heads = g.reshape(x, (batch, length, self.n_heads, width // self.n_heads))
        return g.transpose(heads, (0, 2, 1, 3))

    def __call__(self, g: DiffGraph, x: DiffNode) -> Tuple[DiffNode, np.ndarray]:
        batch, length, width = x.shape
        q = self._split(g, self.query(g, x))
        k = self._split(g, self.key(g, x))
        v = self._split(g, self.value(g, x))
        scores = g.scale(g.matmul(q, g.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(width // self.n_heads))
        weights = g.softmax(scores)
        mixed = g.transpose(g.matmul(weights, v), (0, 2, 1, 3))
        return self.output(g, g.reshape(mixed, (batch, length, width))), weights.value


class EncoderBlock(Module):
    """Post-norm block: LN(x + MHA(x)) then LN(h + FFN(h)) with a GELU feed-forward."""

    def __init__(self, rng: np.random.Generator, d_model: int, n_heads: int, d_ff: int) -> None:
        self.attention = MultiHeadAttention(rng, d_model, n_heads)
        self.norm1 = LayerNorm(d_model)
        self.ff_in = Linear(rng, d_model, d_ff)
        self.ff_out = Linear(rng, d_ff, d_model)
        self.norm2 = LayerNorm(d_model)

    def __call__(self, g: DiffGraph, x: DiffNode) -> Tuple[DiffNode, np.ndarray]:
        attended, weights = self.attention(g, x)
        h = self.norm1(g, g.add(x, attended))
        ff = self.ff_out(g, g.gelu(self.ff_in(g, h)))
        return self.norm2(g, g.add(h, ff)), weights


def sinusoidal_table(length: int, d_model: int) -> np.ndarray:
    """Fixed positional encodings: sin on even columns, cos on odd columns."""
    position = np.arange(length)[:, None]
    rate = np.exp(-math.log(10000.0) * (np.arange(0, d_model, 2) / d_model))
    table = np.zeros((length, d_model))
    table[:, 0::2] = np.sin(position * rate)
    table[:, 1::2] = np.cos(position * rate)[:, : d_model // 2]
    return table
