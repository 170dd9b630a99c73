"""
Training objectives: classification, forecasting and layer-wise correlation alignment.

All graph-building losses return scalar DiffNodes on the caller's graph;
``total_loss`` combines plain floats into a LossBreakdown for reporting.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.autodiff.engine import DiffGraph, DiffNode
from src.data.windows import forecast_pairs
from src.errors import BatchTooSmallError, LabelRangeError, NonFinitePartError, ShapeMismatchError
from src.models.backbone import BackboneModel
from src.models.layers import Module
from src.stats.divergence import median_bandwidth

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossWeights:
    lambda_corr: float = 0.5
    lambda_f: float = 0.5

    def __post_init__(self) -> None:
        if self.lambda_corr < 0 or self.lambda_f < 0:
            raise ValueError(f"Loss weights must be non-negative: {self}")


@dataclass(frozen=True)
class LossBreakdown:
    """One step's loss parts; ``total = l_c + lambda_corr * l_corr + lambda_f * l_f``."""

    l_c: float
    l_f: float
    l_corr: float
    total: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def cross_entropy(g: DiffGraph, logits: DiffNode, labels: np.ndarray) -> DiffNode:
    """Mean cross-entropy of (B, C) logits against integer labels."""
    labels = np.asarray(labels, dtype=np.int64)
    batch, n_classes = logits.shape
    if labels.shape != (batch,):
        raise ShapeMismatchError(f"Expected {batch} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise LabelRangeError(f"Labels outside [0, {n_classes})")
    one_hot = np.zeros((batch, n_classes))
    one_hot[np.arange(batch), labels] = 1.0
    picked = g.sum(g.mul(g.log_softmax(logits), g.constant(one_hot)))
    return g.scale(picked, -1.0 / batch)


def mean_absolute_error(g: DiffGraph, prediction: DiffNode, target: np.ndarray) -> DiffNode:
    if prediction.shape != np.shape(target):
        raise ShapeMismatchError(f"Prediction {prediction.shape} vs target {np.shape(target)}")
    return g.mean(g.abs(g.sub(prediction, g.constant(target))))


def classification_loss(
    g: DiffGraph,
    model: BackboneModel,
    adapters: Sequence[Module],
    windows: np.ndarray,
    labels: np.ndarray,
) -> DiffNode:
    """
    Mean cross-entropy of the adapter-equipped network on labelled windows.

    Args:
        g: Graph to build on
        model: Backbone with g_c
        adapters: Per-block adapters (may be empty)
        windows: (B, L, D) windows
        labels: (B,) class indices

    Returns:
        Scalar loss node
    """
    return cross_entropy(g, model.forward(g, windows, adapters).logits, labels)


def forecasting_loss(
    g: DiffGraph,
    model: BackboneModel,
    adapters: Sequence[Module],
    series: np.ndarray,
    window_len: int,
    stride: int = 1,
) -> DiffNode:
    """
    MAE of g_f predicting each window's successor over all pairs of all series.

    Args:
        g: Graph to build on
        model: Backbone with g_f
        adapters: Per-block adapters (may be empty)
        series: Unlabelled (n, D, T) series with T >= 2L
        window_len: L
        stride: Step between pair starts

    Returns:
        Scalar loss node
    """
    history, target = forecast_pairs(np.asarray(series, dtype=np.float64), window_len, stride)
    result = model.forward(g, history, adapters)
    return mean_absolute_error(g, model.forecast(g, result), target)


def correlation_vectors(g: DiffGraph, hidden: DiffNode) -> DiffNode:
    """Per-window ``vec(H H^T / ||H||_F^2)`` with H the (channels, time) view of a (B, L, d) hidden state."""
    batch, _, width = hidden.shape
    channels = g.transpose(hidden, (0, 2, 1))
    gram = g.matmul(channels, hidden)
    norm_sq = g.frobenius_sq(hidden, axis=(1, 2), keepdims=True)
    return g.reshape(g.div(gram, norm_sq), (batch, width * width))


def mmd_squared_node(g: DiffGraph, xs: DiffNode, ys: DiffNode, sigma: Optional[float] = None) -> DiffNode:
    """
    Biased Gaussian-kernel MMD^2 between the rows of two (n, k) nodes, clamped at zero.

    Without ``sigma`` the median heuristic is evaluated on the current values and
    treated as a constant.
    """
    if sigma is None:
        sigma = median_bandwidth(np.vstack([xs.value, ys.value]))
    factor = -1.0 / (2.0 * sigma * sigma)

    def kernel_mean(a: DiffNode, b: DiffNode) -> DiffNode:
        return g.mean(g.exp(g.scale(g.pairwise_sqdist(a, b), factor)))

    value = g.sub(g.add(kernel_mean(xs, xs), kernel_mean(ys, ys)), g.scale(kernel_mean(xs, ys), 2.0))
    return g.relu(value)


def _check_layers(source_hidden: Sequence[DiffNode], target_hidden: Sequence[DiffNode]) -> None:
    if len(source_hidden) != len(target_hidden):
        raise ShapeMismatchError(f"Layer counts differ: {len(source_hidden)} vs {len(target_hidden)}")
    for k, (hs, ht) in enumerate(zip(source_hidden, target_hidden)):
        if hs.shape[0] < 2 or ht.shape[0] < 2:
            raise BatchTooSmallError(f"Layer {k}: need >= 2 windows per domain, got {hs.shape[0]} and {ht.shape[0]}")


def correlation_alignment_loss(
    g: DiffGraph,
    source_hidden: Sequence[DiffNode],
    target_hidden: Sequence[DiffNode],
) -> DiffNode:
    """
    Sum over layers of the MMD^2 between source and target correlation vectors.

    Callers pass the source hiddens from before each adapter and the target
    hiddens from after it. The bandwidth is re-estimated per layer on every call.

    Args:
        g: Graph to build on
        source_hidden: K nodes of shape (B_s, L, d)
        target_hidden: K nodes of shape (B_t, L, d)

    Returns:
        Scalar loss node
    """
    _check_layers(source_hidden, target_hidden)
    terms: List[DiffNode] = [
        mmd_squared_node(g, correlation_vectors(g, hs), correlation_vectors(g, ht))
        for hs, ht in zip(source_hidden, target_hidden)
    ]
    total = terms[0]
    for term in terms[1:]:
        total = g.add(total, term)
    return total


def _pooled_covariance(g: DiffGraph, hidden: DiffNode) -> DiffNode:
    pooled = g.mean(hidden, axis=1)
    centered = g.sub(pooled, g.mean(pooled, axis=0, keepdims=True))
    return g.scale(g.matmul(g.transpose(centered), centered), 1.0 / (pooled.shape[0] - 1))


def coral_alignment_loss(
    g: DiffGraph,
    source_hidden: Sequence[DiffNode],
    target_hidden: Sequence[DiffNode],
) -> DiffNode:
    """
    Sum over layers of ``||C_s - C_t||_F^2 / (4 d^2)`` on time-pooled hidden features.

    Args:
        g: Graph to build on
        source_hidden: K nodes of shape (B_s, L, d)
        target_hidden: K nodes of shape (B_t, L, d)

    Returns:
        Scalar loss node
    """
    _check_layers(source_hidden, target_hidden)
    total: Optional[DiffNode] = None
    for hs, ht in zip(source_hidden, target_hidden):
        width = hs.shape[-1]
        diff = g.sub(_pooled_covariance(g, hs), _pooled_covariance(g, ht))
        term = g.scale(g.frobenius_sq(diff), 1.0 / (4.0 * width * width))
        total = term if total is None else g.add(total, term)
    return total


def total_loss(l_c: float, l_f: float, l_corr: float, weights: LossWeights) -> LossBreakdown:
    """
    Weighted objective ``l_c + lambda_corr * l_corr + lambda_f * l_f``.

    Args:
        l_c: Classification loss
        l_f: Forecasting loss
        l_corr: Correlation alignment loss
        weights: Loss weights

    Returns:
        LossBreakdown
    """
    parts = {"l_c": l_c, "l_f": l_f, "l_corr": l_corr}
    for name, value in parts.items():
        if not math.isfinite(value):
            raise NonFinitePartError(f"Loss part {name} is not finite: {value}")
    total = l_c + weights.lambda_corr * l_corr + weights.lambda_f * l_f
    return LossBreakdown(float(l_c), float(l_f), float(l_corr), float(total))
