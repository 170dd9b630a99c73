"""
Sliced Wasserstein distances between sample sets and between labelled domains.
"""

import logging
from typing import Optional

import numpy as np

from src.data.dataset import MtsDataset
from src.errors import NoSharedLabelsError, ShapeMismatchError
from src.stats.divergence import Vectors, as_matrix

logger = logging.getLogger(__name__)

QUANTILE_LEVELS = (np.arange(100) + 0.5) / 100.0


def sliced_wasserstein(xs: Vectors, ys: Vectors, projections: int = 64, seed: int = 0) -> float:
    """
    Mean 1-D Wasserstein-1 distance over seeded random unit directions.

    Each projected pair is compared on 100 matched quantiles, so the two sets
    may have different sizes.

    Args:
        xs: First sample set (n, d)
        ys: Second sample set (m, d)
        projections: Number of random directions
        seed: Seed of the direction generator

    Returns:
        Non-negative distance
    """
    x = as_matrix(xs, "xs")
    y = as_matrix(ys, "ys")
    if x.shape[1] != y.shape[1]:
        raise ShapeMismatchError(f"Dimensions differ: {x.shape[1]} vs {y.shape[1]}")

    rng = np.random.default_rng(seed)
    directions = rng.normal(size=(x.shape[1], projections))
    directions /= np.linalg.norm(directions, axis=0, keepdims=True)

    qx = np.quantile(x @ directions, QUANTILE_LEVELS, axis=0, method="linear")
    qy = np.quantile(y @ directions, QUANTILE_LEVELS, axis=0, method="linear")
    return float(np.abs(qx - qy).mean())


def _zscore(values: np.ndarray) -> np.ndarray:
    mean = values.mean(axis=2, keepdims=True)
    std = values.std(axis=2, keepdims=True)
    return (values - mean) / np.where(std > 0, std, 1.0)


def domain_pair_distance(
    source: MtsDataset,
    target: MtsDataset,
    projections: int = 64,
    seed: int = 0,
    missing_label_penalty: Optional[float] = None,
    normalize: bool = False,
) -> float:
    """
    Sum over shared labels of the class-conditional sliced Wasserstein distance.

    Every class uses the same projection seed, so the total is additive over
    classes and symmetric in its arguments.

    Args:
        source: Labelled domain
        target: Labelled domain of the same shape
        projections: Directions per class
        seed: Projection seed
        missing_label_penalty: Added per label present in one domain only; None skips them
        normalize: Z-score every variable of every sample over time first

    Returns:
        Non-negative distance
    """
    if source.values.shape[1:] != target.values.shape[1:]:
        raise ShapeMismatchError(
            f"Domain shapes differ: {source.values.shape[1:]} vs {target.values.shape[1:]}"
        )
    source_labels = set(source.label_set())
    target_labels = set(target.label_set())
    shared = sorted(source_labels & target_labels)
    if not shared:
        raise NoSharedLabelsError(f"{source.domain_id} and {target.domain_id} share no labels")

    unmatched = sorted(source_labels ^ target_labels)
    total = 0.0
    if unmatched:
        if missing_label_penalty is None:
            logger.warning(
                f"Labels {unmatched} appear in only one of {source.domain_id}/{target.domain_id}; skipped"
            )
        else:
            total += missing_label_penalty * len(unmatched)

    for label in shared:
        xs = source.class_values(label)
        ys = target.class_values(label)
        if normalize:
            xs, ys = _zscore(xs), _zscore(ys)
        total += sliced_wasserstein(
            xs.reshape(xs.shape[0], -1), ys.reshape(ys.shape[0], -1), projections, seed
        )
    return total
