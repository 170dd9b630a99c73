"""
Majority-vote inference over randomly placed windows.
"""

import logging
from typing import Optional, Sequence

import numpy as np

from src.autodiff.engine import DiffGraph
from src.data.dataset import MtsDataset
from src.data.windows import to_model_input, window_starts
from src.errors import EmptyDatasetError, LabelRangeError
from src.models.backbone import BackboneModel
from src.models.layers import Module

logger = logging.getLogger(__name__)


def predict_windows(
    model: BackboneModel,
    adapters: Sequence[Module],
    windows: np.ndarray,
    batch_size: int = 256,
) -> np.ndarray:
    """Arg-max class of every (L, D) window, evaluated in chunks without gradient tracking."""
    predictions = []
    for start in range(0, len(windows), batch_size):
        g = DiffGraph(track=False)
        logits = model.forward(g, windows[start : start + batch_size], adapters).logits
        predictions.append(np.argmax(logits.value, axis=1))
    return np.concatenate(predictions) if predictions else np.zeros(0, dtype=np.int64)


def majority_vote(predictions: Sequence[int], n_classes: int) -> int:
    """Modal class; ties go to the lowest class index."""
    return int(np.argmax(np.bincount(np.asarray(predictions, dtype=np.int64), minlength=n_classes)))


def vote_starts(length: int, window_len: int, vote_count: int, rng: np.random.Generator) -> np.ndarray:
    """
    Draw ``vote_count`` window starts uniformly at random.

    Without replacement when enough positions exist, with replacement otherwise.
    """
    starts = window_starts(length, window_len, 1)
    replace = starts.size < vote_count
    return rng.choice(starts, size=vote_count, replace=replace)


def predict_with_voting(
    model: BackboneModel,
    adapters: Sequence[Module],
    values: np.ndarray,
    window_len: int,
    vote_count: int,
    seed: int = 0,
    batch_size: int = 256,
) -> int:
    """
    Classify one (D, T) series by voting over ``vote_count`` windows.

    Args:
        model: Backbone
        adapters: Per-block adapters (may be empty)
        values: (D, T) series
        window_len: L
        vote_count: m
        seed: Seed of the window draw
        batch_size: Windows per forward pass

    Returns:
        Predicted class index
    """
    rng = np.random.default_rng(seed)
    starts = vote_starts(values.shape[-1], window_len, vote_count, rng)
    windows = to_model_input(np.stack([values[:, s : s + window_len] for s in starts]))
    return majority_vote(predict_windows(model, adapters, windows, batch_size), model.config.n_classes)


def evaluate(
    model: BackboneModel,
    adapters: Sequence[Module],
    dataset: MtsDataset,
    window_len: int,
    vote_count: int,
    seed: int = 0,
    batch_size: int = 256,
    limit: Optional[int] = None,
) -> float:
    """
    Voting accuracy on a labelled dataset.

    Sample i draws its windows with the seed (seed, i), so repeated calls agree.

    Args:
        model: Backbone
        adapters: Per-block adapters (may be empty)
        dataset: Labelled dataset
        window_len: L (use T for single full-length windows)
        vote_count: m
        seed: Run seed
        batch_size: Windows per forward pass
        limit: Evaluate only the first ``limit`` samples

    Returns:
        Fraction of samples classified correctly
    """
    if len(dataset) == 0:
        raise EmptyDatasetError(f"Domain {dataset.domain_id} has no samples")
    if dataset.labels is None:
        raise LabelRangeError(f"Domain {dataset.domain_id} has no labels to evaluate against")

    count = len(dataset) if limit is None else min(limit, len(dataset))
    windows = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        values = dataset.values[i]
        starts = vote_starts(values.shape[-1], window_len, vote_count, rng)
        windows.append(np.stack([values[:, s : s + window_len] for s in starts]))
    stacked = to_model_input(np.concatenate(windows))
    votes = predict_windows(model, adapters, stacked, batch_size).reshape(count, vote_count)

    n_classes = model.config.n_classes
    predictions = np.array([majority_vote(row, n_classes) for row in votes])
    accuracy = float(np.mean(predictions == dataset.labels[:count]))
    logger.debug(f"Accuracy on {dataset.domain_id}: {accuracy:.4f} (L={window_len}, m={vote_count})")
    return accuracy
