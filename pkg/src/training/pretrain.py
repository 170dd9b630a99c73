"""
Supervised pretraining of the backbone on labelled source windows.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from src.autodiff.engine import DiffGraph, backpropagate
from src.autodiff.optim import AdamState, adam_step
from src.data.dataset import MtsDataset
from src.data.windows import slice_windows, to_model_input
from src.errors import EmptyDatasetError, LabelRangeError
from src.models.backbone import BackboneModel
from src.training.losses import cross_entropy

logger = logging.getLogger(__name__)


@dataclass
class PretrainResult:
    """Mean training loss per epoch."""

    loss_curve: List[float] = field(default_factory=list)


def labelled_windows(dataset: MtsDataset, window_len: int, stride: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    All windows of a labelled dataset with their series labels.

    Returns:
        (windows of shape (N, L, D), labels of shape (N,))
    """
    if dataset.labels is None:
        raise LabelRangeError(f"Domain {dataset.domain_id} has no labels")
    windows = []
    labels = []
    for values, label in zip(dataset.values, dataset.labels):
        _, cut = slice_windows(values, window_len, stride)
        windows.append(to_model_input(cut))
        labels.append(np.full(cut.shape[0], label))
    if not windows:
        raise EmptyDatasetError(f"Domain {dataset.domain_id} has no samples")
    return np.concatenate(windows), np.concatenate(labels)


def pretrain_source(
    model: BackboneModel,
    windows: np.ndarray,
    labels: np.ndarray,
    epochs: int = 10,
    lr: float = 1e-3,
    batch_size: int = 32,
    seed: int = 0,
) -> PretrainResult:
    """
    Train embedding, blocks and g_c with cross-entropy.

    Args:
        model: Backbone to train in place
        windows: (N, L, D) labelled source windows
        labels: (N,) labels
        epochs: Passes over the windows; 0 leaves the model untouched
        lr: Adam learning rate
        batch_size: Windows per step
        seed: Shuffling seed

    Returns:
        PretrainResult with the per-epoch loss curve
    """
    if len(windows) == 0:
        raise EmptyDatasetError("No source windows to pretrain on")

    params = [p for module in [model.embedding, *model.blocks, model.classifier] for p in module.parameters()]
    for param in params:
        param.unfreeze()
    state = AdamState.create(params)
    rng = np.random.default_rng(seed)
    result = PretrainResult()

    for epoch in range(epochs):
        order = rng.permutation(len(windows))
        losses = []
        for start in range(0, len(order), batch_size):
            batch = order[start : start + batch_size]
            g = DiffGraph(seed)
            loss = cross_entropy(g, model.forward(g, windows[batch]).logits, labels[batch])
            backpropagate(g, loss)
            adam_step(params, state, lr)
            losses.append(loss.item())
        result.loss_curve.append(float(np.mean(losses)))
        logger.info(f"Pretrain epoch {epoch + 1}/{epochs}: loss {result.loss_curve[-1]:.4f}")

    return result
