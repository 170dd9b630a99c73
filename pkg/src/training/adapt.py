"""
Unsupervised adaptation: train adapters and g_f on a frozen backbone.

The target domain enters as a bare (n, D, T) value array, so target labels
cannot reach this module.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from src.autodiff.engine import DiffGraph, DiffNode, backpropagate
from src.autodiff.optim import AdamState, adam_step
from src.data.dataset import MtsDataset
from src.data.windows import sample_forecast_pairs, sample_windows
from src.errors import LabelRangeError, ShapeMismatchError
from src.models.adapters import adapter_parameters
from src.models.backbone import BackboneModel
from src.models.layers import Module
from src.training.config import TrainConfig
from src.training.losses import (
    LossBreakdown,
    LossWeights,
    coral_alignment_loss,
    correlation_alignment_loss,
    cross_entropy,
    mean_absolute_error,
    total_loss,
)

logger = logging.getLogger(__name__)

Checkpoint = Callable[[int, Sequence[Module]], None]


@dataclass
class AdaptResult:
    """Adapted modules and the per-step loss trajectory."""

    adapters: List[Module]
    history: List[LossBreakdown] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.history)


def adapt(
    model: BackboneModel,
    adapters: Sequence[Module],
    source: MtsDataset,
    target_values: np.ndarray,
    config: TrainConfig,
    on_checkpoint: Optional[Checkpoint] = None,
) -> AdaptResult:
    """
    Minimise ``L_c + lambda_corr * L_corr + lambda_f * L_f`` over adapters and g_f.

    Each step samples independent source and target window batches. Source
    windows give the classification loss and the pre-adapter hiddens; target
    history windows give the post-adapter hiddens and, through g_f, the
    forecast of the adjacent window. With both weights at zero the target is
    never forwarded.

    Args:
        model: Pretrained backbone; frozen by this call
        adapters: One adapter per block, or empty
        source: Labelled source domain
        target_values: Unlabelled target series, (n, D, T)
        config: Training settings
        on_checkpoint: Called with (step, adapters) every ``eval_every`` steps

    Returns:
        AdaptResult with the loss history
    """
    if source.labels is None:
        raise LabelRangeError(f"Source domain {source.domain_id} must be labelled")
    target_values = np.asarray(target_values, dtype=np.float64)
    if target_values.ndim != 3 or target_values.shape[1] != source.n_vars:
        raise ShapeMismatchError(f"Target values must be (n, {source.n_vars}, T), got {target_values.shape}")

    model.freeze_backbone()
    params = [*adapter_parameters(list(adapters)), *model.forecaster.parameters()]
    for param in params:
        param.unfreeze()
    state = AdamState.create(params)
    weights = LossWeights(config.lambda_corr, config.lambda_f)
    use_target = weights.lambda_corr > 0 or weights.lambda_f > 0
    alignment = coral_alignment_loss if config.alignment_loss == "coral" else correlation_alignment_loss
    rng = np.random.default_rng(config.seed)
    result = AdaptResult(list(adapters))

    for step in range(1, config.adapt_steps + 1):
        g = DiffGraph(config.seed + step)
        series, windows = sample_windows(source.values, config.window_len, config.batch_size, rng, config.stride)
        source_pass = model.forward(g, windows, adapters)
        objective: DiffNode = cross_entropy(g, source_pass.logits, source.labels[series])
        l_c = objective.item()
        l_f = l_corr = 0.0

        if use_target:
            if weights.lambda_f > 0:
                history, following = sample_forecast_pairs(
                    target_values, config.window_len, config.batch_size, rng, config.stride
                )
            else:
                _, history = sample_windows(target_values, config.window_len, config.batch_size, rng, config.stride)
            target_pass = model.forward(g, history, adapters)
            if weights.lambda_corr > 0:
                corr_node = alignment(g, source_pass.pre_adapter, target_pass.post_adapter)
                l_corr = corr_node.item()
                objective = g.add(objective, g.scale(corr_node, weights.lambda_corr))
            if weights.lambda_f > 0:
                forecast_node = mean_absolute_error(g, model.forecast(g, target_pass), following)
                l_f = forecast_node.item()
                objective = g.add(objective, g.scale(forecast_node, weights.lambda_f))

        breakdown = total_loss(l_c, l_f, l_corr, weights)
        backpropagate(g, objective)
        adam_step(params, state, config.lr)
        result.history.append(breakdown)
        logger.debug(f"Adapt step {step}: {breakdown}")

        if step % config.eval_every == 0:
            logger.info(
                f"Adapt step {step}/{config.adapt_steps}: total {breakdown.total:.4f} "
                f"(l_c {breakdown.l_c:.4f}, l_corr {breakdown.l_corr:.4f}, l_f {breakdown.l_f:.4f})"
            )
            if on_checkpoint is not None:
                on_checkpoint(step, adapters)

    return result
