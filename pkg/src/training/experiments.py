"""
End-to-end sessions and studies built on the training primitives.

Every session owns its model, adapters and random generators, so several
sessions can run side by side in separate processes.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
import pandas as pd

from src.autodiff.engine import DiffGraph, DiffNode, Parameter, backpropagate
from src.autodiff.optim import AdamState, adam_step
from src.data.dataset import MtsDataset
from src.data.synthetic import SyntheticDomainSpec, generate_domain
from src.models.adapters import build_adapters
from src.models.backbone import BackboneConfig, BackboneModel
from src.models.cats import GatLayer, count_parameters, tdc_parameters
from src.models.layers import Module, xavier_uniform
from src.stats.hypothesis import correlation_shift_test
from src.training.adapt import adapt
from src.training.config import TrainConfig
from src.training.pretrain import PretrainResult, labelled_windows, pretrain_source
from src.training.report import EvalReport
from src.training.voting import evaluate

logger = logging.getLogger(__name__)

T = TypeVar("T")

GAT_NODES = 8
GAT_FEATURES = 16
GAT_INPUTS = 64


# Sessions -------------------------------------------------------------------


def make_domain_pair(settings: Any, seed: int) -> Tuple[MtsDataset, MtsDataset]:
    """
    Source at ``theta`` and target at ``target_theta``, sharing the class templates.

    The target is drawn with ``seed + 1`` so the two domains never share noise.
    """
    n_per_class = settings["n_per_class"]
    source = generate_domain(SyntheticDomainSpec.from_settings(settings, seed=seed), n_per_class, "source")
    target_spec = SyntheticDomainSpec.from_settings(settings, theta=settings["target_theta"], seed=seed + 1)
    return source, generate_domain(target_spec, n_per_class, "target")


def pretrain_model(settings: Any, source: MtsDataset, seed: int) -> Tuple[BackboneModel, PretrainResult]:
    """Build a backbone for the source domain and pretrain it on its L-windows."""
    config = TrainConfig.from_settings(settings).with_changes(seed=seed)
    backbone = BackboneConfig.from_settings(settings, source.n_vars, source.n_classes)
    model = BackboneModel(backbone, seed)
    windows, labels = labelled_windows(source, config.window_len, config.stride)
    logger.info(f"Pretraining on {len(windows)} source windows for {config.pretrain_epochs} epochs")
    result = pretrain_source(
        model, windows, labels, config.pretrain_epochs, config.pretrain_lr, config.batch_size, seed
    )
    return model, result


def adapt_and_report(
    settings: Any,
    model: BackboneModel,
    source: MtsDataset,
    target: MtsDataset,
    seed: int,
    command: str = "adapt",
    config_echo: Optional[Dict[str, Any]] = None,
) -> Tuple[List[Module], EvalReport]:
    """
    Adapt a pretrained backbone to the target and score it.

    The target's labels are used for scoring only; ``adapt`` sees its values.

    Returns:
        (adapters, report)
    """
    config = TrainConfig.from_settings(settings).with_changes(seed=seed)
    shift = correlation_shift_test(source, target)
    baseline = evaluate(model, [], target, config.window_len, config.vote_count, seed, config.eval_batch_size)
    logger.info(f"Frozen baseline target accuracy: {baseline:.4f}")

    adapters = build_adapters(config.adapter_spec(), model.config, seed)
    result = adapt(model, adapters, source, target.unlabelled(), config)

    def score(dataset: MtsDataset) -> float:
        return evaluate(model, adapters, dataset, config.window_len, config.vote_count, seed, config.eval_batch_size)

    counts = count_parameters(model.config, config.kernel_size, config.adapter, config.adapter_rank)
    report = EvalReport(
        command=command,
        seed=seed,
        source_accuracy=score(source),
        target_accuracy=score(target),
        baseline_accuracy=baseline,
        history=result.history,
        shift_test=shift,
        parameter_counts=counts.to_dict(),
        config=dict(config_echo or {}),
    )
    logger.info(f"Target accuracy {report.target_accuracy:.4f} (baseline {baseline:.4f})")
    return adapters, report


def run_pipeline(settings: Any, seed: int, command: str = "pipeline") -> EvalReport:
    """Generate the synthetic pair, pretrain on the source, adapt and evaluate."""
    source, target = make_domain_pair(settings, seed)
    model, pretrained = pretrain_model(settings, source, seed)
    _, report = adapt_and_report(settings, model, source, target, seed, command, _echo(settings))
    report.extra["pretrain_loss"] = pretrained.loss_curve
    return report


def run_seeds(fn: Callable[[int], T], seeds: Sequence[int], workers: int = 1) -> List[T]:
    """
    Run ``fn(seed)`` for every seed and return the results in seed order.

    With ``workers > 1`` sessions run in a process pool; ``fn`` must then be picklable.
    """
    if workers <= 1 or len(seeds) <= 1:
        return [fn(seed) for seed in seeds]
    with ProcessPoolExecutor(max_workers=min(workers, len(seeds))) as pool:
        return list(pool.map(fn, seeds))


def summarize(values: Sequence[float]) -> Dict[str, float]:
    array = np.asarray(values, dtype=np.float64)
    return {"mean": float(array.mean()), "std": float(array.std()), "n": int(array.size)}


def _echo(settings: Any) -> Dict[str, Any]:
    return settings.echo() if hasattr(settings, "echo") else dict(settings)


# Ablation -------------------------------------------------------------------


@dataclass(frozen=True)
class AblationRung:
    rung: int
    name: str
    target_accuracy: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def run_ablation(settings: Any, seed: int) -> List[AblationRung]:
    """
    Target accuracy as the vanilla encoder is turned step by step into the full method.

    Rungs: (1) no adapter, (2) bottleneck adapter trained with L_c, (3) plus the
    correlation loss, (4) CATS instead of the bottleneck adapter, (5) window
    slicing, (6) plus the forecasting loss, (7) plus majority voting. Rungs 1-4
    classify each series as one full-length window; rungs 5-6 use one window of
    length L; rung 7 votes over ``vote_count`` windows. All rungs share one
    backbone pretrained on L-windows.

    Returns:
        Seven rungs in order
    """
    source, target = make_domain_pair(settings, seed)
    model, _ = pretrain_model(settings, source, seed)
    pretrained = model.state_dict()
    base = TrainConfig.from_settings(settings).with_changes(seed=seed)
    full = source.length
    full_length = base.with_changes(window_len=full, lambda_f=0.0)
    windowed = base.with_changes(adapter="cats")

    def session(config: Optional[TrainConfig], eval_len: int, votes: int) -> Tuple[List[Module], float]:
        model.load_state_dict(pretrained)
        adapters: List[Module] = []
        if config is not None:
            adapters = build_adapters(config.adapter_spec(), model.config, seed)
            adapt(model, adapters, source, target.unlabelled(), config)
        accuracy = evaluate(model, adapters, target, eval_len, votes, seed, base.eval_batch_size)
        return adapters, accuracy

    rungs: List[AblationRung] = []

    def record(name: str, accuracy: float) -> None:
        rungs.append(AblationRung(len(rungs) + 1, name, accuracy))
        logger.info(f"Ablation rung {len(rungs)} ({name}): {accuracy:.4f}")

    record("no adapter", session(None, full, 1)[1])
    record("bottleneck adapter", session(full_length.with_changes(adapter="linear", lambda_corr=0.0), full, 1)[1])
    record("+ correlation loss", session(full_length.with_changes(adapter="linear"), full, 1)[1])
    record("CATS adapter", session(full_length.with_changes(adapter="cats"), full, 1)[1])
    record("+ window slicing", session(windowed.with_changes(lambda_f=0.0), base.window_len, 1)[1])
    adapters, accuracy = session(windowed, base.window_len, 1)
    record("+ forecasting loss", accuracy)
    record(
        "+ majority voting",
        evaluate(model, adapters, target, base.window_len, base.vote_count, seed, base.eval_batch_size),
    )
    return rungs


# Attention approximation ------------------------------------------------------


class PairAttentionRegressor(Module):
    """
    A single ``GatLayer`` of feature width F regressing ``A* X`` for a fixed node mixing A*.

    Row i of the attention is read from the GAT run over the pair features
    ``h_ij = gelu(q_i + k_j)``, where the trainable lift W holds one width-F vector
    per query node (``q``) and per key node (``k``). Values pass through a trainable
    square map initialised to the identity.
    """

    def __init__(self, n_nodes: int, width: int, n_features: int, rng: np.random.Generator) -> None:
        self.n_nodes = n_nodes
        self.query = Parameter(xavier_uniform(rng, (n_nodes, width), 2 * n_nodes, width), "query")
        self.key = Parameter(xavier_uniform(rng, (n_nodes, width), 2 * n_nodes, width), "key")
        self.gat = GatLayer(width, rng)
        self.value = Parameter(np.eye(n_features), "value")

    @property
    def width(self) -> int:
        return self.gat.features

    def pair_features(self, g: DiffGraph) -> DiffNode:
        n, w = self.n_nodes, self.width
        rows = g.reshape(self.query, (n, 1, w))
        cols = g.reshape(self.key, (1, n, w))
        return g.gelu(g.add(rows, cols))

    def attention(self, g: DiffGraph) -> DiffNode:
        """(N, N) row-stochastic matrix; row i is row i of the GAT run for query node i."""
        weights = self.gat.attention_weights(g, self.pair_features(g))
        own = np.arange(self.n_nodes)
        return g.slice(weights, (own, own))

    def __call__(self, g: DiffGraph, inputs: DiffNode) -> DiffNode:
        return g.matmul(g.matmul(self.attention(g), inputs), self.value)

    def widened(self, width: int, rng: np.random.Generator) -> "PairAttentionRegressor":
        """
        Copy of this regressor at a larger width computing exactly the same function.

        The new lift rows and the new GAT weight rows are random. The new attention
        entries and the weight block feeding old outputs from new features are zero,
        so the scores are unchanged while the zeroed entries still get gradient through the random ones.
        """
        old = self.width
        if width < old:
            raise ValueError(f"Cannot narrow a width-{old} regressor to {width}")
        wider = PairAttentionRegressor(self.n_nodes, width, self.value.value.shape[0], rng)
        wider.query.value[:, :old] = self.query.value
        wider.key.value[:, :old] = self.key.value
        weight = wider.gat.weight.value
        weight[:old, :old] = self.gat.weight.value
        weight[:old, old:] = 0.0
        attn = np.zeros(2 * width)
        attn[:old] = self.gat.attn.value[:old]
        attn[width : width + old] = self.gat.attn.value[old:]
        wider.gat.attn.value[...] = attn
        wider.value.value[...] = self.value.value
        return wider


@dataclass
class AttentionTask:
    """Fixed node mixing, inputs and targets shared by every width of one study."""

    mixing: np.ndarray
    inputs: np.ndarray
    targets: np.ndarray

    @classmethod
    def draw(cls, seed: int = 0) -> "AttentionTask":
        rng = np.random.default_rng(seed)
        logits = rng.standard_normal((GAT_NODES, GAT_NODES))
        mixing = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        inputs = rng.standard_normal((GAT_INPUTS, GAT_NODES, GAT_FEATURES))
        return cls(mixing, inputs, mixing @ inputs)


def approximation_error(model: PairAttentionRegressor, inputs: np.ndarray, targets: np.ndarray) -> float:
    g = DiffGraph(track=False)
    prediction = model(g, g.constant(inputs)).value
    return float(np.linalg.norm(prediction - targets) / np.linalg.norm(targets))


def fit_attention(
    model: PairAttentionRegressor, task: AttentionTask, steps: int, lr: float, best: float = np.inf
) -> float:
    """
    Train ``model`` on ``task`` with Adam on the MSE and keep its best parameters.

    Args:
        model: Regressor, updated in place
        task: Fixed inputs and targets
        steps: Adam steps
        lr: Learning rate
        best: Error the model already reaches on entry, when known

    Returns:
        Lowest relative Frobenius error ``||A X W - A* X||_F / ||A* X||_F`` seen during training
    """
    params = model.parameters()
    state = AdamState.create(params)
    scale = np.sqrt(task.targets.size) / np.linalg.norm(task.targets)
    snapshot = [p.value.copy() for p in params]
    for _ in range(steps):
        g = DiffGraph()
        diff = g.sub(model(g, g.constant(task.inputs)), g.constant(task.targets))
        loss = g.mean(g.mul(diff, diff))
        error = float(np.sqrt(loss.value) * scale)
        if error < best:
            best = error
            snapshot = [p.value.copy() for p in params]
        backpropagate(g, loss)
        adam_step(params, state, lr)
    final = approximation_error(model, task.inputs, task.targets)
    if final < best:
        return final
    for param, value in zip(params, snapshot):
        param.value = value
    return best


def fit_fixed_attention(width: int, steps: int, lr: float, seed: int = 0) -> float:
    """Relative error of a single width-``width`` regressor trained from scratch."""
    task = AttentionTask.draw(seed)
    model = PairAttentionRegressor(GAT_NODES, width, GAT_FEATURES, np.random.default_rng(seed + 1))
    return fit_attention(model, task, steps, lr)


def run_gat_approx_study(settings: Any, seed: Optional[int] = None) -> pd.DataFrame:
    """
    Width against relative error for every ``gat_widths`` entry, narrowest first.

    Each width starts from the previous width's fit, widened without changing its
    function, so the error column never increases.
    """
    seed = settings["seed"] if seed is None else seed
    task = AttentionTask.draw(seed)
    rng = np.random.default_rng(seed + 1)
    rows = []
    model: Optional[PairAttentionRegressor] = None
    error = np.inf
    for width in sorted(set(settings["gat_widths"])):
        if model is None:
            model = PairAttentionRegressor(GAT_NODES, width, GAT_FEATURES, rng)
        else:
            model = model.widened(width, rng)
        error = fit_attention(model, task, settings["gat_steps"], settings["gat_lr"], error)
        logger.info(f"GAT width {width}: relative error {error:.4f}")
        rows.append({"width": width, "relative_error": error})
    return pd.DataFrame(rows, columns=["width", "relative_error"])


# Parameter scaling ------------------------------------------------------------


def run_scaling_study(settings: Any) -> pd.DataFrame:
    """
    Closed-form parameter counts over the d_model and window-length sweeps.

    The feed-forward width follows ``d_ff = 2 * d_model`` at every point.
    """
    d_models, window_lens = settings["scaling_d_models"], settings["scaling_window_lens"]
    if not d_models or not window_lens:
        raise ValueError("Scaling sweeps must be non-empty")
    rows = []
    for d_model in d_models:
        for window_len in window_lens:
            config = BackboneConfig(
                n_vars=settings["n_vars"],
                n_classes=settings["n_classes"],
                d_model=d_model,
                n_blocks=settings["n_blocks"],
                n_heads=settings["n_heads"],
                d_ff=2 * d_model,
                window_len=window_len,
            )
            counts = count_parameters(config, settings["kernel_size"], "cats")
            rows.append(
                {
                    "d_model": d_model,
                    "window_len": window_len,
                    "adapter_params": counts.adapter,
                    "backbone_params": counts.backbone,
                    "ratio": counts.ratio,
                    "tdc_params": 2 * config.n_blocks * tdc_parameters(d_model, settings["kernel_size"]),
                    "attention_params": config.n_blocks * 4 * (d_model * d_model + d_model),
                }
            )
    return pd.DataFrame(rows)


# Supervised adapter comparison ------------------------------------------------


def run_adapter_comparison(settings: Any, seed: int) -> pd.DataFrame:
    """
    Fit each adapter kind on labelled target data and track held-out target accuracy.

    This checks representation capacity rather than adaptation: the target's
    first half trains the adapters with L_c only, the second half is scored at
    every ``eval_every`` steps.

    Returns:
        Table with columns adapter, step, target_accuracy
    """
    source, target = make_domain_pair(settings, seed)
    model, _ = pretrain_model(settings, source, seed)
    pretrained = model.state_dict()
    half = len(target) // 2
    train = MtsDataset(target.values[:half], target.labels[:half], "target-train", target.n_classes)
    held_out = MtsDataset(target.values[half:], target.labels[half:], "target-test", target.n_classes)
    base = TrainConfig.from_settings(settings).with_changes(seed=seed, lambda_corr=0.0, lambda_f=0.0)

    rows: List[Dict[str, Any]] = []
    for kind in ("linear", "cats"):
        model.load_state_dict(pretrained)
        config = base.with_changes(adapter=kind)

        def checkpoint(step: int, adapters: Sequence[Module], kind: str = kind) -> None:
            accuracy = evaluate(
                model, adapters, held_out, config.window_len, config.vote_count, seed, config.eval_batch_size
            )
            rows.append({"adapter": kind, "step": step, "target_accuracy": accuracy})

        adapters = build_adapters(config.adapter_spec(), model.config, seed)
        checkpoint(0, adapters)
        adapt(model, adapters, train, train.unlabelled(), config, on_checkpoint=checkpoint)
        logger.info(f"Adapter {kind}: final held-out accuracy {rows[-1]['target_accuracy']:.4f}")
    return pd.DataFrame(rows, columns=["adapter", "step", "target_accuracy"])
