"""Report storage: JSON documents plus CSV tables named after config hash and seed."""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd
from colorama import Fore, Style

from src.stats.hypothesis import HypothesisResult
from src.training.losses import LossBreakdown

logger = logging.getLogger(__name__)

LOSS_COLUMNS = ["step", "l_c", "l_f", "l_corr", "total"]


@dataclass
class EvalReport:
    """Outcome of one training session."""

    command: str
    seed: int
    source_accuracy: Optional[float] = None
    target_accuracy: Optional[float] = None
    baseline_accuracy: Optional[float] = None
    history: List[LossBreakdown] = field(default_factory=list)
    shift_test: Optional[HypothesisResult] = None
    parameter_counts: Dict[str, float] = field(default_factory=dict)
    config: Dict[str, Any] = field(default_factory=dict)
    extra: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("source_accuracy", "target_accuracy", "baseline_accuracy"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")

    def loss_table(self) -> pd.DataFrame:
        rows = [{"step": step, **part.to_dict()} for step, part in enumerate(self.history, start=1)]
        return pd.DataFrame(rows, columns=LOSS_COLUMNS)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "seed": self.seed,
            "source_accuracy": self.source_accuracy,
            "target_accuracy": self.target_accuracy,
            "baseline_accuracy": self.baseline_accuracy,
            "steps": len(self.history),
            "final_loss": self.history[-1].to_dict() if self.history else None,
            "shift_test": self.shift_test.to_dict() if self.shift_test is not None else None,
            "parameter_counts": self.parameter_counts,
            "config": self.config,
            "extra": self.extra,
        }


def report_stem(command: str, config_hash: str, seed: int) -> str:
    return f"{command}-{config_hash}-s{seed}"


def to_plain(value: Any) -> Any:
    """Convert numpy scalars and arrays so ``json`` can encode them."""
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_json(payload: Dict[str, Any], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_plain(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path


def write_table(table: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False, float_format="%.10g")
    logger.info(f"Wrote {path} ({len(table)} rows)")
    return path


def write_report(report: EvalReport, output_dir: Union[str, Path], config_hash: str) -> List[Path]:
    """
    Write ``<command>-<hash>-s<seed>.json`` and, when a loss history exists, the matching ``.csv``.

    Args:
        report: Report to persist
        output_dir: Target directory (created when missing)
        config_hash: Hash of the effective configuration

    Returns:
        Paths written
    """
    stem = report_stem(report.command, config_hash, report.seed)
    base = Path(output_dir)
    written = [write_json(report.to_dict(), base / f"{stem}.json")]
    if report.history:
        written.append(write_table(report.loss_table(), base / f"{stem}.csv"))
    return written


def read_report(path: Union[str, Path]) -> Dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _format_value(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def format_report(payload: Dict[str, Any]) -> str:
    """Render a report document for the terminal."""
    lines = [f"{Style.BRIGHT}Report: {payload.get('command', '?')} (seed {payload.get('seed', '?')}){Style.RESET_ALL}"]

    for key in ("baseline_accuracy", "source_accuracy", "target_accuracy"):
        value = payload.get(key)
        if value is not None:
            lines.append(f"- {key}: {Fore.CYAN}{value:.4f}{Style.RESET_ALL}")

    baseline, target = payload.get("baseline_accuracy"), payload.get("target_accuracy")
    if baseline is not None and target is not None:
        gain = target - baseline
        colour = Fore.GREEN if gain >= 0 else Fore.RED
        lines.append(f"- gain over frozen baseline: {colour}{gain:+.4f}{Style.RESET_ALL}")

    final_loss = payload.get("final_loss")
    if final_loss:
        parts = ", ".join(f"{k} {v:.4f}" for k, v in final_loss.items())
        lines.append(f"- final loss after {payload.get('steps', 0)} steps: {parts}")

    shift = payload.get("shift_test")
    if shift:
        colour = Fore.YELLOW if shift.get("reject") else Fore.GREEN
        verdict = "correlation shift detected" if shift.get("reject") else "no correlation shift"
        lines.append(
            f"- shift test: {colour}{verdict}{Style.RESET_ALL} "
            f"(U={shift['u_statistic']:.1f}, p={shift['p_value']:.4g}, {shift['method']})"
        )

    counts = payload.get("parameter_counts")
    if counts:
        lines.append("- parameters: " + ", ".join(f"{k} {_format_value(v)}" for k, v in counts.items()))

    for key, value in sorted((payload.get("extra") or {}).items()):
        lines.append(f"- {key}: {_format_value(value) if not isinstance(value, (list, dict)) else json.dumps(value)}")

    config = payload.get("config")
    if config:
        lines.append(f"{Style.DIM}config: {json.dumps(config, sort_keys=True)}{Style.RESET_ALL}")
    return "\n".join(lines)
