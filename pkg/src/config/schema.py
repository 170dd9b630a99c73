"""
Config-file parsing for the command line.

Files hold ``key = value`` lines with ``#`` comments. Values are layered as
built-in defaults < file < flag overrides, and every key is checked against
the schema below when it is read.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple, Union

from src.config.config import Config
from src.errors import ConfigError

logger = logging.getLogger(__name__)


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_int_list(raw: str) -> List[int]:
    items = [item.strip() for item in raw.split(",") if item.strip()]
    if not items:
        raise ValueError("empty list")
    return [int(item) for item in items]


def _parse_optional_float(raw: str) -> Optional[float]:
    if raw.strip().lower() in ("none", ""):
        return None
    return float(raw)


@dataclass(frozen=True)
class KeySpec:
    """Schema entry: how to parse a value and which values are legal."""

    parse: Callable[[str], Any]
    check: Callable[[Any], bool]
    rule: str
    help: str


def _positive(value: Any) -> bool:
    return value > 0


def _non_negative(value: Any) -> bool:
    return value >= 0


def _at_least(bound: int) -> Callable[[Any], bool]:
    return lambda value: value >= bound


def _one_of(*choices: str) -> Callable[[Any], bool]:
    return lambda value: value in choices


def _always(_: Any) -> bool:
    return True


SCHEMA: Dict[str, KeySpec] = {
    "window_len": KeySpec(int, _at_least(1), ">= 1", "window length L in time steps"),
    "vote_count": KeySpec(int, _at_least(1), ">= 1", "windows m sampled for majority voting"),
    "stride": KeySpec(int, _at_least(1), ">= 1", "window stride used for training batches"),
    "adapter": KeySpec(str, _one_of("cats", "linear", "none"), "cats|linear|none", "adapter kind"),
    "kernel_size": KeySpec(int, lambda v: v >= 1 and v % 2 == 1, "odd >= 1", "TDC kernel size r"),
    "adapter_rank": KeySpec(int, _at_least(1), ">= 1", "bottleneck width of the linear adapter"),
    "lr": KeySpec(float, _positive, "> 0", "adaptation learning rate"),
    "pretrain_lr": KeySpec(float, _positive, "> 0", "pretraining learning rate"),
    "lambda_corr": KeySpec(float, _non_negative, ">= 0", "weight of the correlation alignment loss"),
    "lambda_f": KeySpec(float, _non_negative, ">= 0", "weight of the forecasting loss"),
    "alignment_loss": KeySpec(str, _one_of("mmd", "coral"), "mmd|coral", "alignment objective"),
    "pretrain_epochs": KeySpec(int, _non_negative, ">= 0", "source pretraining epochs"),
    "adapt_steps": KeySpec(int, _non_negative, ">= 0", "adaptation steps"),
    "batch_size": KeySpec(int, _at_least(2), ">= 2", "windows per domain per step"),
    "eval_every": KeySpec(int, _at_least(1), ">= 1", "steps between progress evaluations"),
    "eval_batch_size": KeySpec(int, _at_least(1), ">= 1", "windows per inference forward pass"),
    "seed": KeySpec(int, _non_negative, ">= 0", "run seed"),
    "d_model": KeySpec(int, _at_least(1), ">= 1", "backbone hidden width"),
    "d_ff": KeySpec(int, _at_least(1), ">= 1", "backbone feed-forward width"),
    "n_blocks": KeySpec(int, _at_least(1), ">= 1", "encoder blocks K"),
    "n_heads": KeySpec(int, _at_least(1), ">= 1", "attention heads"),
    "n_vars": KeySpec(int, _at_least(2), ">= 2", "variables D of generated data"),
    "series_len": KeySpec(int, _at_least(1), ">= 1", "time steps T of generated data"),
    "n_classes": KeySpec(int, _at_least(2), ">= 2", "classes of generated data"),
    "n_per_class": KeySpec(int, _at_least(1), ">= 1", "generated samples per class"),
    "theta": KeySpec(float, _always, "real", "correlation-shift rotation angle (radians)"),
    "target_theta": KeySpec(float, _always, "real", "rotation angle of the target domain in pipeline commands"),
    "noise_scale": KeySpec(float, _non_negative, ">= 0", "white measurement noise scale"),
    "ar_coef": KeySpec(float, lambda v: 0 <= v < 1, "in [0, 1)", "AR(1) coefficient"),
    "template_seed": KeySpec(int, _non_negative, ">= 0", "seed of class templates and rotation planes"),
    "wasserstein_projections": KeySpec(int, _at_least(1), ">= 1", "sliced Wasserstein directions"),
    "normalize_ranking": KeySpec(_parse_bool, _always, "bool", "z-score samples before ranking"),
    "missing_label_penalty": KeySpec(
        _parse_optional_float,
        lambda v: v is None or v >= 0,
        "none or >= 0",
        "distance added per label present in one domain only",
    ),
    "oracle_samples": KeySpec(int, _at_least(1000), ">= 1000", "samples for empirical alignment"),
    "gat_widths": KeySpec(
        _parse_int_list, lambda v: all(w >= 1 for w in v), "list of >= 1", "widths of the GAT study"
    ),
    "gat_steps": KeySpec(int, _at_least(1), ">= 1", "optimiser steps per GAT study width"),
    "gat_lr": KeySpec(float, _positive, "> 0", "learning rate of the GAT study"),
    "scaling_d_models": KeySpec(
        _parse_int_list, lambda v: all(w >= 1 for w in v), "list of >= 1", "d_model sweep"
    ),
    "scaling_window_lens": KeySpec(
        _parse_int_list, lambda v: all(w >= 1 for w in v), "list of >= 1", "window length sweep"
    ),
    "n_seeds": KeySpec(int, _at_least(1), ">= 1", "seeds per experiment"),
    "workers": KeySpec(int, _at_least(1), ">= 1", "parallel sessions for multi-seed runs"),
}


@dataclass(frozen=True)
class CliConfig:
    """Effective configuration after defaults, file and flags were applied."""

    values: Mapping[str, Any]
    source: Optional[str] = None
    overridden: Tuple[str, ...] = field(default_factory=tuple)

    def __getitem__(self, key: str) -> Any:
        if key not in self.values:
            raise ConfigError(f"unknown-key: {key}")
        return self.values[key]

    def echo(self) -> Dict[str, Any]:
        """Return a JSON-ready copy of the effective configuration (worker count excluded)."""
        return {key: self.values[key] for key in sorted(self.values) if key != "workers"}

    def config_hash(self) -> str:
        """First 12 hex characters of SHA-256 over the sorted echo, seed excluded."""
        echo = self.echo()
        echo.pop("seed", None)
        payload = json.dumps(echo, sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:12]

    def with_overrides(self, **updates: Any) -> "CliConfig":
        """Return a copy with typed values replaced (values are validated)."""
        merged = dict(self.values)
        for key, value in updates.items():
            merged[key] = _validate(key, value)
        _check_cross_field(merged)
        return CliConfig(merged, self.source, tuple(sorted(set(self.overridden) | set(updates))))


def _coerce(key: str, raw: Union[str, Any]) -> Any:
    spec = SCHEMA.get(key)
    if spec is None:
        raise ConfigError(f"unknown-key: {key}")
    if not isinstance(raw, str):
        if spec.parse in (int, float) and isinstance(raw, (int, float)) and not isinstance(raw, bool):
            if spec.parse is int and raw != int(raw):
                raise ConfigError(f"type-error: {key} = {raw!r} is not an integer")
            return spec.parse(raw)
        return raw
    try:
        return spec.parse(raw.strip())
    except ValueError as e:
        raise ConfigError(f"type-error: {key} = {raw!r} ({e})") from e


def _validate(key: str, raw: Union[str, Any]) -> Any:
    value = _coerce(key, raw)
    spec = SCHEMA[key]
    try:
        ok = spec.check(value)
    except TypeError:
        ok = False
    if not ok:
        raise ConfigError(f"type-error: {key} = {value!r} violates {spec.rule}")
    return value


def _check_cross_field(values: Mapping[str, Any]) -> None:
    if values["window_len"] < values["kernel_size"]:
        raise ConfigError(
            f"type-error: window_len {values['window_len']} shorter than kernel_size {values['kernel_size']}"
        )
    if values["d_model"] % values["n_heads"] != 0:
        raise ConfigError(f"type-error: d_model {values['d_model']} not divisible by n_heads {values['n_heads']}")


def read_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """
    Read raw ``key = value`` pairs from a config file.

    Args:
        path: Config file path

    Returns:
        Dictionary of raw string values in file order
    """
    entries: Dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"type-error: line {lineno} is not 'key = value': {line!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"unknown-key: {key} (line {lineno})")
        if key in entries:
            raise ConfigError(f"duplicate-key: {key} (line {lineno})")
        entries[key] = value
    return entries


def parse_config(path: Optional[Union[str, Path]] = None, overrides: Optional[Mapping[str, Any]] = None) -> CliConfig:
    """
    Build the effective configuration.

    Args:
        path: Optional config file; missing files raise ``FileNotFoundError``
        overrides: Flag values (raw strings or typed values) that win over the file

    Returns:
        Validated CliConfig
    """
    values: Dict[str, Any] = Config.get_defaults()
    overridden: List[str] = []

    if path is not None:
        for key, raw in read_config_file(path).items():
            values[key] = _validate(key, raw)
            overridden.append(key)
        logger.debug(f"Loaded {len(overridden)} keys from {path}")

    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        values[key] = _validate(key, raw)
        overridden.append(key)

    _check_cross_field(values)
    return CliConfig(values, str(path) if path is not None else None, tuple(sorted(set(overridden))))
