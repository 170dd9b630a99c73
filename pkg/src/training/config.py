"""
Training settings shared by pretraining, adaptation and evaluation.
"""

from dataclasses import asdict, dataclass, replace
from typing import Any, Dict, Optional

from src.errors import ConfigError
from src.models.adapters import AdapterSpec


@dataclass(frozen=True)
class TrainConfig:
    window_len: int = 48
    vote_count: int = 16
    kernel_size: int = 5
    lr: float = 1e-4
    lambda_corr: float = 0.5
    lambda_f: float = 0.5
    pretrain_epochs: int = 10
    adapt_steps: int = 1000
    batch_size: int = 32
    stride: int = 8
    seed: int = 0
    pretrain_lr: float = 1e-3
    eval_every: int = 100
    adapter: str = "cats"
    adapter_rank: int = 8
    eval_batch_size: int = 256
    alignment_loss: str = "mmd"

    def __post_init__(self) -> None:
        if self.window_len < self.kernel_size:
            raise ConfigError(f"type-error: window_len {self.window_len} < kernel_size {self.kernel_size}")
        if self.vote_count < 1:
            raise ConfigError(f"type-error: vote_count must be >= 1, got {self.vote_count}")
        if self.lr <= 0 or self.pretrain_lr <= 0:
            raise ConfigError("type-error: learning rates must be positive")
        if self.lambda_corr < 0 or self.lambda_f < 0:
            raise ConfigError("type-error: loss weights must be non-negative")

    @classmethod
    def from_settings(cls, settings: Any) -> "TrainConfig":
        """Pick the training keys out of a CliConfig (or any mapping with the same keys)."""
        return cls(**{name: settings[name] for name in cls.__dataclass_fields__})

    def with_changes(self, **changes: Any) -> "TrainConfig":
        return replace(self, **changes)

    def adapter_spec(self, length: Optional[int] = None) -> AdapterSpec:
        return AdapterSpec(self.adapter, self.kernel_size, self.adapter_rank, length or self.window_len)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)
