"""Configuration module for the CATS laboratory."""

import math
import os
from typing import Dict, Any

from src.config import environment


class Config:
    """Configuration class for application settings."""

    @staticmethod
    def get_defaults() -> Dict[str, Any]:
        """
        Get the built-in defaults for every config key.

        Window length 48 with 16 voting windows, kernel size 5, Adam at 1e-4 with both loss
        weights at 0.5, ten pretraining epochs, and a three-block backbone with d_model 128
        and d_ff 256.

        Returns:
            Dictionary of default settings keyed by config key
        """
        return {
            # Windowing and inference
            "window_len": 48,
            "vote_count": 16,
            "stride": 8,
            # Adapter
            "adapter": "cats",
            "kernel_size": 5,
            "adapter_rank": 8,
            # Optimisation
            "lr": 1e-4,
            "pretrain_lr": 1e-3,
            "lambda_corr": 0.5,
            "lambda_f": 0.5,
            "alignment_loss": "mmd",
            "pretrain_epochs": 10,
            "adapt_steps": 1000,
            "batch_size": 32,
            "eval_every": 100,
            "eval_batch_size": 256,
            "seed": 0,
            # Backbone
            "d_model": 128,
            "d_ff": 256,
            "n_blocks": 3,
            "n_heads": 4,
            # Synthetic data
            "n_vars": 6,
            "series_len": 128,
            "n_classes": 4,
            "n_per_class": 125,
            "theta": 0.0,
            "target_theta": math.pi / 3,
            "noise_scale": 0.1,
            "ar_coef": 0.7,
            "template_seed": 0,
            # Statistics
            "wasserstein_projections": 64,
            "normalize_ranking": False,
            "missing_label_penalty": None,
            "oracle_samples": 50000,
            # Studies
            "gat_widths": [8, 32, 128, 256],
            "gat_steps": 1500,
            "gat_lr": 1e-2,
            "scaling_d_models": [128, 256, 512],
            "scaling_window_lens": [24, 48, 96],
            "n_seeds": 5,
            "workers": environment.DEFAULT_WORKERS,
        }

    @staticmethod
    def get_runtime_settings() -> Dict[str, Any]:
        """
        Get settings that come from the process environment rather than config files.

        Returns:
            Dictionary of runtime settings
        """
        result: Dict[str, Any] = {
            "log_level": environment.LOG_LEVEL,
            "log_file": environment.LOG_FILE,
            "workers": environment.DEFAULT_WORKERS,
            "output_dir": os.getenv("CATS_OUTPUT_DIR", "reports"),
        }
        return result
