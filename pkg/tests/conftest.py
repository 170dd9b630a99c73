"""Configure pytest for testing the CATS laboratory."""

import sys
import os
from pathlib import Path

import numpy as np
import pytest
from dotenv import load_dotenv

# Add project root to Python path to resolve 'src' imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.config.schema import parse_config  # noqa: E402

# Get the absolute path to the project root
project_root = Path(__file__).parent.parent
load_dotenv(os.path.join(project_root, ".env"))


def pytest_configure(config):
    """
    Register custom pytest markers.

    Args:
        config: The pytest configuration object
    """
    config.addinivalue_line("markers", "slow: statistical or training tests that take more than a few seconds")


@pytest.fixture
def rng():
    """Seeded generator shared by array-building tests."""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_settings():
    """A configuration small enough to train end to end in seconds."""
    return parse_config(
        None,
        {
            "window_len": 8,
            "vote_count": 3,
            "stride": 4,
            "kernel_size": 3,
            "d_model": 8,
            "d_ff": 16,
            "n_blocks": 2,
            "n_heads": 2,
            "n_vars": 3,
            "series_len": 24,
            "n_classes": 2,
            "n_per_class": 6,
            "pretrain_epochs": 1,
            "adapt_steps": 2,
            "batch_size": 4,
            "eval_every": 1,
            "eval_batch_size": 16,
            "gat_widths": "4,8",
            "gat_steps": 3,
            "scaling_d_models": "8,16",
            "scaling_window_lens": "8,16",
            "n_seeds": 2,
            "workers": 1,
            "oracle_samples": 2000,
            "wasserstein_projections": 8,
        },
    )
