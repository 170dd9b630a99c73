"""
Window slicing and batch sampling over (D, T) series.
"""

import logging
from typing import List, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.errors import EmptyDatasetError, SeriesTooShortError, WindowTooLongError

logger = logging.getLogger(__name__)


def window_starts(length: int, window_len: int, stride: int = 1) -> np.ndarray:
    """0-based starts {0, stride, ...} <= length - window_len."""
    if window_len > length:
        raise WindowTooLongError(f"Window of {window_len} steps exceeds series of {length}")
    if stride < 1:
        raise ValueError(f"Stride must be >= 1, got {stride}")
    return np.arange(0, length - window_len + 1, stride)


def slice_windows(values: np.ndarray, window_len: int, stride: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """
    Cut one series into windows.

    Args:
        values: Series of shape (D, T)
        window_len: Window length L
        stride: Step between window starts

    Returns:
        (starts, windows) with windows of shape (count, D, L), count = floor((T - L) / stride) + 1
    """
    values = np.asarray(values, dtype=np.float64)
    starts = window_starts(values.shape[-1], window_len, stride)
    views = sliding_window_view(values, window_len, axis=-1)
    return starts, np.ascontiguousarray(np.moveaxis(views[:, starts, :], 1, 0))


def to_model_input(windows: np.ndarray) -> np.ndarray:
    """(..., D, L) windows to the (..., L, D) layout the encoder reads."""
    return np.swapaxes(windows, -1, -2)


def forecast_starts(length: int, window_len: int, stride: int = 1) -> np.ndarray:
    """
    Starts k of history windows X[:, k:k+L] whose successor X[:, k+L:k+2L] is the forecast target.

    At stride 1 there are exactly T - 2L + 1 pairs, so T == 2L still yields one.
    """
    if length < 2 * window_len:
        raise SeriesTooShortError(f"Forecasting needs T >= 2L; got T={length}, L={window_len}")
    return np.arange(0, length - 2 * window_len + 1, stride)


def forecast_pairs(values: np.ndarray, window_len: int, stride: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """
    History and target windows of every series.

    Args:
        values: Series stack (n, D, T)
        window_len: L
        stride: Step between pair starts

    Returns:
        (history, target), each (n * pairs, L, D)
    """
    starts = forecast_starts(values.shape[-1], window_len, stride)
    history = np.stack([values[:, :, k : k + window_len] for k in starts], axis=1)
    target = np.stack([values[:, :, k + window_len : k + 2 * window_len] for k in starts], axis=1)
    flat = (-1, values.shape[1], window_len)
    return to_model_input(history.reshape(flat)), to_model_input(target.reshape(flat))


def sample_windows(
    values: np.ndarray,
    window_len: int,
    batch_size: int,
    rng: np.random.Generator,
    stride: int = 1,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Uniformly sample (series, start) pairs.

    Returns:
        (series indices, windows of shape (batch_size, L, D))
    """
    if values.shape[0] == 0:
        raise EmptyDatasetError("Cannot sample windows from an empty dataset")
    starts = window_starts(values.shape[-1], window_len, stride)
    series = rng.integers(0, values.shape[0], size=batch_size)
    chosen = starts[rng.integers(0, starts.size, size=batch_size)]
    windows = np.stack([values[i, :, s : s + window_len] for i, s in zip(series, chosen)])
    return series, to_model_input(windows)


def sample_forecast_pairs(
    values: np.ndarray,
    window_len: int,
    batch_size: int,
    rng: np.random.Generator,
    stride: int = 1,
) -> Tuple[np.ndarray, np.ndarray]:
    """Random batch of (history, next window) pairs, each (batch_size, L, D)."""
    if values.shape[0] == 0:
        raise EmptyDatasetError("Cannot sample windows from an empty dataset")
    starts = forecast_starts(values.shape[-1], window_len, stride)
    series = rng.integers(0, values.shape[0], size=batch_size)
    chosen = starts[rng.integers(0, starts.size, size=batch_size)]
    history = np.stack([values[i, :, s : s + window_len] for i, s in zip(series, chosen)])
    target = np.stack([values[i, :, s + window_len : s + 2 * window_len] for i, s in zip(series, chosen)])
    return to_model_input(history), to_model_input(target)


def covered_columns(length: int, window_len: int, stride: int = 1) -> List[int]:
    """Columns that appear in at least one window."""
    covered = set()
    for start in window_starts(length, window_len, stride):
        covered.update(range(start, start + window_len))
    return sorted(covered)
