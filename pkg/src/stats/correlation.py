"""
Covariance and correlation structures of multivariate series.
"""

import logging
from typing import Sequence, Tuple, Union

import numpy as np

from src.errors import DegenerateVarianceError, ShapeMismatchError, TooFewSamplesError, ZeroMatrixError

logger = logging.getLogger(__name__)

DEGENERATE_VARIANCE = 1e-12
ZERO_NORM = 1e-12

ArrayLike = Union[np.ndarray, Sequence[np.ndarray]]


def _stack(samples: ArrayLike) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        stacked = np.asarray(samples, dtype=np.float64)
    else:
        shapes = {np.shape(s) for s in samples}
        if len(shapes) > 1:
            raise ShapeMismatchError(f"Samples have mixed shapes {sorted(shapes)}")
        stacked = np.asarray(list(samples), dtype=np.float64)
    if stacked.ndim == 2:
        stacked = stacked[:, :, None]
    if stacked.ndim != 3:
        raise ShapeMismatchError(f"Expected a list of D x T arrays, got shape {stacked.shape}")
    return stacked


def covariance(samples: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    """
    Population covariance across samples of D x T arrays.

    Args:
        samples: Sequence of D x T arrays, or an (n, D, T) array; D-vectors are read as D x 1

    Returns:
        (covariance D x D, elementwise mean D x T)
    """
    stacked = _stack(samples)
    if stacked.shape[0] < 2:
        raise TooFewSamplesError(f"covariance needs at least 2 samples, got {stacked.shape[0]}")
    mean = stacked.mean(axis=0)
    centered = stacked - mean
    cov = np.einsum("nit,njt->ij", centered, centered) / stacked.shape[0]
    return 0.5 * (cov + cov.T), mean


def corr_structure(cov: np.ndarray) -> np.ndarray:
    """Normalise a covariance to unit diagonal: diag^-1/2 * cov * diag^-1/2."""
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ShapeMismatchError(f"Covariance must be square, got {cov.shape}")
    diag = np.diag(cov)
    if np.any(diag <= DEGENERATE_VARIANCE):
        bad = [int(i) for i in np.flatnonzero(diag <= DEGENERATE_VARIANCE)]
        raise DegenerateVarianceError(f"Variables {bad} have variance <= {DEGENERATE_VARIANCE}")
    inv_std = 1.0 / np.sqrt(diag)
    corr = cov * inv_std[:, None] * inv_std[None, :]
    np.fill_diagonal(corr, 1.0)
    return corr


def sample_correlation(values: np.ndarray) -> np.ndarray:
    """Correlation of one D x T sample, treating its T columns as observations."""
    values = np.asarray(values, dtype=np.float64)
    centered = values - values.mean(axis=1, keepdims=True)
    return corr_structure(centered @ centered.T / values.shape[1])


def corr_vector(hidden: np.ndarray) -> np.ndarray:
    """Row-major ``vec(H H^T / ||H||_F^2)`` of a D x T array."""
    hidden = np.asarray(hidden, dtype=np.float64)
    norm_sq = float(np.sum(hidden * hidden))
    if np.sqrt(norm_sq) <= ZERO_NORM:
        raise ZeroMatrixError("corr_vector of an all-zero matrix")
    return (hidden @ hidden.T / norm_sq).reshape(-1)
