"""
Kernel two-sample discrepancies and the CORAL decomposition.
"""

import logging
from typing import Sequence, Tuple, Union

import numpy as np

from src.errors import BandwidthError, EmptyInputError, ShapeMismatchError, ZeroMatrixError

logger = logging.getLogger(__name__)

MEDIAN = "median"

Vectors = Union[np.ndarray, Sequence[np.ndarray]]


def as_matrix(vectors: Vectors, name: str = "input") -> np.ndarray:
    """Stack a list of equal-length vectors into an (n, d) array."""
    matrix = np.asarray(vectors, dtype=np.float64)
    if matrix.size == 0 or matrix.shape[0] == 0:
        raise EmptyInputError(f"{name} is empty")
    if matrix.ndim == 1:
        matrix = matrix[:, None]
    elif matrix.ndim > 2:
        matrix = matrix.reshape(matrix.shape[0], -1)
    return matrix


def _check_pair(xs: Vectors, ys: Vectors) -> Tuple[np.ndarray, np.ndarray]:
    x = as_matrix(xs, "xs")
    y = as_matrix(ys, "ys")
    if x.shape[1] != y.shape[1]:
        raise ShapeMismatchError(f"Vector lengths differ: {x.shape[1]} vs {y.shape[1]}")
    return x, y


def sq_distances(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    d = (x * x).sum(axis=1)[:, None] + (y * y).sum(axis=1)[None, :] - 2.0 * x @ y.T
    return np.maximum(d, 0.0)


def median_bandwidth(pooled: np.ndarray) -> float:
    """
    Median of the pairwise Euclidean distances (i < j) of a pooled sample.

    Falls back to 1.0 when there is a single point or the median is zero.
    """
    n = pooled.shape[0]
    if n < 2:
        return 1.0
    iu = np.triu_indices(n, k=1)
    median = float(np.median(np.sqrt(sq_distances(pooled, pooled)[iu])))
    return median if median > 0 else 1.0


def gaussian_kernel(x: np.ndarray, y: np.ndarray, sigma: float) -> np.ndarray:
    return np.exp(-sq_distances(x, y) / (2.0 * sigma * sigma))


def mmd_squared(xs: Vectors, ys: Vectors, bandwidth: Union[float, str] = MEDIAN) -> float:
    """
    Biased (V-statistic) squared MMD with a Gaussian kernel.

    Args:
        xs: First sample, n vectors
        ys: Second sample, m vectors of the same length
        bandwidth: Kernel width sigma, or ``"median"`` for the median heuristic on the pooled sample

    Returns:
        Non-negative squared discrepancy
    """
    x, y = _check_pair(xs, ys)
    if isinstance(bandwidth, str):
        if bandwidth != MEDIAN:
            raise BandwidthError(f"Unknown bandwidth rule: {bandwidth}")
        sigma = median_bandwidth(np.vstack([x, y]))
    else:
        sigma = float(bandwidth)
        if not sigma > 0:
            raise BandwidthError(f"Non-positive kernel bandwidth: {bandwidth}")

    value = (
        gaussian_kernel(x, x, sigma).mean()
        + gaussian_kernel(y, y, sigma).mean()
        - 2.0 * gaussian_kernel(x, y, sigma).mean()
    )
    return max(float(value), 0.0)


def _unit_rows(matrix: np.ndarray, name: str) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms <= 1e-12):
        raise ZeroMatrixError(f"{name} contains a zero vector")
    return matrix / norms[:, None]


def _matrix_norm(matrix: np.ndarray, norm: str) -> float:
    if norm == "spectral":
        return float(np.linalg.norm(matrix, ord=2))
    if norm == "fro":
        return float(np.linalg.norm(matrix, ord="fro"))
    raise ValueError(f"Unknown matrix norm: {norm}")


def coral_terms(hs: Vectors, ht: Vectors, norm: str = "spectral") -> Tuple[float, float]:
    """
    Split the second-moment gap of unit-normalised features into covariance and mean parts.

    ``E[h h^T] = Cov + mu mu^T`` for each domain, so the Gram difference is bounded by
    the covariance difference plus the mean outer-product difference.

    Args:
        hs: Source feature vectors
        ht: Target feature vectors
        norm: ``"spectral"`` or ``"fro"``

    Returns:
        (L_CORAL, L_mean)
    """
    s, t = _check_pair(hs, ht)
    s = _unit_rows(s, "hs")
    t = _unit_rows(t, "ht")
    mu_s = s.mean(axis=0)
    mu_t = t.mean(axis=0)
    cov_s = (s - mu_s).T @ (s - mu_s) / s.shape[0]
    cov_t = (t - mu_t).T @ (t - mu_t) / t.shape[0]
    l_coral = _matrix_norm(cov_s - cov_t, norm)
    l_mean = _matrix_norm(np.outer(mu_s, mu_s) - np.outer(mu_t, mu_t), norm)
    return l_coral, l_mean


def linear_correlation_mmd(hs: Vectors, ht: Vectors, norm: str = "spectral") -> float:
    """``||E[h_s h_s^T] - E[h_t h_t^T]||`` over unit-normalised features (identity feature map)."""
    s, t = _check_pair(hs, ht)
    s = _unit_rows(s, "hs")
    t = _unit_rows(t, "ht")
    return _matrix_norm(s.T @ s / s.shape[0] - t.T @ t / t.shape[0], norm)


def coral_distance(hs: Vectors, ht: Vectors) -> float:
    """CORAL objective ``||C_s - C_t||_F^2 / (4 d^2)`` with unbiased covariances."""
    s, t = _check_pair(hs, ht)
    d = s.shape[1]
    cov_s = np.cov(s, rowvar=False, ddof=1) if s.shape[0] > 1 else np.zeros((d, d))
    cov_t = np.cov(t, rowvar=False, ddof=1) if t.shape[0] > 1 else np.zeros((d, d))
    diff = np.atleast_2d(cov_s) - np.atleast_2d(cov_t)
    return float(np.sum(diff * diff) / (4.0 * d * d))
