"""
Spectral reweighting that maps a target Gaussian domain onto a source one.

For covariances with eigen-decompositions ``U diag(lam) U^T`` the map
``A = U_s diag(lam_s)^1/2 diag(lam_t)^-1/2 U_t^T`` satisfies ``A S_t A^T = S_s``,
so the reweighted target matches the source covariance and, with it, the
correlation structure.
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from src.errors import (
    DataError,
    NoConvergenceError,
    NonPsdTemplateError,
    NotSymmetricError,
    ShapeMismatchError,
    SingularTargetError,
)
from src.stats.correlation import corr_structure, covariance

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-8
OFFDIAG_TOL = 1e-12
MAX_SWEEPS = 100
MIN_EIGENVALUE = 1e-10


def symmetric_eigendecompose(matrix: np.ndarray, max_sweeps: int = MAX_SWEEPS) -> Tuple[np.ndarray, np.ndarray]:
    """
    Eigen-decompose a symmetric matrix with cyclic Jacobi rotations.

    Args:
        matrix: Symmetric D x D array
        max_sweeps: Sweeps allowed before giving up

    Returns:
        (U, eigenvalues) with eigenvalues in descending order and U's columns the eigenvectors
    """
    a = np.array(matrix, dtype=np.float64, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatchError(f"Expected a square matrix, got {a.shape}")
    if np.max(np.abs(a - a.T), initial=0.0) > SYMMETRY_TOL:
        raise NotSymmetricError("Matrix is not symmetric within 1e-8")
    a = 0.5 * (a + a.T)
    dim = a.shape[0]
    v = np.eye(dim)
    tol = OFFDIAG_TOL * max(1.0, float(np.linalg.norm(a)))

    sweeps = 0
    while True:
        off = math.sqrt(max(float(np.sum(a * a) - np.sum(np.diag(a) ** 2)), 0.0))
        if off < tol:
            break
        sweeps += 1
        if sweeps > max_sweeps:
            raise NoConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps (off-diagonal {off:.3e})")
        for p in range(dim - 1):
            for q in range(p + 1, dim):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c

                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0

                vec_p, vec_q = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q

    eigenvalues = np.diag(a).copy()
    order = np.argsort(-eigenvalues, kind="stable")
    logger.debug(f"Jacobi converged after {sweeps} sweeps for D={dim}")
    return v[:, order], eigenvalues[order]


@dataclass(frozen=True)
class GaussianSpec:
    """Domain whose column t is drawn from N(mean[:, t], covariance)."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self) -> None:
        mean = np.atleast_2d(np.asarray(self.mean, dtype=np.float64))
        cov = np.asarray(self.covariance, dtype=np.float64)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or mean.shape[0] != cov.shape[0]:
            raise ShapeMismatchError(f"Mean {mean.shape} does not fit covariance {cov.shape}")
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-10:
            raise NotSymmetricError("GaussianSpec covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def n_vars(self) -> int:
        return self.covariance.shape[0]

    @property
    def length(self) -> int:
        return self.mean.shape[1]

    def sample(self, normals: np.ndarray) -> np.ndarray:
        """Map standard normals of shape (n, D, T) to draws of shape (n, D, T)."""
        root = np.linalg.cholesky(self.covariance)
        return self.mean[None, :, :] + np.einsum("ij,njt->nit", root, normals)

    def to_dict(self) -> Dict[str, Any]:
        return {"mean": self.mean.tolist(), "covariance": self.covariance.tolist()}

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "GaussianSpec":
        try:
            return cls(np.array(payload["mean"], dtype=np.float64), np.array(payload["covariance"], dtype=np.float64))
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, DataError):
                raise
            raise DataError(f"Malformed Gaussian spec: {str(e)}") from e


def load_gaussian_spec(path: Union[str, Path]) -> GaussianSpec:
    """Read a GaussianSpec from a JSON file with ``mean`` and ``covariance`` entries."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"{path} is not valid JSON: {str(e)}") from e
    return GaussianSpec.from_dict(payload)


def save_gaussian_spec(spec: GaussianSpec, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2), encoding="utf-8")


@dataclass(frozen=True)
class ReweightMap:
    """Affine map ``Y = A X + b`` applied column-wise to D x T series."""

    matrix: np.ndarray
    bias: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Apply to one (D, T) series or a stack of shape (n, D, T)."""
        mapped = np.einsum("ij,...jt->...it", self.matrix, values)
        return mapped + self.bias[:, None]


def build_reweight(source: GaussianSpec, target: GaussianSpec) -> ReweightMap:
    """
    Build the spectral map that carries the target covariance onto the source covariance.

    Args:
        source: Source domain spec
        target: Target domain spec with the same D

    Returns:
        ReweightMap with ``b = (I - A) m_t`` where m_t is the per-variable mean of the target
    """
    if source.n_vars != target.n_vars:
        raise ShapeMismatchError(f"Variable counts differ: {source.n_vars} vs {target.n_vars}")
    u_s, lam_s = symmetric_eigendecompose(source.covariance)
    u_t, lam_t = symmetric_eigendecompose(target.covariance)
    if lam_t[-1] <= MIN_EIGENVALUE:
        raise SingularTargetError(f"Target covariance eigenvalue {lam_t[-1]:.3e} <= {MIN_EIGENVALUE}")
    if lam_s[-1] <= MIN_EIGENVALUE:
        raise NonPsdTemplateError(f"Source covariance eigenvalue {lam_s[-1]:.3e} <= {MIN_EIGENVALUE}")

    matrix = u_s @ np.diag(np.sqrt(lam_s / lam_t)) @ u_t.T
    target_mean = target.mean.mean(axis=1)
    bias = (np.eye(source.n_vars) - matrix) @ target_mean
    return ReweightMap(matrix, bias)


def verify_probability_alignment(
    source: GaussianSpec,
    target: GaussianSpec,
    reweight: ReweightMap,
    n: int = 50000,
    seed: int = 0,
) -> Dict[str, float]:
    """
    Compare reweighted target draws with source draws.

    Each domain gets its own standard normals, so the differences carry the
    sampling noise of both sides on top of any error in the map.

    Args:
        source: Source spec
        target: Target spec
        reweight: Map applied to target draws
        n: Samples per domain
        seed: Sampling seed

    Returns:
        Max-entry differences of correlation, covariance and mean, and the noise bound 5/sqrt(n)
    """
    if n < 1000:
        raise DataError(f"verify_probability_alignment needs n >= 1000, got {n}")
    if source.mean.shape != target.mean.shape:
        raise ShapeMismatchError(f"Mean shapes differ: {source.mean.shape} vs {target.mean.shape}")

    rng = np.random.default_rng(seed)
    shape = (n, source.n_vars, source.length)
    x_s = source.sample(rng.standard_normal(shape))
    y = reweight.apply(target.sample(rng.standard_normal(shape)))

    columns = source.length
    cov_s, mean_s = covariance(x_s)
    cov_y, mean_y = covariance(y)
    report = {
        "corr_diff": float(np.max(np.abs(corr_structure(cov_y) - corr_structure(cov_s)))),
        "cov_diff": float(np.max(np.abs(cov_y - cov_s)) / columns),
        "mean_diff": float(np.max(np.abs(mean_y - mean_s))),
        "bound": 5.0 / math.sqrt(n),
    }
    logger.info(
        f"Alignment check n={n}: corr {report['corr_diff']:.4f}, cov {report['cov_diff']:.4f}, "
        f"mean {report['mean_diff']:.4f} (bound {report['bound']:.4f})"
    )
    return report


def verify_correlation_alignment(
    source: Union[GaussianSpec, np.ndarray],
    target: Union[GaussianSpec, np.ndarray],
    matrix: np.ndarray,
) -> float:
    """
    Max-entry gap between the correlation of the reweighted target and the source.

    With GaussianSpecs the population covariances are used (exact path); with
    (n, D, T) sample arrays the empirical covariances.

    Args:
        source: Source spec or samples
        target: Target spec or samples
        matrix: Reweighting matrix A

    Returns:
        ``max |Corr(A X_t) - Corr(X_s)|``
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if isinstance(source, GaussianSpec) and isinstance(target, GaussianSpec):
        mapped = matrix @ target.covariance @ matrix.T
        reference = source.covariance
    else:
        source_values = _as_series_stack(source)
        target_values = _as_series_stack(target)
        mapped, _ = covariance(np.einsum("ij,njt->nit", matrix, target_values))
        reference, _ = covariance(source_values)
    return float(np.max(np.abs(corr_structure(mapped) - corr_structure(reference))))


def _as_series_stack(samples: Any) -> np.ndarray:
    values = np.asarray(samples, dtype=np.float64)
    if values.ndim == 2:
        values = values[:, :, None]
    if values.ndim != 3:
        raise ShapeMismatchError(f"Expected samples of shape (n, D) or (n, D, T), got {values.shape}")
    return values
