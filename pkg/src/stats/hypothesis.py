"""
Mann-Whitney U test and the per-sample correlation shift test built on it.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Sequence

import numpy as np
from scipy.stats import norm, rankdata

from src.data.dataset import MtsDataset
from src.errors import EmptyInputError, ShapeMismatchError
from src.stats.correlation import sample_correlation

logger = logging.getLogger(__name__)

ALPHA = 0.05
EXACT_MAX_SIZE = 8


@dataclass(frozen=True)
class HypothesisResult:
    """Outcome of a two-sided rank test."""

    u_statistic: float
    p_value: float
    method: str

    @property
    def reject(self) -> bool:
        """Reject the null at the 0.05 level."""
        return self.p_value < ALPHA

    def to_dict(self) -> Dict[str, Any]:
        result = asdict(self)
        result["reject"] = self.reject
        return result


def _exact_counts(n: int, m: int) -> np.ndarray:
    """
    Number of orderings of n + m distinct values giving each U in [0, n*m].

    Uses the recurrence f(n, m, u) = f(n-1, m, u-m) + f(n, m-1, u), filling m upward.
    """
    size = n * m + 1
    # table[i] holds f(i, j, .) for the current j
    table = np.zeros((n + 1, size))
    table[:, 0] = 1.0
    for j in range(1, m + 1):
        new = np.zeros_like(table)
        new[0, 0] = 1.0
        for i in range(1, n + 1):
            new[i] = table[i]
            new[i, j:] += new[i - 1, : size - j]
        table = new
    return table[n]


def _exact_p_value(u: float, n: int, m: int) -> float:
    counts = _exact_counts(n, m)
    total = counts.sum()
    k = int(round(u))
    lower = counts[: k + 1].sum() / total
    upper = counts[k:].sum() / total
    return float(min(1.0, 2.0 * min(lower, upper)))


def _normal_p_value(u: float, ranks: np.ndarray, n: int, m: int) -> float:
    total = n + m
    _, ties = np.unique(ranks, return_counts=True)
    tie_term = float(np.sum(ties**3 - ties)) / (total * (total - 1)) if total > 1 else 0.0
    variance = n * m / 12.0 * ((total + 1) - tie_term)
    if variance <= 0:
        return 1.0
    z = max(0.0, abs(u - n * m / 2.0) - 0.5) / np.sqrt(variance)
    return float(min(1.0, 2.0 * norm.sf(z)))


def mann_whitney_u(a: Sequence[float], b: Sequence[float]) -> HypothesisResult:
    """
    Two-sided Mann-Whitney U test.

    Exact enumeration is used when the smaller sample has at most eight values and
    nothing is tied; otherwise the tie-corrected normal approximation with
    continuity correction.

    Args:
        a: First sample
        b: Second sample

    Returns:
        HypothesisResult with U computed for ``a``
    """
    x = np.asarray(a, dtype=np.float64).reshape(-1)
    y = np.asarray(b, dtype=np.float64).reshape(-1)
    if x.size == 0 or y.size == 0:
        raise EmptyInputError("mann_whitney_u needs at least one value per sample")

    n, m = x.size, y.size
    ranks = rankdata(np.concatenate([x, y]))
    u = float(ranks[:n].sum() - n * (n + 1) / 2.0)
    tied = np.unique(ranks).size < ranks.size

    if min(n, m) <= EXACT_MAX_SIZE and not tied:
        return HypothesisResult(u, _exact_p_value(u, n, m), "exact")
    return HypothesisResult(u, _normal_p_value(u, ranks, n, m), "normal-approx")


def per_sample_scores(dataset: MtsDataset) -> np.ndarray:
    """Mean of all entries of each sample's own correlation matrix."""
    return np.array([sample_correlation(values).mean() for values in dataset.values])


def correlation_shift_test(source: MtsDataset, target: MtsDataset) -> HypothesisResult:
    """
    Test whether two domains differ in their inter-variable correlation.

    Args:
        source: Source domain
        target: Target domain with the same D and T

    Returns:
        HypothesisResult of the rank test on per-sample correlation scores
    """
    if len(source) == 0 or len(target) == 0:
        raise EmptyInputError("correlation_shift_test needs non-empty domains")
    if source.values.shape[1:] != target.values.shape[1:]:
        raise ShapeMismatchError(
            f"Domain shapes differ: {source.values.shape[1:]} vs {target.values.shape[1:]}"
        )
    result = mann_whitney_u(per_sample_scores(source), per_sample_scores(target))
    logger.debug(
        f"Shift test {source.domain_id} -> {target.domain_id}: U={result.u_statistic:.1f} p={result.p_value:.4g}"
    )
    return result


def shift_rate(domains: Sequence[MtsDataset]) -> Dict[str, Any]:
    """
    Prevalence of correlation shift among a collection of domains.

    For each domain taken as source, the fraction of the other domains whose shift
    test rejects at 0.05.

    Args:
        domains: At least two domains of equal shape

    Returns:
        Dictionary with per-source ``rates`` and their ``average``
    """
    if len(domains) < 2:
        raise EmptyInputError("shift_rate needs at least two domains")
    scores = [per_sample_scores(d) for d in domains]
    rates: Dict[str, float] = {}
    for i, source in enumerate(domains):
        rejections: List[bool] = [
            mann_whitney_u(scores[i], scores[j]).reject for j in range(len(domains)) if j != i
        ]
        rates[source.domain_id] = float(np.mean(rejections))
    average = float(np.mean(list(rates.values())))
    logger.info(f"Correlation shift present in {average:.1%} of domain pairs")
    return {"rates": rates, "average": average}
