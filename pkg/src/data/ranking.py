"""
Ranking of ordered domain pairs by class-conditional distance.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src.data.dataset import MtsDataset
from src.errors import EmptyInputError, NoSharedLabelsError
from src.stats.distance import domain_pair_distance

logger = logging.getLogger(__name__)

MAX_GROUPS = 10


@dataclass(frozen=True)
class PairDistance:
    source: str
    target: str
    distance: float

    def to_dict(self) -> Dict[str, Any]:
        return {"source": self.source, "target": self.target, "distance": self.distance}


@dataclass
class PairRanking:
    """Pairs in ascending distance, their contiguous groups and one representative per group."""

    pairs: List[PairDistance]
    groups: List[List[PairDistance]] = field(default_factory=list)

    @property
    def representatives(self) -> List[PairDistance]:
        return [group[len(group) // 2] for group in self.groups]


def rank_domain_pairs(
    domains: Sequence[MtsDataset],
    projections: int = 64,
    seed: int = 0,
    missing_label_penalty: Optional[float] = None,
    normalize: bool = False,
) -> PairRanking:
    """
    Score every ordered pair of distinct domains and sort by distance.

    Args:
        domains: At least two labelled domains
        projections: Sliced Wasserstein directions per class
        seed: Projection seed
        missing_label_penalty: Passed through to domain_pair_distance
        normalize: Z-score samples before scoring

    Returns:
        PairRanking split into min(10, pair count) near-equal groups
    """
    if len(domains) < 2:
        raise EmptyInputError(f"Ranking needs at least two domains, got {len(domains)}")

    scored: List[PairDistance] = []
    for source in domains:
        for target in domains:
            if source is target:
                continue
            try:
                distance = domain_pair_distance(source, target, projections, seed, missing_label_penalty, normalize)
            except NoSharedLabelsError as e:
                logger.warning(f"Skipping pair {source.domain_id} -> {target.domain_id}: {str(e)}")
                continue
            scored.append(PairDistance(source.domain_id, target.domain_id, distance))

    scored.sort(key=lambda pair: pair.distance)
    groups: List[List[PairDistance]] = []
    if scored:
        for chunk in np.array_split(np.arange(len(scored)), min(MAX_GROUPS, len(scored))):
            groups.append([scored[i] for i in chunk])
    logger.info(f"Ranked {len(scored)} domain pairs into {len(groups)} groups")
    return PairRanking(scored, groups)
