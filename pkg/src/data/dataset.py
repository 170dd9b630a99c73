"""
In-memory containers for multivariate time series domains.
"""

import logging
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence

import numpy as np

from src.errors import EmptyDatasetError, LabelRangeError, ShapeMismatchError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MtsSample:
    """One D x T series; ``label`` is None for unlabeled use."""

    values: np.ndarray
    label: Optional[int] = None

    @property
    def n_vars(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]


class MtsDataset:
    """
    A domain: ``n`` series stacked as an ``(n, D, T)`` array with optional labels.

    Args:
        values: Array of shape (n, D, T)
        labels: Optional integer labels of shape (n,)
        domain_id: Name of the domain (file stem for datasets read from disk)
        n_classes: Label count; inferred from labels when omitted
    """

    def __init__(
        self,
        values: np.ndarray,
        labels: Optional[np.ndarray] = None,
        domain_id: str = "domain",
        n_classes: Optional[int] = None,
    ) -> None:
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 3:
            raise ShapeMismatchError(f"Dataset values must be (n, D, T), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ShapeMismatchError(f"Dataset {domain_id} contains non-finite values")
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            if labels.shape != (values.shape[0],):
                raise ShapeMismatchError(f"Expected {values.shape[0]} labels, got shape {labels.shape}")
            if n_classes is None:
                n_classes = int(labels.max()) + 1 if labels.size else 0
            if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
                raise LabelRangeError(f"Labels of {domain_id} outside [0, {n_classes})")
        self.values = values
        self.labels = labels
        self.domain_id = domain_id
        self.n_classes = n_classes or 0

    @classmethod
    def from_samples(
        cls, samples: Sequence[MtsSample], domain_id: str = "domain", n_classes: Optional[int] = None
    ) -> "MtsDataset":
        if not samples:
            raise EmptyDatasetError(f"No samples for domain {domain_id}")
        shapes = {s.values.shape for s in samples}
        if len(shapes) != 1:
            raise ShapeMismatchError(f"Samples of {domain_id} have mixed shapes {sorted(shapes)}")
        labelled = [s.label is not None for s in samples]
        if any(labelled) and not all(labelled):
            raise ShapeMismatchError(f"Domain {domain_id} mixes labelled and unlabelled samples")
        labels = np.array([s.label for s in samples]) if all(labelled) else None
        return cls(np.stack([s.values for s in samples]), labels, domain_id, n_classes)

    def __len__(self) -> int:
        return self.values.shape[0]

    def __iter__(self) -> Iterator[MtsSample]:
        return iter(self.samples)

    @property
    def samples(self) -> List[MtsSample]:
        if self.labels is None:
            return [MtsSample(v) for v in self.values]
        return [MtsSample(v, int(y)) for v, y in zip(self.values, self.labels)]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    @property
    def length(self) -> int:
        return self.values.shape[2]

    @property
    def is_labelled(self) -> bool:
        return self.labels is not None

    def label_set(self) -> List[int]:
        if self.labels is None:
            return []
        return sorted(int(y) for y in np.unique(self.labels))

    def class_values(self, label: int) -> np.ndarray:
        """Samples of one class as an (n_c, D, T) array."""
        if self.labels is None:
            raise LabelRangeError(f"Domain {self.domain_id} is unlabelled")
        return self.values[self.labels == label]

    def unlabelled(self) -> np.ndarray:
        """The raw values with labels stripped, the only view adaptation receives of a target."""
        return self.values.copy()

    def require_non_empty(self) -> None:
        if len(self) == 0:
            raise EmptyDatasetError(f"Domain {self.domain_id} has no samples")
