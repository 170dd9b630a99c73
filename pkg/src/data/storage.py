"""
MTS1 / MTSY dataset files.

``<stem>.mts`` holds magic ``MTS1``, u32 n, u32 D, u32 T and n*D*T float32
values; ``<stem>.mty`` holds magic ``MTSY``, u32 n and n u32 labels. All
little-endian. The domain id of a dataset read back is the file stem.
"""

import logging
import struct
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from src.data.dataset import MtsDataset
from src.errors import BadMagicError, ShapeMismatchError, ShapeOverflowError, TruncatedFileError

logger = logging.getLogger(__name__)

VALUES_MAGIC = b"MTS1"
LABELS_MAGIC = b"MTSY"
VALUES_SUFFIX = ".mts"
LABELS_SUFFIX = ".mty"
MAX_ELEMENTS = 2**31 - 1


def dataset_paths(path: Union[str, Path]) -> Tuple[Path, Path]:
    """Values and labels paths for a stem or for either file of the pair."""
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (VALUES_SUFFIX, LABELS_SUFFIX) else path
    return stem.with_name(stem.name + VALUES_SUFFIX), stem.with_name(stem.name + LABELS_SUFFIX)


def write_dataset(dataset: MtsDataset, path: Union[str, Path]) -> List[Path]:
    """
    Write a dataset as an MTS1 values file plus, when labelled, an MTSY labels file.

    Args:
        dataset: Dataset to write
        path: Stem or ``.mts`` path

    Returns:
        Paths written
    """
    values_path, labels_path = dataset_paths(path)
    values_path.parent.mkdir(parents=True, exist_ok=True)
    n, n_vars, length = dataset.values.shape
    header = VALUES_MAGIC + struct.pack("<III", n, n_vars, length)
    values_path.write_bytes(header + dataset.values.astype("<f4").tobytes())
    written = [values_path]
    if dataset.labels is not None:
        labels_path.write_bytes(LABELS_MAGIC + struct.pack("<I", n) + dataset.labels.astype("<u4").tobytes())
        written.append(labels_path)
    logger.info(f"Wrote {n} samples ({n_vars} x {length}) to {values_path}")
    return written


def _read_header(payload: bytes, magic: bytes, count: int, source: Path) -> Tuple[int, ...]:
    if payload[:4] != magic:
        raise BadMagicError(f"{source}: expected magic {magic!r}, found {payload[:4]!r}")
    size = 4 + 4 * count
    if len(payload) < size:
        raise TruncatedFileError(f"{source}: header needs {size} bytes, file has {len(payload)}")
    return struct.unpack(f"<{count}I", payload[4:size])


def read_dataset(path: Union[str, Path], n_classes: Optional[int] = None) -> MtsDataset:
    """
    Read a dataset written by ``write_dataset``; labels are read when the MTSY file exists.

    Args:
        path: Stem or ``.mts`` path
        n_classes: Optional label count; inferred from the labels otherwise

    Returns:
        MtsDataset with float32 values widened to float64
    """
    values_path, labels_path = dataset_paths(path)
    payload = values_path.read_bytes()
    n, n_vars, length = _read_header(payload, VALUES_MAGIC, 3, values_path)
    elements = n * n_vars * length
    if elements > MAX_ELEMENTS:
        raise ShapeOverflowError(f"{values_path}: {n} x {n_vars} x {length} values exceed {MAX_ELEMENTS}")
    expected = 16 + 4 * elements
    if len(payload) < expected:
        raise TruncatedFileError(f"{values_path}: expected {expected} bytes, found {len(payload)}")
    values = np.frombuffer(payload, dtype="<f4", count=elements, offset=16).astype(np.float64)
    values = values.reshape(n, n_vars, length)

    labels = None
    if labels_path.exists():
        label_payload = labels_path.read_bytes()
        (count,) = _read_header(label_payload, LABELS_MAGIC, 1, labels_path)
        if count != n:
            raise ShapeMismatchError(f"{labels_path}: {count} labels for {n} samples")
        if len(label_payload) < 8 + 4 * count:
            raise TruncatedFileError(f"{labels_path}: expected {8 + 4 * count} bytes, found {len(label_payload)}")
        labels = np.frombuffer(label_payload, dtype="<u4", count=count, offset=8).astype(np.int64)

    domain_id = values_path.name[: -len(VALUES_SUFFIX)]
    return MtsDataset(values, labels, domain_id, n_classes)


def list_domains(directory: Union[str, Path]) -> List[Path]:
    """Sorted ``.mts`` files of a directory."""
    return sorted(Path(directory).glob(f"*{VALUES_SUFFIX}"))
