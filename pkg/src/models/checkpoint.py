"""
CKPT1 checkpoint files.

Layout (little-endian): magic ``CKPT1``, u32 record count, then per record
u32 name length, UTF-8 name, u32 ndim, ndim x u32 extents and float64 data.
Model hyper-parameters travel as the float record ``__meta__``.
"""

import logging
import struct
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from src.errors import BadMagicError, ShapeMismatchError, TruncatedFileError
from src.models.adapters import ADAPTER_KINDS, AdapterSpec, build_adapters
from src.models.backbone import BackboneConfig, BackboneModel
from src.models.layers import Module

logger = logging.getLogger(__name__)

MAGIC = b"CKPT1"
META_KEY = "__meta__"

_META_FIELDS = ("n_vars", "n_classes", "d_model", "n_blocks", "n_heads", "d_ff", "window_len", "max_len")


def save_checkpoint(path: Union[str, Path], tensors: Dict[str, np.ndarray]) -> None:
    chunks: List[bytes] = [MAGIC, struct.pack("<I", len(tensors))]
    for name, array in tensors.items():
        encoded = name.encode("utf-8")
        data = np.ascontiguousarray(array, dtype="<f8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}I", *data.shape))
        chunks.append(data.tobytes())
    Path(path).write_bytes(b"".join(chunks))
    logger.info(f"Wrote checkpoint with {len(tensors)} records to {path}")


class _Reader:
    def __init__(self, payload: bytes, source: str) -> None:
        self.payload = payload
        self.offset = 0
        self.source = source

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.payload):
            raise TruncatedFileError(f"{self.source} ends after {len(self.payload)} bytes, needed {self.offset + size}")
        chunk = self.payload[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def u32(self, count: int = 1) -> Tuple[int, ...]:
        return struct.unpack(f"<{count}I", self.take(4 * count))


def load_checkpoint(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    payload = Path(path).read_bytes()
    if payload[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"{path} is not a CKPT1 checkpoint")
    reader = _Reader(payload, str(path))
    reader.take(len(MAGIC))
    (count,) = reader.u32()
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.u32()
        name = reader.take(name_len).decode("utf-8")
        (ndim,) = reader.u32()
        shape = reader.u32(ndim) if ndim else ()
        size = int(np.prod(shape)) if shape else 1
        tensors[name] = np.frombuffer(reader.take(8 * size), dtype="<f8").astype(np.float64).reshape(shape)
    return tensors


def save_model(path: Union[str, Path], model: BackboneModel, adapters: List[Module], spec: AdapterSpec) -> None:
    """Store backbone, heads and adapters together with the hyper-parameters needed to rebuild them."""
    config = model.config
    meta = [float(getattr(config, name)) for name in _META_FIELDS]
    meta += [float(ADAPTER_KINDS.index(spec.kind)), float(spec.kernel_size), float(spec.rank), float(spec.length)]
    tensors: Dict[str, np.ndarray] = {META_KEY: np.array(meta)}
    tensors.update({f"model.{name}": value for name, value in model.state_dict().items()})
    for k, adapter in enumerate(adapters):
        tensors.update({f"adapter.{k}.{name}": value for name, value in adapter.state_dict().items()})
    save_checkpoint(path, tensors)


def load_model(path: Union[str, Path]) -> Tuple[BackboneModel, List[Module], AdapterSpec]:
    tensors = load_checkpoint(path)
    if META_KEY not in tensors:
        raise ShapeMismatchError(f"{path} has no {META_KEY} record")
    meta = [int(v) for v in tensors[META_KEY]]
    if len(meta) != len(_META_FIELDS) + 4:
        raise ShapeMismatchError(f"{path}: malformed {META_KEY} record of length {len(meta)}")
    config = BackboneConfig(**dict(zip(_META_FIELDS, meta)))
    kind, kernel_size, rank, length = meta[len(_META_FIELDS) :]
    if not 0 <= kind < len(ADAPTER_KINDS):
        raise ShapeMismatchError(f"{path}: unknown adapter kind index {kind}")
    spec = AdapterSpec(ADAPTER_KINDS[kind], kernel_size, rank, length)

    model = BackboneModel(config)
    model.load_state_dict({name[len("model.") :]: v for name, v in tensors.items() if name.startswith("model.")})
    adapters = build_adapters(spec, config)
    for k, adapter in enumerate(adapters):
        prefix = f"adapter.{k}."
        adapter.load_state_dict({name[len(prefix) :]: v for name, v in tensors.items() if name.startswith(prefix)})
    logger.info(f"Loaded {spec.kind} model from {path}")
    return model, adapters, spec
