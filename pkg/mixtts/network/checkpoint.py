"""PTCK checkpoint container.

Layout (little-endian):
    magic b'PTCK' | uint32 version | uint32 header_len | header JSON
    | uint32 tensor_count | per tensor: uint32 name_len, name, uint32 ndim,
      uint32 dims[ndim], float32 values
The header JSON holds the ModelConfig and free-form metadata (inventory,
feature normaliser, training provenance).
"""
import hashlib
import json
import logging
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Optional, Union

import numpy as np

from mixtts.autodiff.tensor import Tensor
from mixtts.errors import ConfigurationError, DataError
from mixtts.network.config import ModelConfig
from mixtts.network.parameters import check_shapes, from_numpy, parameter_shapes

logger = logging.getLogger(__name__)

MAGIC = b'PTCK'
VERSION = 1
_U32 = struct.Struct('<I')


# PUBLIC_INTERFACE
@dataclass
class Checkpoint:
    """Model configuration, parameter arrays and metadata."""
    config: ModelConfig
    params: Dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)

    def tensors(self, dtype: Optional[type] = None) -> Dict[str, Tensor]:
        return from_numpy(self.params, dtype)


def _as_array(value) -> np.ndarray:
    return value.data if isinstance(value, Tensor) else np.asarray(value)


# PUBLIC_INTERFACE
def checkpoint_bytes(config: ModelConfig, params: Mapping[str, object], metadata: Optional[dict] = None) -> bytes:
    """Serialise parameters in ``parameter_shapes`` order (deterministic bytes)."""
    check_shapes(params, config)
    header = json.dumps({'config': config.to_dict(), 'metadata': metadata or {}},
                        sort_keys=True).encode('utf-8')
    chunks = [MAGIC, _U32.pack(VERSION), _U32.pack(len(header)), header]
    names = list(parameter_shapes(config))
    chunks.append(_U32.pack(len(names)))
    for name in names:
        values = _as_array(params[name])
        encoded = name.encode('utf-8')
        chunks.append(_U32.pack(len(encoded)))
        chunks.append(encoded)
        chunks.append(_U32.pack(values.ndim))
        chunks.append(struct.pack(f'<{values.ndim}I', *values.shape))
        chunks.append(np.ascontiguousarray(values, dtype='<f4').tobytes())
    return b''.join(chunks)


# PUBLIC_INTERFACE
def save_checkpoint(path: Union[str, Path], config: ModelConfig, params: Mapping[str, object],
                    metadata: Optional[dict] = None) -> str:
    """Write a checkpoint and return the sha256 of its bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = checkpoint_bytes(config, params, metadata)
    path.write_bytes(payload)
    digest = hashlib.sha256(payload).hexdigest()
    logger.info('saved checkpoint %s (%d bytes, sha256 %s)', path, len(payload), digest[:12])
    return digest


def file_digest(path: Union[str, Path]) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class _Reader:
    def __init__(self, raw: bytes, source: str):
        self.raw = raw
        self.offset = 0
        self.source = source

    def take(self, count: int) -> bytes:
        if self.offset + count > len(self.raw):
            raise DataError(f'{self.source}: truncated checkpoint at byte {self.offset}')
        chunk = self.raw[self.offset:self.offset + count]
        self.offset += count
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]


# PUBLIC_INTERFACE
def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """Read a checkpoint and validate every tensor shape against its config.

    Raises:
        DataError: for a bad magic, version or truncated payload
        ConfigurationError: for tensors that do not match the stored config
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f'checkpoint {path} does not exist')
    reader = _Reader(path.read_bytes(), str(path))
    magic = reader.take(4)
    if magic != MAGIC:
        raise DataError(f'{path}: bad magic {magic!r}')
    version = reader.u32()
    if version != VERSION:
        raise DataError(f'{path}: unsupported checkpoint version {version}')
    try:
        header = json.loads(reader.take(reader.u32()).decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f'{path}: corrupt checkpoint header') from exc
    config = ModelConfig.from_dict(header['config'])

    params: Dict[str, np.ndarray] = OrderedDict()
    for _ in range(reader.u32()):
        name = reader.take(reader.u32()).decode('utf-8')
        ndim = reader.u32()
        shape = struct.unpack(f'<{ndim}I', reader.take(4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        params[name] = np.frombuffer(reader.take(4 * count), dtype='<f4').reshape(shape).astype(np.float32)
    if reader.offset != len(reader.raw):
        raise DataError(f'{path}: {len(reader.raw) - reader.offset} trailing bytes')
    try:
        check_shapes(params, config)
    except ConfigurationError as exc:
        raise ConfigurationError(f'{path}: {exc}') from exc
    return Checkpoint(config=config, params=params, metadata=header.get('metadata', {}))
