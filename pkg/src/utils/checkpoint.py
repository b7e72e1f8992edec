"""
GFCKPT1 checkpoint codec

Layout (all integers little-endian):
    magic       b"GFCKPT1\\0"
    count       u32
    count x entry:
        name length u32, name UTF-8 bytes
        dtype code  u8   (1=float32, 2=float64, 3=int64, 4=uint8)
        rank        u8
        extents     rank x u64
        payload     raw little-endian values, row-major

The run configuration travels as a uint8 JSON tensor named ``__meta__.config``.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from src.utils.exceptions import CheckpointError
from src.utils.logger import get_logger

logger = get_logger(__name__)

MAGIC = b"GFCKPT1\0"
META_PREFIX = "__meta__."
CONFIG_KEY = f"{META_PREFIX}config"

DTYPE_CODES = {('f', 4): 1, ('f', 8): 2, ('i', 8): 3, ('u', 1): 4}
CODE_DTYPES = {1: np.dtype('<f4'), 2: np.dtype('<f8'), 3: np.dtype('<i8'), 4: np.dtype('u1')}


@dataclass
class Checkpoint:
    """Decoded checkpoint: named arrays plus the embedded run configuration"""
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)
    config: Optional[Dict[str, Any]] = None

    @property
    def parameters(self) -> Dict[str, np.ndarray]:
        """Entries excluding metadata"""
        return {name: value for name, value in self.tensors.items() if not name.startswith(META_PREFIX)}


def encode_checkpoint(tensors: Dict[str, np.ndarray], config: Optional[Dict[str, Any]] = None) -> bytes:
    """
    Serialize named arrays (and an optional config) to GFCKPT1 bytes

    Raises:
        CheckpointError: On unsupported dtypes or oversized entries
    """
    entries = dict(tensors)
    if config is not None:
        entries[CONFIG_KEY] = np.frombuffer(json.dumps(config, sort_keys=True).encode('utf-8'), dtype=np.uint8)

    chunks = [MAGIC, struct.pack('<I', len(entries))]
    for name, value in entries.items():
        array = np.asarray(value)
        key = (array.dtype.kind, array.dtype.itemsize)
        if key not in DTYPE_CODES:
            raise CheckpointError(f"Unsupported dtype {array.dtype} for '{name}'")
        if array.ndim > 255:
            raise CheckpointError(f"Rank {array.ndim} of '{name}' exceeds the format limit")
        encoded_name = name.encode('utf-8')
        chunks.append(struct.pack('<I', len(encoded_name)))
        chunks.append(encoded_name)
        chunks.append(struct.pack('<BB', DTYPE_CODES[key], array.ndim))
        chunks.append(struct.pack(f'<{array.ndim}Q', *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype=CODE_DTYPES[DTYPE_CODES[key]]).tobytes())
    return b"".join(chunks)


def decode_checkpoint(payload: bytes) -> Checkpoint:
    """
    Parse GFCKPT1 bytes

    Raises:
        CheckpointError: On bad magic, unknown dtype code, truncation, a
            non-UTF-8 tensor name or an unreadable embedded configuration
    """
    view = memoryview(payload)
    if bytes(view[:len(MAGIC)]) != MAGIC:
        raise CheckpointError("Not a GFCKPT1 checkpoint (bad magic)")
    offset = len(MAGIC)

    def take(size: int) -> memoryview:
        nonlocal offset
        if offset + size > len(view):
            raise CheckpointError("Checkpoint is truncated")
        chunk = view[offset:offset + size]
        offset += size
        return chunk

    (count,) = struct.unpack('<I', take(4))
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_length,) = struct.unpack('<I', take(4))
        try:
            name = bytes(take(name_length)).decode('utf-8')
        except UnicodeDecodeError as e:
            raise CheckpointError(f"Tensor name at byte {offset - name_length} is not valid UTF-8") from e
        code, rank = struct.unpack('<BB', take(2))
        if code not in CODE_DTYPES:
            raise CheckpointError(f"Unknown dtype code {code} for '{name}'")
        shape = struct.unpack(f'<{rank}Q', take(8 * rank))
        dtype = CODE_DTYPES[code]
        size = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        tensors[name] = np.frombuffer(take(size), dtype=dtype).reshape(shape).astype(dtype.newbyteorder('='))
    if offset != len(view):
        raise CheckpointError(f"{len(view) - offset} trailing bytes after the last entry")

    config = None
    if CONFIG_KEY in tensors:
        try:
            config = json.loads(tensors[CONFIG_KEY].tobytes().decode('utf-8'))
        except (UnicodeDecodeError, ValueError) as e:
            raise CheckpointError(f"Embedded configuration is not valid JSON: {e}") from e
    return Checkpoint(tensors, config)


def save_checkpoint(path: Path, tensors: Dict[str, np.ndarray], config: Optional[Dict[str, Any]] = None) -> Path:
    """Write a checkpoint file, creating parent directories"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(tensors, config))
    logger.info(f"Checkpoint saved: {path} ({len(tensors)} tensors)")
    return path


def load_checkpoint(path: Path) -> Checkpoint:
    """Read a checkpoint file"""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"Checkpoint not found: {path}")
    checkpoint = decode_checkpoint(path.read_bytes())
    logger.debug(f"Loaded checkpoint {path} with {len(checkpoint.tensors)} entries")
    return checkpoint
