"""
On-disk silhouette datasets

Two layouts are read and written:

    root/<subject>/<condition>/<view>/<frame_index>.pgm   binary PGM (P5) frames
    root/<subject>/<condition>/<view>.gsq                 packed sequence

Packed ``.gsq`` layout (little-endian): magic b"GSEQ1\\0", u16 frame count,
u16 height, u16 width, then the frames as raw uint8 bytes, row-major.
"""

import struct
from pathlib import Path
from typing import List, Optional

import cv2
import numpy as np

from src.data.silhouette import GaitDataset, SilhouetteSequence
from src.utils.exceptions import ConfigurationError, DatasetError
from src.utils.logger import get_logger, log_execution_time

logger = get_logger(__name__)

GSQ_MAGIC = b"GSEQ1\0"
GSQ_HEADER = struct.Struct('<HHH')
GSQ_SUFFIX = '.gsq'
PGM_SUFFIX = '.pgm'
FORMATS = ('gsq', 'pgm')


def encode_gsq(frames: np.ndarray) -> bytes:
    """Pack uint8 frames [T, H, W] into ``.gsq`` bytes"""
    frames = np.asarray(frames)
    if frames.ndim != 3 or frames.dtype != np.uint8:
        raise DatasetError(f"Packed sequences hold uint8 [T, H, W] frames, got {frames.dtype} {frames.shape}")
    if max(frames.shape) > 0xFFFF:
        raise DatasetError(f"Sequence extents {frames.shape} exceed the u16 header fields")
    return GSQ_MAGIC + GSQ_HEADER.pack(*frames.shape) + np.ascontiguousarray(frames).tobytes()


def decode_gsq(payload: bytes) -> np.ndarray:
    """
    Unpack ``.gsq`` bytes into uint8 frames [T, H, W]

    Raises:
        DatasetError: On bad magic, a short header or a payload size mismatch
    """
    head = len(GSQ_MAGIC) + GSQ_HEADER.size
    if payload[:len(GSQ_MAGIC)] != GSQ_MAGIC:
        raise DatasetError("Malformed .gsq header (bad magic)")
    if len(payload) < head:
        raise DatasetError("Malformed .gsq header (truncated)")
    count, height, width = GSQ_HEADER.unpack(payload[len(GSQ_MAGIC):head])
    if count < 1:
        raise DatasetError("Packed sequence declares zero frames")
    expected = count * height * width
    if len(payload) - head != expected:
        raise DatasetError(f"Packed sequence payload is {len(payload) - head} bytes, header implies {expected}")
    return np.frombuffer(payload, dtype=np.uint8, offset=head).reshape(count, height, width).copy()


def write_pgm(path: Path, frame: np.ndarray) -> Path:
    """Write one frame as binary PGM"""
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), np.ascontiguousarray(frame, dtype=np.uint8), [cv2.IMWRITE_PXM_BINARY, 1]):
        raise DatasetError(f"Could not write frame {path}")
    return path


def read_pgm(path: Path) -> np.ndarray:
    frame = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if frame is None:
        raise DatasetError(f"Could not read frame {path}")
    return frame


def _frame_index(path: Path) -> int:
    try:
        return int(path.stem)
    except ValueError as e:
        raise DatasetError(f"Frame file name is not an index: {path}") from e


def _load_pgm_sequence(directory: Path) -> np.ndarray:
    files = sorted(directory.glob(f"*{PGM_SUFFIX}"), key=_frame_index)
    if not files:
        raise DatasetError(f"No frames in {directory}")
    frames = [read_pgm(path) for path in files]
    sizes = {frame.shape for frame in frames}
    if len(sizes) != 1:
        raise DatasetError(f"Inconsistent frame sizes {sorted(sizes)} in {directory}")
    return np.stack(frames)


@log_execution_time(logger)
def load_dataset(root: Path) -> GaitDataset:
    """
    Index every sequence under ``root``

    An empty directory yields an empty dataset.

    Raises:
        DatasetError: If ``root`` is missing or a sequence is malformed
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"Dataset root not found: {root}")

    sequences: List[SilhouetteSequence] = []
    for subject_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for condition_dir in sorted(p for p in subject_dir.iterdir() if p.is_dir()):
            for entry in sorted(condition_dir.iterdir()):
                if entry.is_dir():
                    frames, view = _load_pgm_sequence(entry), entry.name
                elif entry.suffix == GSQ_SUFFIX:
                    frames, view = decode_gsq(entry.read_bytes()), entry.stem
                else:
                    continue
                sequences.append(SilhouetteSequence(
                    frames,
                    subject_id=subject_dir.name,
                    view_label=view,
                    condition_label=condition_dir.name,
                ))
    logger.info(f"Loaded {len(sequences)} sequences from {root}")
    return GaitDataset(sequences)


@log_execution_time(logger)
def save_dataset(dataset: GaitDataset, root: Path, fmt: str = 'gsq') -> Path:
    """
    Write a dataset under ``root`` in the packed or per-frame layout

    Args:
        dataset: Sequences to write
        root: Destination directory (created)
        fmt: 'gsq' (one packed file per sequence) or 'pgm' (one file per frame)

    Returns:
        The root directory
    """
    if fmt not in FORMATS:
        raise ConfigurationError(f"Unknown dataset format '{fmt}', expected one of {FORMATS}")
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for seq in dataset:
        base = root / seq.subject_id / seq.condition_label
        if fmt == 'gsq':
            base.mkdir(parents=True, exist_ok=True)
            (base / f"{seq.view_label}{GSQ_SUFFIX}").write_bytes(encode_gsq(seq.frames))
        else:
            width = max(3, len(str(len(seq))))
            for index, frame in enumerate(seq.frames):
                write_pgm(base / seq.view_label / f"{index:0{width}d}{PGM_SUFFIX}", frame)
    logger.info(f"Saved {len(dataset)} sequences to {root} ({fmt})")
    return root


def dataset_io(action: str, root: Path, dataset: Optional[GaitDataset] = None, fmt: str = 'gsq') -> GaitDataset:
    """
    Load or save a dataset index

    Args:
        action: 'load' or 'save'
        root: Dataset root directory
        dataset: Sequences to save (required for 'save')
        fmt: Layout used when saving

    Returns:
        The loaded or saved dataset
    """
    if action == 'load':
        return load_dataset(root)
    if action == 'save':
        if dataset is None:
            raise ConfigurationError("Saving requires a dataset")
        save_dataset(dataset, root, fmt)
        return dataset
    raise ConfigurationError(f"Unknown dataset action '{action}'")
