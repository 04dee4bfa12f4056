"""
IDX archive reader and writer.

Layout (big endian): two zero bytes, a type code (0x08 = unsigned byte), the
number of dimensions, one u32 size per dimension, then the raw payload.
"""

import logging
import os
import struct
from typing import Optional, Tuple

import numpy as np

from scoreag.core.exception_handlers import (
    BadMagicError,
    DatasetError,
    TruncatedFileError,
    UnsupportedTypeCodeError,
)

# Set up logger
logger = logging.getLogger(__name__)

TYPE_UBYTE = 0x08


def _parse(raw: bytes, path: Optional[str]) -> Tuple[Tuple[int, ...], bytes]:
    if len(raw) < 4:
        raise TruncatedFileError(path, 4, len(raw), section="header")
    if raw[0] != 0 or raw[1] != 0:
        raise BadMagicError(f"Bad IDX magic bytes {raw[0]:#04x} {raw[1]:#04x}", path)
    if raw[2] != TYPE_UBYTE:
        raise UnsupportedTypeCodeError(f"Unsupported IDX type code {raw[2]:#04x}", path, {"type_code": raw[2]})
    ndim = raw[3]
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise TruncatedFileError(path, header_len, len(raw), section="header")
    dims = struct.unpack(f">{ndim}I", raw[4:header_len])
    expected = int(np.prod(dims)) if ndim else 1
    payload = raw[header_len:]
    if len(payload) < expected:
        raise TruncatedFileError(path, expected, len(payload))
    return tuple(dims), payload[:expected]


def read_idx_bytes(path: str) -> np.ndarray:
    """Raw unsigned-byte contents of an IDX file, shaped by its header."""
    with open(path, "rb") as f:
        raw = f.read()
    dims, payload = _parse(raw, path)
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims).copy()


def read_idx(path: str) -> np.ndarray:
    """
    Parse an IDX file of unsigned bytes and rescale it to [0, 1].

    Args:
        path: File to read

    Returns:
        float64 array with the declared dimensions, values ``byte / 255``

    Raises:
        BadMagicError: If the first two bytes are not zero
        UnsupportedTypeCodeError: If the type code is not 0x08
        TruncatedFileError: If the header or payload is shorter than declared
    """
    return read_idx_bytes(path).astype(np.float64) / 255.0


def write_idx(path: str, array: np.ndarray) -> None:
    """
    Write an array as an unsigned-byte IDX file.

    Float arrays are taken to be in [0, 1] and scaled by 255 with rounding;
    integer arrays are written as-is and must fit in a byte.
    """
    a = np.asarray(array)
    if np.issubdtype(a.dtype, np.floating):
        data = np.rint(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)
    else:
        if a.size and (a.min() < 0 or a.max() > 255):
            raise DatasetError("Integer IDX payload must fit in an unsigned byte", {"path": path})
        data = a.astype(np.uint8)
    header = bytes([0, 0, TYPE_UBYTE, data.ndim]) + struct.pack(f">{data.ndim}I", *data.shape)
    with open(path, "wb") as f:
        f.write(header)
        f.write(data.tobytes(order="C"))


def load_idx_dataset(images_path: str, labels_path: str, num_classes: Optional[int] = None):
    """
    Build a dataset from an image archive and a label archive.

    Images of shape (n, H, W) gain a channel axis; 0-based labels are shifted
    to 1..K.
    """
    from scoreag.services.data_service import Dataset

    for p in (images_path, labels_path):
        if not os.path.exists(p):
            raise DatasetError(f"IDX file not found: {p}", {"path": p})
    images = read_idx(images_path)
    labels = read_idx_bytes(labels_path).astype(np.int64).reshape(-1)
    if images.ndim == 3:
        images = images[:, None, :, :]
    if images.shape[0] != labels.shape[0]:
        raise DatasetError(
            f"Image and label counts differ: {images.shape[0]} vs {labels.shape[0]}",
            {"images": images_path, "labels": labels_path},
        )
    k = num_classes or int(labels.max()) + 1
    logger.info(f"Loaded IDX dataset: {images.shape[0]} images of shape {images.shape[1:]}, K={k}")
    return Dataset(images, labels + 1, k, provenance="idx-file")
