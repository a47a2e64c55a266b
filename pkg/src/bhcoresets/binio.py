"""Flat binary persistence for sample and feature matrices.

Layout: an 8-byte magic string, a little-endian header
``(version: u32, rows: u64, cols: u64, seed: i64)``, then the matrix as
row-major float64. The same layout serves parameter samples, feature
matrices, and Gram matrices; only the magic differs.
"""

import struct

import numpy as np

from .errors import InputError, ParseError

MAGIC_SAMPLES = b"BHCSAMP1"
MAGIC_FEATURES = b"BHCFEAT1"
MAGIC_GRAM = b"BHCGRAM1"

_HEADER = struct.Struct("<8sIQQq")
_VERSION = 1


def write_matrix(path, magic: bytes, data: np.ndarray, seed: int) -> None:
    data = np.ascontiguousarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise InputError("binary layout stores 2-D matrices only")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(magic, _VERSION, data.shape[0], data.shape[1], int(seed)))
        fh.write(data.tobytes(order="C"))


def read_matrix(path, magic: bytes):
    """Returns (data, seed). Raises ParseError on wrong magic or truncation."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise ParseError(f"{path}: truncated header")
        got_magic, version, rows, cols, seed = _HEADER.unpack(head)
        if got_magic != magic:
            raise ParseError(f"{path}: bad magic {got_magic!r}, expected {magic!r}")
        if version != _VERSION:
            raise ParseError(f"{path}: unsupported version {version}")
        payload = fh.read(8 * rows * cols)
        if len(payload) != 8 * rows * cols:
            raise ParseError(f"{path}: truncated payload")
    data = np.frombuffer(payload, dtype="<f8").reshape(rows, cols).copy()
    return data, int(seed)
