"""Little-endian binary containers for banks, feature matrices and checkpoints.

Layout: 8-byte ASCII magic, then uint64 header fields, then float64 payload.
"""
import struct

import numpy as np

from .errors import ConfigurationError

BANK_MAGIC = b"LLPBANK1"
NET_MAGIC = b"LLPNET01"


def write_matrix(path, matrix, magic=BANK_MAGIC):
    matrix = np.ascontiguousarray(matrix, dtype="<f8")
    if matrix.ndim != 2:
        raise ConfigurationError("expected a 2-D matrix")
    n, d = matrix.shape
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<QQ", n, d))
        fh.write(matrix.tobytes(order="C"))


def read_matrix(path, magic=BANK_MAGIC):
    with open(path, "rb") as fh:
        head = fh.read(8)
        if head != magic:
            raise ConfigurationError(f"{path}: bad magic {head!r}, expected {magic!r}")
        n, d = struct.unpack("<QQ", fh.read(16))
        payload = fh.read()
    if len(payload) != 8 * n * d:
        raise ConfigurationError(f"{path}: payload has {len(payload)} bytes, expected {8 * n * d}")
    return np.frombuffer(payload, dtype="<f8").reshape(n, d).astype(np.float64)


def write_checkpoint(path, layer_sizes, params):
    """Network checkpoint: magic, uint64 count, uint64 sizes, float64 params."""
    params = np.ascontiguousarray(params, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(NET_MAGIC)
        fh.write(struct.pack("<Q", len(layer_sizes)))
        fh.write(struct.pack(f"<{len(layer_sizes)}Q", *layer_sizes))
        fh.write(params.tobytes())


def read_checkpoint(path):
    with open(path, "rb") as fh:
        head = fh.read(8)
        if head != NET_MAGIC:
            raise ConfigurationError(f"{path}: bad magic {head!r}, expected {NET_MAGIC!r}")
        (count,) = struct.unpack("<Q", fh.read(8))
        sizes = list(struct.unpack(f"<{count}Q", fh.read(8 * count)))
        params = np.frombuffer(fh.read(), dtype="<f8").astype(np.float64)
    return sizes, params
