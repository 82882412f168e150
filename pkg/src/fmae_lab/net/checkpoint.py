"""Binary checkpoints: header + little-endian float64 parameter tensors.

Layout::

    8 bytes   magic b"FMAENET1"
    32 bytes  sha256 digest of the network spec (raw bytes)
    8 bytes   int64 seed
    8 bytes   int64 optimizer step
    4 bytes   uint32 tensor count
    then per tensor: uint32 ndim, ndim * uint32 dims, float64 data
"""
import struct

import numpy as np

from ..exceptions import DigestMismatch
from .model import ParameterSet

MAGIC = b"FMAENET1"


def save_checkpoint(path, spec, params, step=0):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes.fromhex(spec.digest()))
        fh.write(struct.pack("<qqI", params.rng_seed, step, len(params.tensors)))
        for t in params.tensors:
            fh.write(struct.pack("<I", t.ndim))
            fh.write(struct.pack(f"<{t.ndim}I", *t.shape))
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


def load_checkpoint(path, spec):
    """Return ``(params, step)``; refuses checkpoints written for another spec."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise ValueError(f"{path}: not a network checkpoint")
    if blob[8:40] != bytes.fromhex(spec.digest()):
        raise DigestMismatch(f"{path}: checkpoint was written for a different network spec")
    seed, step, count = struct.unpack_from("<qqI", blob, 40)
    off = 40 + struct.calcsize("<qqI")
    tensors = []
    for _ in range(count):
        (ndim,) = struct.unpack_from("<I", blob, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}I", blob, off)
        off += 4 * ndim
        n = int(np.prod(shape))
        tensors.append(np.frombuffer(blob, dtype="<f8", count=n, offset=off).reshape(shape).copy())
        off += 8 * n
    return ParameterSet(tensors, seed), step
