"""Single-file checkpoint format: JSON manifest plus named float64 tensors.

Layout: magic line, u32 manifest length, manifest JSON (architecture
hyperparameters, noise/domain dims, seed, step, rng state), u32 tensor
count, then per tensor a length-prefixed name, u8 rank, u64 dims and
little-endian float64 data.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"JGENCKPT1\n"


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, manifest: dict, tensors: list[tuple[str, np.ndarray]]) -> None:
    blob = bytearray()
    blob += MAGIC
    manifest_bytes = json.dumps(manifest, sort_keys=True).encode("utf-8")
    blob += struct.pack("<I", len(manifest_bytes))
    blob += manifest_bytes
    blob += struct.pack("<I", len(tensors))
    for name, array in tensors:
        arr = np.ascontiguousarray(array, dtype="<f8")
        name_bytes = name.encode("utf-8")
        blob += struct.pack("<H", len(name_bytes))
        blob += name_bytes
        blob += struct.pack("<B", arr.ndim)
        for dim in arr.shape:
            blob += struct.pack("<Q", dim)
        blob += arr.tobytes()
    Path(path).write_bytes(bytes(blob))


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    offset = len(MAGIC)

    def take(fmt: str):
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(raw):
            raise CheckpointError(f"{path}: truncated checkpoint")
        values = struct.unpack_from(fmt, raw, offset)
        offset += size
        return values

    (manifest_len,) = take("<I")
    manifest = json.loads(raw[offset:offset + manifest_len].decode("utf-8"))
    offset += manifest_len
    (n_tensors,) = take("<I")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(n_tensors):
        (name_len,) = take("<H")
        name = raw[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = take("<B")
        shape = tuple(take("<Q")[0] for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        size = count * 8
        if offset + size > len(raw):
            raise CheckpointError(f"{path}: truncated tensor data for {name!r}")
        data = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        offset += size
        tensors[name] = data.reshape(shape).astype(np.float64)
    return manifest, tensors


def require_manifest_match(manifest: dict, expected: dict, context: str) -> None:
    """Loud failure when architecture metadata disagrees."""
    for key, want in expected.items():
        got = manifest.get(key)
        if got != want:
            raise CheckpointError(
                f"{context}: manifest field {key!r} is {got!r}, expected {want!r}"
            )
