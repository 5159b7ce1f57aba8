"""Binary snapshot container for model and critic weights.

Layout: magic ``NEPF``, u32 version, u64 JSON-config length + JSON bytes,
then tensors sorted by name, each as [u16 name length, name bytes,
u8 rank, u32 dims..., float32 little-endian data]. Loading is all-or-
nothing; any mismatch raises before any state is exposed.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct

import numpy as np
import torch

from .errors import CorruptionError

MAGIC = b"NEPF"
VERSION = 1


def config_bytes(config: dict) -> bytes:
    return json.dumps(config, sort_keys=True, separators=(",", ":")).encode()


def config_hash(config: dict) -> str:
    return hashlib.sha256(config_bytes(config)).hexdigest()


def write_container(path: str, config: dict, tensors: dict[str, np.ndarray]) -> str:
    blob = config_bytes(config)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name in sorted(tensors):
            arr = np.ascontiguousarray(tensors[name], dtype=np.float32)
            encoded = name.encode()
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<f4").tobytes())
    return hashlib.sha256(blob).hexdigest()


def _read_exact(fh: io.BufferedReader, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CorruptionError(f"truncated checkpoint while reading {what}")
    return data


def read_container(path: str) -> tuple[dict, dict[str, np.ndarray], str]:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != MAGIC:
            raise CorruptionError("bad magic: not a checkpoint file")
        version = struct.unpack("<I", _read_exact(fh, 4, "version"))[0]
        if version != VERSION:
            raise CorruptionError(f"unsupported checkpoint version {version}")
        blob_len = struct.unpack("<Q", _read_exact(fh, 8, "config length"))[0]
        blob = _read_exact(fh, blob_len, "config")
        try:
            config = json.loads(blob)
        except json.JSONDecodeError as exc:
            raise CorruptionError(f"unparseable checkpoint config: {exc}") from exc
        tensors: dict[str, np.ndarray] = {}
        while True:
            head = fh.read(2)
            if not head:
                break
            if len(head) != 2:
                raise CorruptionError("truncated checkpoint in tensor table")
            name_len = struct.unpack("<H", head)[0]
            name = _read_exact(fh, name_len, "tensor name").decode()
            rank = struct.unpack("<B", _read_exact(fh, 1, "tensor rank"))[0]
            dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, "tensor dims"))
            numel = int(np.prod(dims)) if rank else 1
            raw = _read_exact(fh, 4 * numel, f"tensor data for {name}")
            tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
    return config, tensors, hashlib.sha256(blob).hexdigest()


def container_size(config: dict, shapes: dict[str, tuple[int, ...]]) -> int:
    """Exact on-disk size the container will occupy."""
    size = 4 + 4 + 8 + len(config_bytes(config))
    for name, shape in shapes.items():
        numel = 1
        for s in shape:
            numel *= s
        size += 2 + len(name.encode()) + 1 + 4 * len(shape) + 4 * numel
    return size


def state_tensors(module: torch.nn.Module) -> dict[str, np.ndarray]:
    return {name: p.detach().numpy() for name, p in module.named_parameters()}


def load_state(module: torch.nn.Module, tensors: dict[str, np.ndarray]) -> None:
    """Copy tensors into a freshly built module, validating names and counts."""
    expected = {name: tuple(p.shape) for name, p in module.named_parameters()}
    missing = sorted(set(expected) - set(tensors))
    extra = sorted(set(tensors) - set(expected))
    if missing or extra:
        raise CorruptionError(f"tensor name mismatch: missing={missing} extra={extra}")
    with torch.no_grad():
        for name, p in module.named_parameters():
            arr = tensors[name]
            if tuple(arr.shape) != tuple(p.shape):
                raise CorruptionError(
                    f"tensor {name}: stored shape {tuple(arr.shape)} != expected {tuple(p.shape)}")
            p.copy_(torch.from_numpy(arr))
