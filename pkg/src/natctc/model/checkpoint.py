"""Versioned binary parameter container.

Layout (little-endian)::

    b"NATC"  u32 version  u32 tensor_count
    per tensor: u32 name_len, name (UTF-8), u32 rank, u64 dims[rank], u8 dtype, payload
    u32 CRC32 of all payload bytes in file order

Besides the model tensors the container carries ``meta.*`` tensors (encoder
configuration, step counter, freeze flags) and ``adam.m.*`` / ``adam.v.*``
moments, so a saved store loads back identical.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .encoder import EncoderConfig, ModelError, ParamStore, tensor_shapes

MAGIC = b"NATC"
VERSION = 1
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8")}
TAGS = {v: k for k, v in DTYPES.items()}

_CONFIG_FIELDS = ("vocab_size", "d_model", "n_layers", "n_heads", "d_ff", "l_pos")


class CheckpointError(ModelError):
    pass


def _records(params: ParamStore) -> list[tuple[str, np.ndarray]]:
    cfg = params.config
    names = list(params.tensors)
    recs = [
        ("meta.config", np.array([getattr(cfg, f) for f in _CONFIG_FIELDS], dtype=np.int64)),
        ("meta.dropout", np.array([cfg.dropout], dtype=np.float64)),
        ("meta.step", np.array([params.step], dtype=np.int64)),
        ("meta.frozen", np.array([n in params.frozen for n in names], dtype=np.int64)),
    ]
    recs += list(params.tensors.items())
    recs += [(f"adam.m.{k}", v) for k, v in params.adam_m.items()]
    recs += [(f"adam.v.{k}", v) for k, v in params.adam_v.items()]
    return recs


def save_checkpoint(params: ParamStore, path: str | Path) -> None:
    recs = _records(params)
    head = bytearray(MAGIC + struct.pack("<II", VERSION, len(recs)))
    crc = 0
    for name, arr in recs:
        dt = arr.dtype.newbyteorder("<")
        if dt not in TAGS:
            raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
        raw = name.encode("utf-8")
        head += struct.pack("<I", len(raw)) + raw
        head += struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
        head += struct.pack("<B", TAGS[dt])
        payload = np.ascontiguousarray(arr, dtype=dt).tobytes()
        crc = zlib.crc32(payload, crc)
        head += payload
    head += struct.pack("<I", crc)
    Path(path).write_bytes(bytes(head))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"truncated checkpoint: wanted {n} bytes at offset {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path: str | Path, expect: EncoderConfig | None = None) -> ParamStore:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    r = _Reader(data)
    magic = r.take(4)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version, count = r.unpack("<II")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}, expected {VERSION}")
    recs: dict[str, np.ndarray] = {}
    crc = 0
    for _ in range(count):
        (n,) = r.unpack("<I")
        try:
            name = r.take(n).decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError(f"corrupt tensor name at offset {r.pos - n}") from None
        (rank,) = r.unpack("<I")
        dims = r.unpack(f"<{rank}Q")
        (tag,) = r.unpack("<B")
        if tag not in DTYPES:
            raise CheckpointError(f"{name}: unknown dtype tag {tag}")
        dt = DTYPES[tag]
        size = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
        payload = r.take(size)
        crc = zlib.crc32(payload, crc)
        recs[name] = np.frombuffer(payload, dtype=dt).reshape(dims).astype(dt.newbyteorder("="))
    (stored,) = r.unpack("<I")
    if stored != crc:
        raise CheckpointError(f"CRC mismatch: stored {stored:#010x}, computed {crc:#010x}")
    if r.pos != len(data):
        raise CheckpointError("trailing bytes after checkpoint")

    try:
        cfg = EncoderConfig(
            **dict(zip(_CONFIG_FIELDS, (int(v) for v in recs.pop("meta.config")))),
            dropout=float(recs.pop("meta.dropout")[0]),
        )
        step = int(recs.pop("meta.step")[0])
        frozen_flags = recs.pop("meta.frozen")
    except KeyError as e:
        raise CheckpointError(f"missing metadata record {e}") from None
    if expect is not None and expect != cfg:
        raise CheckpointError(f"checkpoint configuration {cfg} does not match expected {expect}")

    shapes = tensor_shapes(cfg)
    tensors = {}
    for name, shape in shapes.items():
        if name not in recs:
            raise CheckpointError(f"missing tensor {name}")
        t = recs.pop(name)
        if t.shape != shape:
            raise CheckpointError(f"{name}: stored shape {t.shape}, configuration requires {shape}")
        tensors[name] = t
    adam_m = {k[len("adam.m."):]: v for k, v in recs.items() if k.startswith("adam.m.")}
    adam_v = {k[len("adam.v."):]: v for k, v in recs.items() if k.startswith("adam.v.")}
    unknown = set(recs) - {f"adam.m.{k}" for k in adam_m} - {f"adam.v.{k}" for k in adam_v}
    if unknown:
        raise CheckpointError(f"unexpected records {sorted(unknown)}")
    if len(frozen_flags) != len(shapes):
        raise CheckpointError("freeze flag count does not match tensor count")
    frozen = {n for n, f in zip(shapes, frozen_flags) if f}
    return ParamStore(cfg, tensors, frozen, step, adam_m, adam_v)
