"""Model weight files.

Binary layout (all integers little-endian)::

    b"CTXW" u32 version
    u32 field_count, then per field: u32 name_len, name, u8 kind (0 int, 1 real), 8-byte value
    u32 tensor_count, then per tensor: u32 name_len, name, u32 rank, rank x u64 dims,
        prod(dims) float64 values in row-major order

The text manifest carries the same names::

    # comment
    num_layers = 1
    ...
    tensor tok_embedding 258 4
    0.1 0.2 ...
"""
from __future__ import annotations

import dataclasses
import io
import struct
from pathlib import Path

import numpy as np

from .errors import InputError
from .model import ModelConfig, ModelWeights

MAGIC = b"CTXW"
VERSION = 1
_REAL_FIELDS = {"layernorm_epsilon"}

_REQUIRED = {"num_layers", "num_heads", "d_model", "d_head", "d_ff", "vocab_size", "max_seq_len"}


def _config_fields() -> list[str]:
    return [f.name for f in dataclasses.fields(ModelConfig)]


def _make_config(values: dict) -> ModelConfig:
    names = _config_fields()
    unknown = set(values) - set(names)
    if unknown:
        raise InputError(f"unknown header fields: {sorted(unknown)}")
    missing = [n for n in names if n not in values and n in _REQUIRED]
    if missing:
        raise InputError(f"missing header fields: {missing}")
    return ModelConfig(**values)


def dump_binary(weights: ModelWeights) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    cfg = dataclasses.asdict(weights.config)
    buf.write(struct.pack("<I", len(cfg)))
    for name, value in cfg.items():
        raw = name.encode()
        buf.write(struct.pack("<I", len(raw)) + raw)
        if name in _REAL_FIELDS:
            buf.write(struct.pack("<Bd", 1, float(value)))
        else:
            buf.write(struct.pack("<Bq", 0, int(value)))
    tensors = weights.tensors()
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        raw = name.encode()
        buf.write(struct.pack("<I", len(raw)) + raw)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise InputError("truncated model file")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def name(self) -> str:
        (n,) = self.unpack("<I")
        try:
            return self.take(n).decode()
        except UnicodeDecodeError as exc:
            raise InputError("bad name bytes in model file") from exc


def load_binary(data: bytes) -> ModelWeights:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise InputError("not a binary model file (bad magic)")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise InputError(f"unsupported model file version {version}")
    (nfields,) = r.unpack("<I")
    values = {}
    for _ in range(nfields):
        name = r.name()
        (kind,) = r.unpack("<B")
        if kind == 0:
            (values[name],) = r.unpack("<q")
        elif kind == 1:
            (values[name],) = r.unpack("<d")
        else:
            raise InputError(f"bad header value kind {kind} for {name!r}")
    config = _make_config(values)
    (ntensors,) = r.unpack("<I")
    tensors = {}
    for _ in range(ntensors):
        name = r.name()
        (rank,) = r.unpack("<I")
        dims = r.unpack(f"<{rank}Q") if rank else ()
        count = int(np.prod(dims)) if dims else 1
        arr = np.frombuffer(r.take(8 * count), dtype="<f8").astype(np.float64).reshape(dims)
        tensors[name] = arr
    if r.pos != len(data):
        raise InputError("trailing bytes after last tensor")
    return ModelWeights.from_tensors(config, tensors)


def dump_text(weights: ModelWeights) -> str:
    lines = ["# ctxattr model manifest"]
    for name, value in dataclasses.asdict(weights.config).items():
        lines.append(f"{name} = {value!r}")
    for name, arr in weights.tensors().items():
        lines.append(f"tensor {name} " + " ".join(str(d) for d in arr.shape))
        flat = arr.reshape(-1)
        for start in range(0, flat.size, 8):
            lines.append(" ".join(repr(float(v)) for v in flat[start:start + 8]))
    return "\n".join(lines) + "\n"


def load_text(text: str) -> ModelWeights:
    values: dict = {}
    tensors: dict[str, np.ndarray] = {}
    current = None  # (name, dims, list of floats)

    def close():
        if current is None:
            return
        name, dims, vals = current
        if len(vals) != int(np.prod(dims)):
            raise InputError(f"tensor {name!r} has {len(vals)} values, expected {int(np.prod(dims))}")
        tensors[name] = np.asarray(vals, dtype=np.float64).reshape(dims)

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("tensor "):
            close()
            parts = line.split()
            try:
                current = (parts[1], tuple(int(d) for d in parts[2:]), [])
            except (IndexError, ValueError) as exc:
                raise InputError(f"line {lineno}: bad tensor header") from exc
        elif current is None:
            if "=" not in line:
                raise InputError(f"line {lineno}: expected 'field = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            try:
                values[key] = float(val) if key in _REAL_FIELDS else int(val)
            except ValueError as exc:
                raise InputError(f"line {lineno}: bad value for {key}") from exc
        else:
            try:
                current[2].extend(float(v) for v in line.split())
            except ValueError as exc:
                raise InputError(f"line {lineno}: bad number") from exc
    close()
    return ModelWeights.from_tensors(_make_config(values), tensors)


def save_model(weights: ModelWeights, path: str | Path, text: bool = False) -> None:
    path = Path(path)
    if text:
        path.write_text(dump_text(weights), encoding="utf-8")
    else:
        path.write_bytes(dump_binary(weights))


def load_model(path: str | Path) -> ModelWeights:
    """Load either format; the binary one is recognised by its magic bytes."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read model file {path}: {exc}") from exc
    if data[:4] == MAGIC:
        return load_binary(data)
    try:
        return load_text(data.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise InputError(f"{path}: neither a binary nor a text model file") from exc
