"""TMF1 binary checkpoints (little-endian, float32 payloads).

Layout::

    b"TMF1" | u32 version | u8 modality tag | 6 x u32 geometry | tensor block | stats block
    block:  u32 count, then per tensor: u16 name length, UTF-8 name, u8 rank,
            rank x u32 dims, prod(dims) x f32

The stats block carries ``<modality>.mean`` / ``<modality>.std`` and a ``seed``
tensor holding the training seed as four 16-bit limbs (exact in f32).
"""

import math
import struct
from pathlib import Path

import numpy as np

from .. import errors as E
from ..modalities import build_model
from .splits import NormalizationStats

MAGIC = b"TMF1"
VERSION = 1
TAGS = {"image": 0, "cognitive": 1, "biomarker": 2}
MAX_RANK = 8
MAX_NAME = 4096
MAX_ELEMENTS = 1 << 31


def _encode_tensor(name, arr):
    raw = name.encode("utf-8")
    if len(raw) > MAX_NAME:
        raise E.FieldOverflowError(f"tensor name too long ({len(raw)} bytes)")
    a = np.asarray(arr)
    if a.ndim > MAX_RANK:
        raise E.FieldOverflowError(f"{name}: rank {a.ndim} exceeds {MAX_RANK}")
    out = [struct.pack("<H", len(raw)), raw, struct.pack("<B", a.ndim), struct.pack(f"<{a.ndim}I", *a.shape)]
    out.append(np.ascontiguousarray(a, dtype="<f4").tobytes())
    return b"".join(out)


def _encode_block(tensors):
    return struct.pack("<I", len(tensors)) + b"".join(_encode_tensor(k, v) for k, v in tensors.items())


def _seed_limbs(seed):
    seed = int(seed or 0)
    return np.array([(seed >> (16 * k)) & 0xFFFF for k in range(4)], dtype=np.float64)


def _seed_from_limbs(limbs):
    return sum(int(v) << (16 * k) for k, v in enumerate(limbs))


def geometry_for(spec):
    if spec.modality == "image":
        h, w, _ = spec.input_shape
        return (h, w, 0, 0, 0, 0)
    T, f = spec.input_shape
    return (0, 0, T, f, 0, 0) if spec.modality == "cognitive" else (0, 0, 0, 0, T, f)


def encode_checkpoint(spec, stats=None, geometry=None):
    geometry = tuple(geometry or geometry_for(spec))
    head = MAGIC + struct.pack("<IB6I", VERSION, TAGS[spec.modality], *geometry)
    stat_tensors = {}
    if stats is not None:
        for m in stats.modalities():
            stat_tensors[f"{m}.mean"] = stats.mean[m]
            stat_tensors[f"{m}.std"] = stats.std[m]
    stat_tensors["seed"] = _seed_limbs(spec.seed)
    return head + _encode_block(spec.state_dict()) + _encode_block(stat_tensors)


def save_checkpoint(spec, stats, path, geometry=None):
    data = encode_checkpoint(spec, stats, geometry)
    Path(path).write_bytes(data)
    return path


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise E.TruncatedError(f"truncated payload while reading {what}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def block(self):
        (count,) = self.unpack("<I", "tensor count")
        tensors = {}
        for _ in range(count):
            (nlen,) = self.unpack("<H", "name length")
            if nlen > MAX_NAME:
                raise E.FieldOverflowError(f"tensor name length {nlen} exceeds {MAX_NAME}")
            try:
                name = self.take(nlen, "tensor name").decode("utf-8")
            except UnicodeDecodeError:
                raise E.LoadError("tensor name is not valid UTF-8") from None
            (rank,) = self.unpack("<B", f"rank of {name}")
            if rank > MAX_RANK:
                raise E.FieldOverflowError(f"{name}: rank {rank} exceeds {MAX_RANK}")
            dims = self.unpack(f"<{rank}I", f"dims of {name}")
            size = math.prod(dims)
            if size > MAX_ELEMENTS:
                raise E.FieldOverflowError(f"{name}: dims {list(dims)} overflow")
            raw = self.take(4 * size, f"values of {name}")
            tensors[name] = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(dims)
        return tensors


def decode_checkpoint(buf):
    """Return (ModelSpec, NormalizationStats, geometry) from checkpoint bytes."""
    if buf[:4] != MAGIC:
        raise E.BadMagicError(f"bad magic {bytes(buf[:4])!r} (expected {MAGIC!r})")
    r = _Reader(buf)
    r.pos = 4
    version, tag, *geometry = r.unpack("<IB6I", "header")
    if version != VERSION:
        raise E.UnknownVersionError(f"unknown checkpoint version {version}")
    modality = {v: k for k, v in TAGS.items()}.get(tag)
    if modality is None:
        raise E.LoadError(f"unknown modality tag {tag}")
    params = r.block()
    stat_tensors = r.block()
    if r.pos != len(buf):
        raise E.LoadError(f"{len(buf) - r.pos} trailing bytes after checkpoint payload")
    seed = _seed_from_limbs(stat_tensors.pop("seed", np.zeros(4)))
    spec = build_model(modality, geometry, seed=0)
    spec.seed = seed
    expected = spec.state_dict()
    if set(params) != set(expected):
        raise E.LoadError(f"checkpoint tensors do not match the {modality} architecture")
    try:
        spec.load_state_dict(params)
    except ValueError as exc:
        raise E.LoadError(str(exc)) from None
    stats = NormalizationStats(marker="checkpoint")
    for name, v in stat_tensors.items():
        m, _, kind = name.partition(".")
        getattr(stats, kind)[m] = v
    return spec, stats, tuple(geometry)


def load_checkpoint(path):
    try:
        buf = Path(path).read_bytes()
    except FileNotFoundError:
        raise E.MissingFileError(f"missing checkpoint {path}") from None
    spec, stats, _ = decode_checkpoint(buf)
    return spec, stats
