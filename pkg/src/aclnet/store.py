"""Binary model files: NetworkConfig + weights + BN running statistics.

Layout (all little-endian)::

    b"ACLN"  u16 version
    config:  u32 sample_rate, u8 conv_type (0=SC, 1=DWSC), u32 wm_num, u32 wm_den,
             u32 c1, u32 s1, u32 s2, u32 llf_kernel1, u32 llf_kernel2,
             u32 num_classes, f64 dropout_p
    u32 tensor_count
    directory, per tensor: u16 name_len, name (utf-8), u8 rank, u32 dims[rank], u64 count
    payload: f32 values of every tensor, in directory order

Tensors are the learnable parameters followed by the running statistics,
both in graph order. Storage is always float32.
"""
from __future__ import annotations

import math
import os
import struct
import tempfile
from fractions import Fraction
from pathlib import Path

import numpy as np

from .builder import CONV_TYPES, NetworkConfig, WeightSet, build, min_input_len
from .errors import (
    BadMagicError,
    ConfigError,
    ModelFormatError,
    ShapeMismatchError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)

MAGIC = b"ACLN"
VERSION = 1
_CONFIG = struct.Struct("<IBIIIIIIIId")
_WM_MAX_DENOMINATOR = 1 << 20


def _expected_shapes(config: NetworkConfig) -> dict[str, tuple[int, ...]]:
    graph = build(config, min_input_len(config))
    return {**graph.param_shapes(), **graph.buffer_shapes()}


def _wm_fraction(wm: float) -> Fraction:
    return Fraction(wm).limit_denominator(_WM_MAX_DENOMINATOR)


def encode(config: NetworkConfig, weights: WeightSet) -> bytes:
    expected = _expected_shapes(config)
    tensors = {**weights.params, **weights.buffers}
    if list(tensors) != list(expected):
        raise ShapeMismatchError("weight names/order do not match the graph built from config")
    for name, shape in expected.items():
        if tensors[name].shape != shape:
            raise ShapeMismatchError(f"{name}: shape {tensors[name].shape}, graph expects {shape}")
    wm = _wm_fraction(config.width_multiplier)
    parts = [MAGIC, struct.pack("<H", VERSION),
             _CONFIG.pack(config.sample_rate, CONV_TYPES.index(config.conv_type), wm.numerator,
                          wm.denominator, config.c1, config.s1, config.s2, config.llf_kernel1,
                          config.llf_kernel2, config.num_classes, config.dropout_p),
             struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape) + struct.pack("<Q", arr.size))
    for arr in tensors.values():
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def save(config: NetworkConfig, weights: WeightSet, path) -> None:
    """Write atomically: temp file in the target directory, then rename."""
    data = encode(config, weights)
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent or ".")
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write model file {path}: {exc}") from exc


class _Reader:
    def __init__(self, f, size: int):
        self.f = f
        self.size = size

    def take(self, n: int, what: str) -> bytes:
        pos = self.f.tell()
        buf = self.f.read(n)
        if len(buf) != n:
            raise ModelFormatError(f"file ends inside {what} at offset {pos}")
        return buf

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    @property
    def remaining(self) -> int:
        return self.size - self.f.tell()


def load(path) -> tuple[NetworkConfig, WeightSet]:
    path = Path(path)
    size = path.stat().st_size
    with open(path, "rb") as f:
        r = _Reader(f, size)
        magic = f.read(4)
        if magic != MAGIC:
            raise BadMagicError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        (version,) = r.unpack("<H", "version")
        if version != VERSION:
            raise UnsupportedVersionError(f"{path}: unsupported format version {version}")
        (rate, ct, wm_num, wm_den, c1, s1, s2, k1, k2, ncls, drop) = _CONFIG.unpack(
            r.take(_CONFIG.size, "config block"))
        if ct >= len(CONV_TYPES) or wm_den == 0:
            raise ModelFormatError(f"{path}: corrupt config block")
        try:
            config = NetworkConfig(rate, CONV_TYPES[ct], wm_num / wm_den, c1, s1, s2, k1, k2, ncls, drop)
        except ConfigError as exc:
            raise ModelFormatError(f"{path}: invalid config: {exc}") from None
        expected = _expected_shapes(config)
        (count,) = r.unpack("<I", "tensor count")
        if count != len(expected):
            raise ShapeMismatchError(f"{path}: {count} tensors, config implies {len(expected)}")
        directory = []
        for name, shape in expected.items():
            (nlen,) = r.unpack("<H", "tensor name length")
            got_name = r.take(nlen, "tensor name").decode("utf-8", errors="replace")
            (rank,) = r.unpack("<B", "tensor rank")
            dims = r.unpack(f"<{rank}I", "tensor dims")
            (n,) = r.unpack("<Q", "element count")
            if got_name != name or dims != shape:
                raise ShapeMismatchError(f"{path}: tensor {got_name!r} {dims}, config implies {name!r} {shape}")
            if n != math.prod(dims):
                raise ModelFormatError(f"{path}: {name} declares {n} elements for dims {dims}")
            directory.append((name, dims, n))
        need = 4 * sum(n for *_, n in directory)
        if r.remaining < need:
            raise TruncatedPayloadError(f"payload short by {need - r.remaining} bytes")
        if r.remaining > need:
            raise ModelFormatError(f"{path}: {r.remaining - need} trailing bytes after payload")
        payload = np.frombuffer(f.read(need), dtype="<f4").astype(np.float32)
    tensors, pos = {}, 0
    for name, dims, n in directory:
        tensors[name] = payload[pos:pos + n].reshape(dims).copy()
        pos += n
    n_params = len(build(config, min_input_len(config)).param_shapes())
    names = list(tensors)
    return config, WeightSet({k: tensors[k] for k in names[:n_params]},
                             {k: tensors[k] for k in names[n_params:]})
