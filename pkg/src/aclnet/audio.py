"""WAV I/O, silence trimming, normalization, waveform augmentation, corpus index."""
from __future__ import annotations

import csv
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DecodeError, DegenerateInputError, EmptyClipError, IndexFormatError

PCM = 0x0001
EXTENSIBLE = 0xFFFE


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    rate: int

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1:
            raise ValueError(f"AudioClip is mono; got samples of shape {s.shape}")
        object.__setattr__(self, "samples", s)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.rate

    def with_samples(self, samples) -> "AudioClip":
        return AudioClip(samples, self.rate)


# ---------------------------------------------------------------------------
# WAV


def _read_exact(f, n: int, what: str) -> bytes:
    offset = f.tell()
    buf = f.read(n)
    if len(buf) != n:
        raise DecodeError(f"truncated {what} at offset {offset}: wanted {n} bytes, got {len(buf)}")
    return buf


def load_wav(path) -> AudioClip:
    """Decode a RIFF/WAVE PCM16 file; stereo (or more) is averaged to mono."""
    with open(path, "rb") as f:
        riff, _size, wave = struct.unpack("<4sI4s", _read_exact(f, 12, "RIFF header"))
        if riff != b"RIFF" or wave != b"WAVE":
            raise DecodeError(f"not a RIFF/WAVE file at offset 0 ({riff!r}, {wave!r})")
        fmt = None
        while True:
            offset = f.tell()
            head = f.read(8)
            if not head:
                raise DecodeError(f"no data chunk found (file ends at offset {offset})")
            if len(head) < 8:
                raise DecodeError(f"truncated chunk header at offset {offset}")
            cid, size = struct.unpack("<4sI", head)
            if cid == b"fmt ":
                if size < 16:
                    raise DecodeError(f"fmt chunk at offset {offset} is only {size} bytes")
                body = _read_exact(f, size, "fmt chunk")
                tag, channels, rate, _bps, block_align, bits = struct.unpack("<HHIIHH", body[:16])
                if tag == EXTENSIBLE and size >= 40:
                    tag = struct.unpack("<H", body[24:26])[0]
                if tag != PCM:
                    raise DecodeError(f"unsupported codec tag {tag:#06x} in fmt chunk at offset {offset}")
                if bits != 16:
                    raise DecodeError(f"unsupported bit depth {bits} in fmt chunk at offset {offset}")
                if channels < 1 or block_align != 2 * channels:
                    raise DecodeError(f"inconsistent channel layout in fmt chunk at offset {offset}")
                fmt = (channels, rate)
            elif cid == b"data":
                if fmt is None:
                    raise DecodeError(f"data chunk at offset {offset} precedes the fmt chunk")
                channels, rate = fmt
                raw = f.read(size)
                if len(raw) < size:
                    raise DecodeError(
                        f"truncated data chunk at offset {offset}: header says {size} bytes, "
                        f"only {len(raw)} present"
                    )
                frames = len(raw) // (2 * channels)
                pcm = np.frombuffer(raw[: frames * 2 * channels], dtype="<i2").astype(np.float64)
                pcm = pcm.reshape(frames, channels).mean(axis=1) / 32768.0
                return AudioClip(pcm, rate)
            else:
                f.seek(size + (size & 1), os.SEEK_CUR)
                continue
            if size & 1:
                f.seek(1, os.SEEK_CUR)


def save_wav(path, clip: AudioClip) -> None:
    """Write mono PCM16; samples are clipped to [-1, 1)."""
    pcm = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2").tobytes()
    header = struct.pack("<4sI4s4sIHHIIHH4sI", b"RIFF", 36 + len(pcm), b"WAVE", b"fmt ", 16,
                         PCM, 1, clip.rate, clip.rate * 2, 2, 16, b"data", len(pcm))
    with open(path, "wb") as f:
        f.write(header)
        f.write(pcm)


# ---------------------------------------------------------------------------
# clip transforms


def trim_silence(clip: AudioClip, threshold_db: float = -60.0) -> AudioClip:
    """Drop leading and trailing samples quieter than ``threshold_db`` below the peak."""
    mag = np.abs(clip.samples)
    peak = mag.max() if mag.size else 0.0
    if peak == 0.0:
        raise EmptyClipError("clip is entirely silent")
    loud = np.flatnonzero(mag >= peak * 10.0 ** (threshold_db / 20.0))
    return clip.with_samples(clip.samples[loud[0]: loud[-1] + 1])


def normalize(clip: AudioClip) -> AudioClip:
    """Zero mean, unit (population) standard deviation."""
    x = clip.samples
    if x.size == 0:
        raise EmptyClipError("cannot normalize an empty clip")
    mean = x.mean()
    centered = x - mean
    std = np.sqrt(np.mean(centered * centered))
    if not np.isfinite(std) or std <= 1e-12 * max(1.0, float(np.abs(x).max())):
        raise DegenerateInputError("clip has zero variance")
    return clip.with_samples(centered / std)


def resample_linear(clip: AudioClip, factor: float) -> AudioClip:
    """Read the clip at positions ``i * factor`` with linear interpolation.

    ``factor > 1`` shortens the clip and raises pitch. The output keeps every
    index ``i`` with ``i * factor <= len - 1``; the nominal rate is unchanged.
    """
    if not factor > 0:
        raise ValueError(f"resample factor must be > 0, got {factor}")
    x = clip.samples
    if x.size == 0:
        return clip
    n = int(np.floor((x.size - 1) / factor)) + 1
    pos = np.arange(n) * factor
    idx = np.minimum(pos.astype(np.int64), x.size - 1)
    frac = pos - idx
    nxt = np.minimum(idx + 1, x.size - 1)
    # lattice points copy the input sample, so they are bit-exact (including -0.0)
    return clip.with_samples(np.where(frac == 0, x[idx], x[idx] + frac * (x[nxt] - x[idx])))


def tile_to(x: np.ndarray, n: int) -> np.ndarray:
    """Cyclically repeat ``x`` until it holds at least ``n`` samples."""
    if x.size == 0:
        raise EmptyClipError("cannot tile an empty clip")
    if x.size >= n:
        return x
    return np.tile(x, -(-n // x.size))


def random_crop(clip: AudioClip, seconds: float, rng: np.random.Generator) -> AudioClip:
    n = round(seconds * clip.rate)
    x = tile_to(clip.samples, n)
    start = int(rng.integers(0, x.size - n + 1))
    return clip.with_samples(x[start:start + n])


def apply_gain(clip: AudioClip, gain_db: float) -> AudioClip:
    return clip.with_samples(clip.samples * 10.0 ** (gain_db / 20.0))


@dataclass(frozen=True)
class AugmentConfig:
    crop_seconds: float = 1.5
    pre_crop_seconds: float = 2.0
    resample_range: tuple[float, float] = (0.8, 1.25)
    gain_range_db: tuple[float, float] = (-6.0, 6.0)

    def __post_init__(self):
        lo, hi = self.resample_range
        if not 0 < lo <= hi:
            raise ValueError(f"resample_range must be positive and ordered, got {self.resample_range}")
        if self.gain_range_db[0] > self.gain_range_db[1]:
            raise ValueError("gain_range_db must be ordered")
        # the fastest resample shortens the pre-crop window the most
        if self.pre_crop_seconds / hi < self.crop_seconds:
            raise ValueError(
                f"crop of {self.crop_seconds} s not satisfiable from {self.pre_crop_seconds} s "
                f"resampled by up to {hi}"
            )


@dataclass(frozen=True)
class AugmentDraw:
    """The random choices behind one augmented example."""

    segment_offset: int
    factor: float
    crop_offset: int
    gain_db: float


def augment_example(clip: AudioClip, config: AugmentConfig, rng: np.random.Generator,
                    return_draw: bool = False):
    """Training-time waveform augmentation.

    Steps, and the order of random draws: pick a random pre-crop segment,
    normalize it, resample by a uniform factor, crop to the final length,
    apply a uniform gain in dB. Output length is always
    ``round(crop_seconds * rate)``.
    """
    if len(clip) == 0:
        raise EmptyClipError("cannot augment an empty clip")
    n_pre = round(config.pre_crop_seconds * clip.rate)
    n_out = round(config.crop_seconds * clip.rate)
    x = tile_to(clip.samples, n_pre)
    seg_off = int(rng.integers(0, x.size - n_pre + 1))
    seg = normalize(clip.with_samples(x[seg_off:seg_off + n_pre]))
    factor = float(rng.uniform(*config.resample_range))
    res = tile_to(resample_linear(seg, factor).samples, n_out)
    crop_off = int(rng.integers(0, res.size - n_out + 1))
    gain_db = float(rng.uniform(*config.gain_range_db))
    out = res[crop_off:crop_off + n_out] * 10.0 ** (gain_db / 20.0)
    if return_draw:
        return out, AugmentDraw(seg_off, factor, crop_off, gain_db)
    return out


def eval_input(clip: AudioClip) -> np.ndarray:
    """Evaluation input: the whole clip, normalized, nothing else."""
    return normalize(clip).samples


def example_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for ``(seed, *stream)``, e.g. (seed, epoch, index)."""
    return np.random.default_rng(np.random.SeedSequence([seed, *stream]))


# ---------------------------------------------------------------------------
# corpus index


@dataclass(frozen=True)
class IndexEntry:
    filename: str
    fold: int
    target: int
    category: str


@dataclass
class DatasetIndex:
    entries: list[IndexEntry] = field(default_factory=list)
    num_folds: int = 5
    num_classes: int = 50

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def folds(self) -> list[int]:
        return sorted({e.fold for e in self.entries})


_REQUIRED = ("filename", "fold", "target", "category")


def load_index(csv_path, num_folds: int = 5, num_classes: int = 50) -> DatasetIndex:
    """Read an ESC-50 style ``filename,fold,target,category`` CSV.

    Extra columns are ignored; duplicate filenames are kept as-is.
    """
    with open(csv_path, newline="") as f:
        reader = csv.DictReader(f)
        missing = [c for c in _REQUIRED if c not in (reader.fieldnames or [])]
        if missing:
            raise IndexFormatError(f"{csv_path}: missing columns {missing}")
        entries = []
        for row_no, row in enumerate(reader, start=2):
            try:
                fold, target = int(row["fold"]), int(row["target"])
            except (TypeError, ValueError):
                raise IndexFormatError(f"{csv_path} row {row_no}: fold/target must be integers") from None
            if not 1 <= fold <= num_folds:
                raise IndexFormatError(f"{csv_path} row {row_no}: fold {fold} outside 1..{num_folds}")
            if not 0 <= target < num_classes:
                raise IndexFormatError(f"{csv_path} row {row_no}: target {target} outside 0..{num_classes - 1}")
            entries.append(IndexEntry(row["filename"], fold, target, row["category"]))
    return DatasetIndex(entries, num_folds, num_classes)


def split_folds(index: DatasetIndex, test_fold: int) -> tuple[DatasetIndex, DatasetIndex]:
    train = [e for e in index.entries if e.fold != test_fold]
    test = [e for e in index.entries if e.fold == test_fold]
    return (DatasetIndex(train, index.num_folds, index.num_classes),
            DatasetIndex(test, index.num_folds, index.num_classes))


def load_corpus(index: DatasetIndex, data_dir, rate: int | None = None,
                trim_db: float | None = -60.0) -> list[tuple[AudioClip, int]]:
    """Load every indexed file (silence-trimmed) as ``(clip, target)`` pairs."""
    out = []
    for e in index.entries:
        clip = load_wav(Path(data_dir) / e.filename)
        if rate is not None and clip.rate != rate:
            raise DecodeError(f"{e.filename}: sample rate {clip.rate} Hz, expected {rate} Hz")
        if trim_db is not None:
            clip = trim_silence(clip, trim_db)
        out.append((clip, e.target))
    return out
