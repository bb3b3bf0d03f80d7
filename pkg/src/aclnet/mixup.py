"""Mixup: convex combinations of example pairs and their label distributions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass(frozen=True)
class MixupConfig:
    alpha: float = 0.1
    # mixup stays off while epoch < warmup_epochs
    warmup_epochs: int = 100

    def __post_init__(self):
        if not 0 < self.alpha <= 5:
            raise ValueError(f"alpha must be in (0, 5], got {self.alpha}")
        if self.warmup_epochs < 0:
            raise ValueError("warmup_epochs must be >= 0")


@dataclass(frozen=True)
class LabeledExample:
    x: np.ndarray
    y: np.ndarray


def one_hot(target: int, num_classes: int, dtype=np.float64) -> np.ndarray:
    y = np.zeros(num_classes, dtype=dtype)
    y[target] = 1.0
    return y


def sample_beta(alpha: float, rng: np.random.Generator, size=None):
    """Symmetric Beta(alpha, alpha) from two Gamma(alpha, 1) draws."""
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    g1 = rng.standard_gamma(alpha, size)
    g2 = rng.standard_gamma(alpha, size)
    total = g1 + g2
    # both gammas can underflow to 0 for tiny alpha; either endpoint is then
    # equally likely, so fall back to a fair coin
    with np.errstate(invalid="ignore", divide="ignore"):
        lam = np.where(total > 0, g1 / np.where(total > 0, total, 1.0), rng.random(size) < 0.5)
    return float(lam) if size is None else lam.astype(np.float64)


def mixup_pair(a: LabeledExample, b: LabeledExample, lam: float) -> LabeledExample:
    if a.x.shape != b.x.shape:
        raise ShapeError(f"waveform shapes differ: {a.x.shape} vs {b.x.shape}")
    if a.y.shape != b.y.shape:
        raise ShapeError(f"class counts differ: {a.y.shape} vs {b.y.shape}")
    if lam == 1.0:
        return a
    return LabeledExample(lam * a.x + (1.0 - lam) * b.x, lam * a.y + (1.0 - lam) * b.y)


def mixup_arrays(x: np.ndarray, y: np.ndarray, config: MixupConfig, epoch: int,
                 rng: np.random.Generator):
    """Batch form of :func:`mixup_batch` on stacked ``x`` (N, T) and ``y`` (N, K).

    Each row ``i`` is mixed with row ``perm[i]`` of a random permutation
    using its own lambda. During warm-up the inputs are returned untouched
    and no random numbers are consumed.
    """
    if epoch < config.warmup_epochs:
        return x, y
    n = x.shape[0]
    perm = rng.permutation(n)
    lam = sample_beta(config.alpha, rng, size=n)
    lx = lam.reshape((n,) + (1,) * (x.ndim - 1)).astype(x.dtype)
    ly = lam[:, None].astype(y.dtype)
    return lx * x + (1 - lx) * x[perm], ly * y + (1 - ly) * y[perm]


def mixup_batch(batch: list[LabeledExample], config: MixupConfig, epoch: int,
                rng: np.random.Generator) -> list[LabeledExample]:
    if not batch:
        raise ValueError("mixup_batch needs a nonempty batch")
    if epoch < config.warmup_epochs:
        return batch
    perm = rng.permutation(len(batch))
    lams = sample_beta(config.alpha, rng, size=len(batch))
    return [mixup_pair(ex, batch[j], float(lam)) for ex, j, lam in zip(batch, perm, lams)]
