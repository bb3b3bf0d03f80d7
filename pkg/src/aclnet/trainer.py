"""SGD-with-momentum training, evaluation and k-fold cross-validation."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import network
from .audio import AudioClip, AugmentConfig, augment_example, eval_input, example_rng, normalize, tile_to
from .builder import LayerGraph, NetworkConfig, WeightSet, build, init_weights, min_input_len
from .errors import NumericError
from .mixup import MixupConfig, mixup_arrays

log = logging.getLogger(__name__)

PAPER_LR_PHASES = ((0.2, 500), (0.04, 1000), (0.016, 500))
METRICS_HEADER = ("epoch", "phase_lr", "train_loss", "val_accuracy")
# rng stream ids next to (seed, epoch): batch order, then one per step
_ORDER_STREAM = 0xFFFFFFFF
_STEP_STREAM = 0x7FFF0000


@dataclass(frozen=True)
class TrainConfig:
    momentum: float = 0.9
    weight_decay: float = 2e-4
    batch_size: int = 64
    lr_phases: tuple[tuple[float, int], ...] = PAPER_LR_PHASES
    mixup: MixupConfig | None = field(default_factory=MixupConfig)
    augment: AugmentConfig | None = field(default_factory=AugmentConfig)
    seed: int = 0
    eval_every: int = 10
    checkpoint_every: int = 50
    epochs: int | None = None  # None: the sum of the phase lengths

    def __post_init__(self):
        if not self.lr_phases:
            raise ValueError("lr_phases must be nonempty")
        if any(rate <= 0 or n < 0 for rate, n in self.lr_phases):
            raise ValueError("learning rates must be > 0 and phase lengths >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def total_epochs(self) -> int:
        return self.epochs if self.epochs is not None else sum(n for _, n in self.lr_phases)


@dataclass
class TrainState:
    weights: WeightSet
    velocity: dict[str, np.ndarray]
    epoch: int = 0
    history: list[dict] = field(default_factory=list)

    @classmethod
    def fresh(cls, weights: WeightSet) -> "TrainState":
        return cls(weights, {k: np.zeros_like(v) for k, v in weights.params.items()})


def lr_at(config: TrainConfig, epoch: int) -> float:
    """Piecewise-constant rate; past the last phase the final rate holds."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    end = 0
    for rate, n in config.lr_phases:
        end += n
        if epoch < end:
            return rate
    return config.lr_phases[-1][0]


def cross_entropy(probs: np.ndarray, target: np.ndarray):
    """Soft-target cross-entropy averaged over the batch.

    Returns ``(loss, dlogits)`` where ``dlogits`` is the gradient w.r.t. the
    pre-softmax logits, ``(probs - target) / N``.
    """
    p = np.atleast_2d(probs)
    t = np.atleast_2d(target)
    n = p.shape[0]
    loss = float(-np.sum(t * np.log(p + 1e-12)) / n)
    grad = (p - t) / n
    return loss, grad.reshape(np.shape(probs)).astype(probs.dtype, copy=False)


def decays(name: str) -> bool:
    """Weight decay applies to conv kernels only, not BN affine terms or the head bias."""
    return name.endswith(".weight")


def sgd_step(state: TrainState, grads: dict[str, np.ndarray], lr: float, config: TrainConfig) -> TrainState:
    """In-place momentum SGD: g += wd*w; v = m*v + g; w -= lr*v."""
    for name, w in state.weights.params.items():
        g = grads[name]
        if g.shape != w.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, weight {w.shape}")
        if config.weight_decay and decays(name):
            g = g + config.weight_decay * w
        v = state.velocity[name]
        v *= config.momentum
        v += g
        w -= (lr * v).astype(w.dtype, copy=False)
    return state


# ---------------------------------------------------------------------------
# data


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i:i + batch_size]


def _fixed_length(clip: AudioClip, n: int) -> np.ndarray:
    x = normalize(clip).samples
    return tile_to(x, n)[:n]


def make_batch(items: Sequence[tuple[AudioClip, int]], idx, num_classes: int,
               config: TrainConfig, epoch: int, crop_len: int):
    """Augmented (or plain normalized) waveforms plus one-hot targets.

    Every example draws from its own stream keyed by (seed, epoch, item),
    so batch contents do not depend on how the work is scheduled.
    """
    xs, ys = [], []
    for i in idx:
        clip, target = items[i]
        if config.augment is not None:
            xs.append(augment_example(clip, config.augment, example_rng(config.seed, epoch, int(i))))
        else:
            xs.append(_fixed_length(clip, crop_len))
        y = np.zeros(num_classes)
        y[target] = 1.0
        ys.append(y)
    return np.stack(xs), np.stack(ys)


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray  # rows: true class, cols: predicted
    predictions: np.ndarray

    @property
    def total(self) -> int:
        return int(self.confusion.sum())


def evaluate(graph: LayerGraph, weights: WeightSet, items: Sequence[tuple[AudioClip, int]]) -> EvalResult:
    """Whole-file inference (normalization only), argmax over the softmax."""
    if not items:
        raise ValueError("cannot evaluate an empty test set")
    k = graph.config.num_classes
    confusion = np.zeros((k, k), dtype=np.int64)
    preds = []
    floor = min_input_len(graph.config)
    for clip, target in items:
        x = eval_input(clip)
        if x.size < floor:
            x = tile_to(x, floor)
        _, probs, _ = network.forward(graph, weights, x, mode="infer")
        pred = int(np.argmax(probs[0]))
        preds.append(pred)
        confusion[target, pred] += 1
    return EvalResult(float(np.trace(confusion) / len(items)), confusion, np.array(preds))


# ---------------------------------------------------------------------------
# training loop


def _diagnose(graph, weights, xb, rng_seed) -> str:
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            network.forward(graph, weights, xb, "train", np.random.default_rng(rng_seed),
                            update_stats=False, check_finite=True)
    except FloatingPointError as exc:
        return str(exc)
    return "loss non-finite although every layer output is finite"


def train_step(graph, state: TrainState, xb, yb, lr: float, config: TrainConfig, rng) -> float:
    # divergence is detected from the loss below, so silence overflow chatter
    with np.errstate(over="ignore", invalid="ignore"):
        _, probs, tape = network.forward(graph, state.weights, xb, mode="train", rng=rng)
        loss, dlogits = cross_entropy(probs, yb)
    if not np.isfinite(loss):
        raise NumericError(f"non-finite loss at epoch {state.epoch}: "
                           + _diagnose(graph, state.weights, xb, config.seed))
    grads = network.backward(tape, dlogits)
    sgd_step(state, grads, lr, config)
    return loss


def train(model_config: NetworkConfig, train_items: Sequence[tuple[AudioClip, int]],
          config: TrainConfig, val_items: Sequence[tuple[AudioClip, int]] | None = None,
          out_dir=None, state: TrainState | None = None,
          on_epoch: Callable[[dict], None] | None = None) -> TrainState:
    """Train for ``config.total_epochs`` epochs.

    One epoch is one shuffled pass over ``train_items``. Validation runs
    every ``eval_every`` epochs and after the last one; with ``out_dir`` set,
    metrics go to ``metrics.csv`` and checkpoints to ``epoch_XXXX.acln`` and
    ``best.acln``.
    """
    from . import store

    if not train_items:
        raise ValueError("training set is empty")
    crop_len = round((config.augment.crop_seconds if config.augment else 1.5) * model_config.sample_rate)
    graph = build(model_config, crop_len)
    if state is None:
        state = TrainState.fresh(init_weights(graph, config.seed))
    out = Path(out_dir) if out_dir is not None else None
    metrics_f = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        metrics_f = open(out / "metrics.csv", "w", newline="")
        writer = csv.writer(metrics_f, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
    best = -1.0
    try:
        while state.epoch < config.total_epochs:
            epoch = state.epoch
            lr = lr_at(config, epoch)
            order_rng = example_rng(config.seed, epoch, _ORDER_STREAM)
            losses, counts = [], []
            for step, idx in enumerate(_batches(len(train_items), config.batch_size, order_rng)):
                xb, yb = make_batch(train_items, idx, model_config.num_classes, config, epoch, crop_len)
                step_rng = example_rng(config.seed, epoch, _STEP_STREAM + step)
                if config.mixup is not None:
                    xb, yb = mixup_arrays(xb, yb, config.mixup, epoch, step_rng)
                losses.append(train_step(graph, state, xb, yb, lr, config, step_rng))
                counts.append(len(idx))
            row = {"epoch": epoch, "phase_lr": lr,
                   "train_loss": float(np.average(losses, weights=counts)), "val_accuracy": None}
            state.epoch += 1
            last = state.epoch == config.total_epochs
            if val_items and (state.epoch % config.eval_every == 0 or last):
                row["val_accuracy"] = evaluate(graph, state.weights, val_items).accuracy
            state.history.append(row)
            if metrics_f is not None:
                writer.writerow([row["epoch"], repr(row["phase_lr"]), repr(row["train_loss"]),
                                 "" if row["val_accuracy"] is None else repr(row["val_accuracy"])])
                metrics_f.flush()
                if config.checkpoint_every and (state.epoch % config.checkpoint_every == 0 or last):
                    store.save(model_config, state.weights, out / f"epoch_{state.epoch:04d}.acln")
                if row["val_accuracy"] is not None and row["val_accuracy"] > best:
                    best = row["val_accuracy"]
                    store.save(model_config, state.weights, out / "best.acln")
            log.info("epoch %d lr %g loss %.4f val %s", epoch, lr, row["train_loss"], row["val_accuracy"])
            if on_epoch is not None:
                on_epoch(row)
    finally:
        if metrics_f is not None:
            metrics_f.close()
    return state


@dataclass
class CrossValResult:
    fold_accuracies: dict[int, float]

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(list(self.fold_accuracies.values())))


def cross_validate(model_config: NetworkConfig, items_by_fold: dict[int, list[tuple[AudioClip, int]]],
                   config: TrainConfig, folds: Sequence[int] | None = None, out_dir=None,
                   on_epoch=None) -> CrossValResult:
    """Train one model per held-out fold and report each fold's final accuracy."""
    folds = sorted(items_by_fold) if folds is None else list(folds)
    accs = {}
    for fold in folds:
        train_items = [it for f, its in items_by_fold.items() if f != fold for it in its]
        test_items = items_by_fold[fold]
        fold_dir = None if out_dir is None else Path(out_dir) / f"fold{fold}"
        state = train(model_config, train_items, config, test_items, fold_dir, on_epoch=on_epoch)
        accs[fold] = state.history[-1]["val_accuracy"]
        log.info("fold %d accuracy %.4f", fold, accs[fold])
    return CrossValResult(accs)
