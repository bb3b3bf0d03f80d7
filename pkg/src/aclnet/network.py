"""Whole-network forward and backward passes over a LayerGraph.

The graph fixes layer specs; the input length is free, so one graph and
weight set serve clips of any length down to one 10 ms frame.
"""
from __future__ import annotations

import numpy as np

from . import layers as L
from .builder import LayerGraph, WeightSet
from .errors import ShapeError, StateError
from .tensor import transpose_cw, untranspose_cw


class Tape:
    """Per-call record of forward contexts, consumed by :func:`backward`."""

    def __init__(self):
        self.entries: list[tuple[str, str, list]] = []
        self.probs: np.ndarray | None = None


def _as_batch(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim == 1:
        x = x[None]
    if x.ndim != 2:
        raise ShapeError(f"network input must be (T,) or (N, T), got {x.shape}")
    return x[:, None, None, :]


def _bn(prefix, spec_ch, h, weights, mode, update_stats, record):
    spec = L.BatchNormSpec(spec_ch)
    rm_key, rv_key = prefix + "running_mean", prefix + "running_var"
    y, ctx, (rm, rv) = L.batchnorm_forward(
        spec, h, weights.params[prefix + "gamma"], weights.params[prefix + "beta"],
        weights.buffers[rm_key], weights.buffers[rv_key], mode,
    )
    if update_stats:
        weights.buffers[rm_key] = rm.astype(weights.buffers[rm_key].dtype)
        weights.buffers[rv_key] = rv.astype(weights.buffers[rv_key].dtype)
    record.append(("bn", prefix, ctx))
    return y


def _conv_bn_relu(conv, prefix, h, weights, mode, update_stats, record, bn=True, relu=True):
    bias = weights.params.get(prefix + "bias") if conv.has_bias else None
    h, ctx = L.conv2d_forward(conv, h, weights.params[prefix + "weight"], bias)
    record.append(("conv", prefix, ctx))
    if bn:
        h = _bn(prefix + "bn.", conv.out_ch, h, weights, mode, update_stats, record)
    if relu:
        h, ctx = L.relu_forward(h)
        record.append(("relu", prefix, ctx))
    return h


def forward(graph: LayerGraph, weights: WeightSet, x, mode: str = "infer",
            rng: np.random.Generator | None = None, update_stats: bool | None = None,
            check_finite: bool = False):
    """Run waveforms ``x`` of shape ``(T,)`` or ``(N, T)`` through the network.

    Returns ``(logits, probs, tape)`` with ``logits``/``probs`` of shape
    ``(N, num_classes)``. In ``train`` mode BN uses batch statistics and,
    unless ``update_stats`` is False, writes updated running statistics back
    into ``weights.buffers``. With ``check_finite`` the first layer producing
    a non-finite value raises FloatingPointError naming that layer.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    if update_stats is None:
        update_stats = mode == "train"
    h = _as_batch(x).astype(weights.dtype, copy=False)
    if h.shape[-1] < graph.llf.samples_per_frame:
        raise ShapeError(
            f"input of {h.shape[-1]} samples is shorter than one frame ({graph.llf.samples_per_frame})"
        )
    tape = Tape()
    for node in graph:
        record: list = []
        if node.kind == "conv":
            h = _conv_bn_relu(node.spec, node.name + ".", h, weights, mode, update_stats, record,
                              node.bn, node.relu)
        elif node.kind == "dwsc":
            for sub, conv in (("dw", node.spec.depthwise), ("pw", node.spec.pointwise)):
                h = _conv_bn_relu(conv, f"{node.name}.{sub}.", h, weights, mode, update_stats, record)
        elif node.kind == "maxpool":
            h, ctx = L.maxpool_forward(node.spec, h)
            record.append(("maxpool", node.name, ctx))
        elif node.kind == "transpose":
            h = transpose_cw(h)
        elif node.kind == "dropout":
            h, ctx = L.dropout_forward(node.spec, h, mode, rng)
            record.append(("dropout", node.name, ctx))
        elif node.kind == "avgpool":
            h, ctx = L.avgpool_global(h)
            record.append(("avgpool", node.name, ctx))
        elif node.kind == "softmax":
            tape.probs = L.softmax(h, axis=-1)
        tape.entries.append((node.name, node.kind, record))
        if check_finite and not np.all(np.isfinite(h)):
            raise FloatingPointError(f"non-finite output in layer {node.name}")
    return h, tape.probs, tape


_BACKWARD = {
    "conv": L.conv2d_backward,
    "bn": L.batchnorm_backward,
    "relu": L.relu_backward,
    "maxpool": L.maxpool_backward,
    "dropout": L.dropout_backward,
    "avgpool": L.avgpool_global_backward,
}


def backward(tape: Tape | None, dlogits: np.ndarray, return_input_grad: bool = False):
    """Gradients of a scalar loss given ``dlogits = dLoss/dlogits``.

    Returns a dict keyed like ``WeightSet.params``; with
    ``return_input_grad`` also the gradient w.r.t. the input waveform
    ``(N, T)``.
    """
    if tape is None or not tape.entries:
        raise StateError("backward called without a forward tape")
    g = dlogits
    grads: dict[str, np.ndarray] = {}
    for _name, kind, record in reversed(tape.entries):
        if kind == "transpose":
            g = untranspose_cw(g)
            continue
        for op, prefix, ctx in reversed(record):
            g, pg = _BACKWARD[op](ctx, g)
            for k, v in pg.items():
                key = prefix + k if op in ("conv", "bn") else f"{prefix}.{k}"
                grads[key] = v
    if return_input_grad:
        return grads, g[:, 0, 0, :]
    return grads


def predict(graph: LayerGraph, weights: WeightSet, x) -> np.ndarray:
    """Class probabilities for one waveform (any length >= one frame)."""
    _, probs, _ = forward(graph, weights, x, mode="infer")
    return probs[0] if np.ndim(x) == 1 else probs
