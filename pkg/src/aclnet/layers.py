"""Forward and backward passes for the layer primitives.

All tensors are batched ``(N, C, H, W)`` arrays; the 1-D front-end
convolutions run as 2-D convolutions over a height-1 image ``(N, C, 1, T)``.
Every ``*_forward`` returns ``(output, ctx)`` and the matching
``*_backward(ctx, grad)`` returns ``(input_grad, param_grads)``.
Convolutions are cross-correlations with zero padding.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, StateError

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


# ---------------------------------------------------------------------------
# layer specs


def same_padding(kernel: int) -> tuple[int, int]:
    """Split ``kernel - 1`` padding as (left, right), the extra one on the right."""
    left = (kernel - 1) // 2
    return left, kernel - 1 - left


@dataclass(frozen=True)
class Conv1dSpec:
    in_ch: int
    out_ch: int
    kernel: int
    stride: int = 1
    pad_left: int = 0
    pad_right: int = 0
    has_bias: bool = False

    @classmethod
    def same(cls, in_ch: int, out_ch: int, kernel: int, stride: int = 1, has_bias: bool = False):
        left, right = same_padding(kernel)
        return cls(in_ch, out_ch, kernel, stride, left, right, has_bias)

    @classmethod
    def decimating(cls, in_ch: int, out_ch: int, kernel: int, stride: int, has_bias: bool = False):
        """Pad ``kernel - stride`` in total so the output has exactly ``in_len // stride`` samples.

        Stacked strided layers then decimate by the product of their strides
        with no rounding drift, which keeps the front-end on a fixed frame grid.
        """
        left, right = same_padding(max(1, kernel - stride + 1))
        return cls(in_ch, out_ch, kernel, stride, left, right, has_bias)

    def output_length(self, in_len: int) -> int:
        return (in_len + self.pad_left + self.pad_right - self.kernel) // self.stride + 1

    def to_2d(self, groups: int = 1) -> "Conv2dSpec":
        return Conv2dSpec(
            self.in_ch, self.out_ch, (1, self.kernel), (1, self.stride),
            (0, 0, self.pad_left, self.pad_right), self.has_bias, groups,
        )


@dataclass(frozen=True)
class Conv2dSpec:
    in_ch: int
    out_ch: int
    kernel: tuple[int, int] = (3, 3)
    stride: tuple[int, int] = (1, 1)
    # (top, bottom, left, right)
    padding: tuple[int, int, int, int] = (1, 1, 1, 1)
    has_bias: bool = False
    groups: int = 1

    def __post_init__(self):
        if self.groups not in (1, self.in_ch):
            raise ShapeError("only dense (groups=1) or depthwise (groups=in_ch) convs are supported")
        if self.groups != 1 and self.out_ch != self.in_ch:
            raise ShapeError("depthwise conv needs in_ch == out_ch")

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.out_ch, self.in_ch // self.groups, *self.kernel)

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        t, b, l, r = self.padding
        ho = (h + t + b - self.kernel[0]) // self.stride[0] + 1
        wo = (w + l + r - self.kernel[1]) // self.stride[1] + 1
        if ho < 1 or wo < 1:
            raise ShapeError(f"input {h}x{w} is smaller than kernel {self.kernel}")
        return ho, wo


@dataclass(frozen=True)
class BatchNormSpec:
    channels: int
    eps: float = BN_EPS
    momentum: float = BN_MOMENTUM


@dataclass(frozen=True)
class DepthwiseSeparableSpec:
    """Depthwise k x k conv -> BN -> ReLU -> pointwise 1x1 conv -> BN -> ReLU."""

    in_ch: int
    out_ch: int
    kernel: tuple[int, int] = (3, 3)
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int, int, int] = (1, 1, 1, 1)

    @property
    def depthwise(self) -> Conv2dSpec:
        return Conv2dSpec(self.in_ch, self.in_ch, self.kernel, self.stride, self.padding,
                          False, self.in_ch)

    @property
    def pointwise(self) -> Conv2dSpec:
        return Conv2dSpec(self.in_ch, self.out_ch, (1, 1), (1, 1), (0, 0, 0, 0), False)

    def param_count(self) -> int:
        kh, kw = self.kernel
        return self.in_ch * kh * kw + 2 * self.in_ch + self.in_ch * self.out_ch + 2 * self.out_ch


@dataclass(frozen=True)
class PoolSpec:
    kind: str  # "max" or "avg-global"
    kernel: tuple[int, int] = (2, 2)
    stride: tuple[int, int] | None = None

    def __post_init__(self):
        if self.kind not in ("max", "avg-global"):
            raise ValueError(f"unknown pool kind {self.kind!r}")
        if self.kind == "max" and self.stride not in (None, self.kernel):
            raise ShapeError("max pools are non-overlapping: stride must equal kernel")

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        if self.kind == "avg-global":
            return 1, 1
        return _pool_extent(h, self.kernel[0])[0], _pool_extent(w, self.kernel[1])[0]


@dataclass(frozen=True)
class DropoutSpec:
    p: float = 0.2

    def __post_init__(self):
        if not 0.0 <= self.p < 1.0:
            raise ValueError("dropout probability must be in [0, 1)")


# ---------------------------------------------------------------------------
# helpers


@dataclass
class _Ctx:
    kind: str
    saved: dict = field(default_factory=dict)


def _need(ctx, kind: str) -> dict:
    if ctx is None:
        raise StateError(f"{kind} backward called without a forward context")
    if not isinstance(ctx, _Ctx) or ctx.kind != kind:
        raise StateError(f"{kind} backward got a context from {getattr(ctx, 'kind', '?')}")
    return ctx.saved


def _check4(x: np.ndarray, what: str) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{what} expects (N, C, H, W), got shape {x.shape}")


def _windows(hp: int, wp: int, spec_k, spec_s, ho, wo):
    sh, sw = spec_s
    for i in range(spec_k[0]):
        for j in range(spec_k[1]):
            yield i, j, (slice(i, i + sh * (ho - 1) + 1, sh), slice(j, j + sw * (wo - 1) + 1, sw))


def _pad(x: np.ndarray, padding) -> np.ndarray:
    t, b, l, r = padding
    if not any(padding):
        return x
    return np.pad(x, ((0, 0), (0, 0), (t, b), (l, r)))


def _unpad(g: np.ndarray, padding, h: int, w: int) -> np.ndarray:
    t, _, l, _ = padding
    return g[:, :, t:t + h, l:l + w]


# ---------------------------------------------------------------------------
# convolutions


def conv2d_forward(spec: Conv2dSpec, x: np.ndarray, weight: np.ndarray, bias=None):
    """Dense or depthwise 2-D cross-correlation."""
    _check4(x, "conv2d")
    if x.shape[1] != spec.in_ch:
        raise ShapeError(f"conv expects {spec.in_ch} input channels, got {x.shape[1]}")
    if weight.shape != spec.weight_shape:
        raise ShapeError(f"weight shape {weight.shape} != expected {spec.weight_shape}")
    if spec.has_bias and (bias is None or bias.shape != (spec.out_ch,)):
        raise ShapeError(f"conv expects a bias of shape ({spec.out_ch},)")
    n, _, h, w = x.shape
    ho, wo = spec.output_hw(h, w)
    xp = _pad(x, spec.padding)
    depthwise = spec.groups != 1
    if depthwise:
        y = np.zeros((n, spec.out_ch, ho, wo), dtype=x.dtype)
    else:
        # accumulate as (O, N, Ho, Wo): tensordot's natural output layout
        y = np.zeros((spec.out_ch, n, ho, wo), dtype=x.dtype)
    for i, j, (si, sj) in _windows(*xp.shape[2:], spec.kernel, spec.stride, ho, wo):
        xs = xp[:, :, si, sj]
        if depthwise:
            y += weight[:, 0, i, j][None, :, None, None] * xs
        else:
            y += np.tensordot(weight[:, :, i, j], xs, axes=(1, 1))
    if not depthwise:
        y = np.ascontiguousarray(y.transpose(1, 0, 2, 3))
    if spec.has_bias:
        y += bias[None, :, None, None]
    return y, _Ctx("conv2d", {"spec": spec, "xp": xp, "weight": weight, "hw": (h, w)})


def conv2d_backward(ctx, grad: np.ndarray):
    s = _need(ctx, "conv2d")
    spec, xp, weight = s["spec"], s["xp"], s["weight"]
    _, _, ho, wo = grad.shape
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(weight)
    depthwise = spec.groups != 1
    for i, j, (si, sj) in _windows(*xp.shape[2:], spec.kernel, spec.stride, ho, wo):
        xs = xp[:, :, si, sj]
        if depthwise:
            dw[:, 0, i, j] = np.einsum("nchw,nchw->c", grad, xs)
            dxp[:, :, si, sj] += grad * weight[:, 0, i, j][None, :, None, None]
        else:
            dw[:, :, i, j] = np.tensordot(grad, xs, axes=([0, 2, 3], [0, 2, 3]))
            # (N, Ho, Wo, C) -> (N, C, Ho, Wo)
            dxp[:, :, si, sj] += np.tensordot(grad, weight[:, :, i, j], axes=(1, 0)).transpose(0, 3, 1, 2)
    grads = {"weight": dw}
    if spec.has_bias:
        grads["bias"] = grad.sum(axis=(0, 2, 3))
    return _unpad(dxp, spec.padding, *s["hw"]), grads


def conv1d_forward(spec: Conv1dSpec, x: np.ndarray, weight: np.ndarray, bias=None):
    """Strided 1-D convolution on ``(C, 1, T)`` or batched ``(N, C, 1, T)`` input.

    ``weight`` is ``(out_ch, in_ch, k)`` or the 2-D form ``(out_ch, in_ch, 1, k)``.
    """
    single = x.ndim == 3
    x4 = x[None] if single else x
    if x4.ndim != 4 or x4.shape[2] != 1:
        raise ShapeError(f"conv1d expects (C, 1, T) or (N, C, 1, T), got {x.shape}")
    if x4.shape[3] + spec.pad_left + spec.pad_right < spec.kernel:
        raise ShapeError("input shorter than the kernel")
    w4 = weight[:, :, None, :] if weight.ndim == 3 else weight
    y, ctx = conv2d_forward(spec.to_2d(), x4, w4, bias)
    ctx.saved["single"] = single
    ctx.saved["w3"] = weight.ndim == 3
    return (y[0] if single else y), ctx


def conv1d_backward(ctx, grad: np.ndarray):
    s = _need(ctx, "conv2d")
    dx, grads = conv2d_backward(ctx, grad[None] if s.get("single") else grad)
    if s.get("w3"):
        grads["weight"] = grads["weight"][:, :, 0, :]
    return (dx[0] if s.get("single") else dx), grads


def depthwise_forward(spec: Conv2dSpec, x, weight):
    if spec.groups != spec.in_ch:
        raise ShapeError("depthwise_forward needs a groups == in_ch spec")
    return conv2d_forward(spec, x, weight)


def pointwise_forward(spec: Conv2dSpec, x, weight, bias=None):
    if spec.kernel != (1, 1):
        raise ShapeError("pointwise_forward needs a 1x1 spec")
    return conv2d_forward(spec, x, weight, bias)


depthwise_backward = conv2d_backward
pointwise_backward = conv2d_backward


# ---------------------------------------------------------------------------
# batch norm


def batchnorm_forward(spec: BatchNormSpec, x, gamma, beta, running_mean, running_var,
                      mode: str = "infer"):
    """Per-channel batch normalization over (N, H, W).

    Returns ``(y, ctx, (new_mean, new_var))``. In ``infer`` mode the running
    statistics are used and returned unchanged; in ``train`` mode the batch
    statistics normalize and the returned running stats are updated with
    ``spec.momentum`` (the variance update uses the unbiased estimate).
    Callers decide whether to store the new statistics.
    """
    _check4(x, "batchnorm")
    if x.shape[1] != spec.channels:
        raise ShapeError(f"batchnorm expects {spec.channels} channels, got {x.shape[1]}")
    bshape = (1, -1, 1, 1)
    if mode == "train":
        count = x.shape[0] * x.shape[2] * x.shape[3]
        mean = x.mean(axis=(0, 2, 3), dtype=np.float64)
        var = x.var(axis=(0, 2, 3), dtype=np.float64)
        unbiased = var * (count / (count - 1)) if count > 1 else var
        m = spec.momentum
        new_stats = ((1 - m) * running_mean + m * mean, (1 - m) * running_var + m * unbiased)
    elif mode == "infer":
        mean, var = running_mean, running_var
        new_stats = (running_mean, running_var)
    else:
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    inv_std = (1.0 / np.sqrt(var + spec.eps)).astype(x.dtype)
    xhat = (x - mean.astype(x.dtype).reshape(bshape)) * inv_std.reshape(bshape)
    y = gamma.reshape(bshape) * xhat + beta.reshape(bshape)
    y = y.astype(x.dtype, copy=False)
    ctx = _Ctx("batchnorm", {"xhat": xhat, "inv_std": inv_std, "gamma": gamma, "mode": mode})
    return y, ctx, new_stats


def batchnorm_backward(ctx, grad):
    s = _need(ctx, "batchnorm")
    xhat, inv_std, gamma = s["xhat"], s["inv_std"], s["gamma"]
    bshape = (1, -1, 1, 1)
    dgamma = np.einsum("nchw,nchw->c", grad, xhat, dtype=np.float64).astype(grad.dtype)
    dbeta = grad.sum(axis=(0, 2, 3), dtype=np.float64).astype(grad.dtype)
    dxhat = grad * gamma.reshape(bshape)
    if s["mode"] == "infer":
        dx = dxhat * inv_std.reshape(bshape)
    else:
        m = grad.shape[0] * grad.shape[2] * grad.shape[3]
        sum_d = dxhat.sum(axis=(0, 2, 3), dtype=np.float64).astype(grad.dtype).reshape(bshape)
        sum_dx = np.einsum("nchw,nchw->c", dxhat, xhat, dtype=np.float64).astype(grad.dtype).reshape(bshape)
        dx = (inv_std.reshape(bshape) / m) * (m * dxhat - sum_d - xhat * sum_dx)
    return dx.astype(grad.dtype, copy=False), {"gamma": dgamma, "beta": dbeta}


# ---------------------------------------------------------------------------
# pooling


def _pool_extent(n: int, k: int) -> tuple[int, int]:
    # Floor semantics; an axis shorter than the kernel pools over what is there.
    eff = min(k, n)
    return n // eff, eff


def maxpool_forward(spec: PoolSpec, x):
    _check4(x, "maxpool")
    n, c, h, w = x.shape
    oh, kh = _pool_extent(h, spec.kernel[0])
    ow, kw = _pool_extent(w, spec.kernel[1])
    win = x[:, :, :oh * kh, :ow * kw].reshape(n, c, oh, kh, ow, kw)
    win = win.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, kh * kw)
    arg = win.argmax(axis=-1)
    y = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return y, _Ctx("maxpool", {"arg": arg, "shape": x.shape, "k": (kh, kw)})


def maxpool_backward(ctx, grad):
    s = _need(ctx, "maxpool")
    arg, (n, c, h, w), (kh, kw) = s["arg"], s["shape"], s["k"]
    oh, ow = arg.shape[2:]
    win = np.zeros((n, c, oh, ow, kh * kw), dtype=grad.dtype)
    np.put_along_axis(win, arg[..., None], grad[..., None], axis=-1)
    win = win.reshape(n, c, oh, ow, kh, kw).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh * kh, ow * kw)
    dx = np.zeros((n, c, h, w), dtype=grad.dtype)
    dx[:, :, :oh * kh, :ow * kw] = win
    return dx, {}


def avgpool_global(x):
    """Mean over every spatial position: ``(N, C, H, W) -> (N, C)``.

    Also accepts a single ``(C, H, W)`` tensor and returns ``(C,)``.
    """
    single = x.ndim == 3
    x4 = x[None] if single else x
    _check4(x4, "avgpool_global")
    y = x4.mean(axis=(2, 3))
    return (y[0] if single else y), _Ctx("avgpool", {"shape": x4.shape, "single": single})


def avgpool_global_backward(ctx, grad):
    s = _need(ctx, "avgpool")
    n, c, h, w = s["shape"]
    g = grad[None] if s["single"] else grad
    dx = np.broadcast_to(g[:, :, None, None] / (h * w), (n, c, h, w)).copy()
    return (dx[0] if s["single"] else dx), {}


# ---------------------------------------------------------------------------
# activations, dropout, softmax


def relu_forward(x):
    mask = x > 0
    # np.maximum keeps NaN, so a diverged activation is not silently zeroed
    return np.maximum(x, 0).astype(x.dtype, copy=False), _Ctx("relu", {"mask": mask})


def relu_backward(ctx, grad):
    mask = _need(ctx, "relu")["mask"]
    return np.where(mask, grad, 0).astype(grad.dtype, copy=False), {}


def dropout_forward(spec: DropoutSpec, x, mode: str = "infer", rng: np.random.Generator | None = None):
    """Inverted dropout; identity outside training."""
    if mode != "train" or spec.p == 0.0:
        return x, _Ctx("dropout", {"scale": None})
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    keep = rng.random(x.shape) >= spec.p
    scale = keep.astype(x.dtype) / np.asarray(1.0 - spec.p, dtype=x.dtype)
    return x * scale, _Ctx("dropout", {"scale": scale})


def dropout_backward(ctx, grad):
    scale = _need(ctx, "dropout")["scale"]
    return (grad if scale is None else grad * scale), {}


def softmax(x, axis: int = -1):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)
