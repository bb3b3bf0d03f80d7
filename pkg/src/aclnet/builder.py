"""Architecture construction: NetworkConfig -> resolved LayerGraph -> weights."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from .errors import ConfigError
from .layers import (
    BatchNormSpec,
    Conv1dSpec,
    Conv2dSpec,
    DepthwiseSeparableSpec,
    DropoutSpec,
    PoolSpec,
)

SUPPORTED_RATES = (16000, 44100)
BASE_RATE = 16000
LLF_CHANNELS = 64
# Conv3 .. Conv11 at width multiplier 1.0
HLF_BASE_CHANNELS = (32, 64, 64, 128, 128, 256, 256, 512, 512)
CONV_TYPES = ("SC", "DWSC")
_LLF_DEFAULTS = {"SC": (8, 2, 2), "DWSC": (16, 2, 4)}


@dataclass(frozen=True)
class NetworkConfig:
    """Every architecture knob.

    ``llf_kernel1``/``llf_kernel2`` are given at the 16 kHz basis and scaled
    with the sample rate. ``c1``, ``s1``, ``s2`` default per conv type.
    """

    sample_rate: int = 16000
    conv_type: str = "DWSC"
    width_multiplier: float = 1.0
    c1: int | None = None
    s1: int | None = None
    s2: int | None = None
    llf_kernel1: int = 9
    llf_kernel2: int = 5
    num_classes: int = 50
    dropout_p: float = 0.2

    def __post_init__(self):
        ct = str(self.conv_type).upper()
        if ct not in CONV_TYPES:
            raise ConfigError(f"conv_type must be SC or DWSC, got {self.conv_type!r}")
        object.__setattr__(self, "conv_type", ct)
        for name, default in zip(("c1", "s1", "s2"), _LLF_DEFAULTS[ct]):
            if getattr(self, name) is None:
                object.__setattr__(self, name, default)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))
        object.__setattr__(self, "width_multiplier", float(self.width_multiplier))
        self.validate()

    def validate(self) -> None:
        if self.sample_rate not in SUPPORTED_RATES:
            raise ConfigError(f"sample_rate must be one of {SUPPORTED_RATES}, got {self.sample_rate}")
        if not (self.width_multiplier > 0 and math.isfinite(self.width_multiplier)):
            raise ConfigError(f"width_multiplier must be > 0, got {self.width_multiplier}")
        for name in ("c1", "s1", "s2", "llf_kernel1", "llf_kernel2", "num_classes"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"{name} must be a positive int, got {v!r}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        decim = self.s1 * self.s2
        if self.sample_rate == BASE_RATE and (BASE_RATE // 100) % decim:
            raise ConfigError(f"s1*s2 = {decim} must divide 160 at 16 kHz")
        if (self.sample_rate // 100) // decim < 1:
            raise ConfigError(f"s1*s2 = {decim} exceeds the samples in one 10 ms frame")

    def replace(self, **changes) -> "NetworkConfig":
        return replace(self, **changes)

    @property
    def label(self) -> str:
        rate = "16k" if self.sample_rate == 16000 else "44.1k"
        return f"{rate} {self.conv_type}"


@dataclass(frozen=True)
class LLFGeometry:
    kernel1: int
    kernel2: int
    s1: int
    s2: int
    pool_kernel: int

    @property
    def samples_per_frame(self) -> int:
        return self.s1 * self.s2 * self.pool_kernel


def apply_width_multiplier(base_channels: int, wm: float) -> int:
    if not wm > 0:
        raise ConfigError(f"width multiplier must be > 0, got {wm}")
    return max(1, math.floor(base_channels * wm + 0.5))


def scale_llf_for_rate(config: NetworkConfig) -> LLFGeometry:
    """Resolve LLF kernels, strides and the Maxpool1 kernel for the config's rate.

    Kernels scale by ``rate / 16000`` (rounded down). Strides stay fixed; the
    Maxpool1 kernel takes the remaining decimation to a 10 ms frame, rounded
    down (441 / 8 -> 55 at 44.1 kHz with DWSC defaults).
    """
    rate = config.sample_rate
    if rate not in SUPPORTED_RATES:
        raise ConfigError(f"unsupported sample rate {rate}")
    ratio = rate / BASE_RATE
    k1 = max(1, math.floor(config.llf_kernel1 * ratio))
    k2 = max(1, math.floor(config.llf_kernel2 * ratio))
    pool = (rate // 100) // (config.s1 * config.s2)
    return LLFGeometry(k1, k2, config.s1, config.s2, pool)


# ---------------------------------------------------------------------------
# graph


@dataclass(frozen=True)
class LayerNode:
    name: str
    kind: str  # conv | dwsc | maxpool | transpose | dropout | avgpool | softmax
    spec: object
    in_shape: tuple[int, ...]
    out_shape: tuple[int, ...]
    part: str  # "LLF" or "HLF"
    bn: bool = False
    relu: bool = False


@dataclass(frozen=True)
class LayerGraph:
    config: NetworkConfig
    input_len: int
    llf: LLFGeometry
    nodes: tuple[LayerNode, ...]

    def __iter__(self) -> Iterator[LayerNode]:
        return iter(self.nodes)

    def __getitem__(self, name: str) -> LayerNode:
        for node in self.nodes:
            if node.name == name:
                return node
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [n.name for n in self.nodes]

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self.nodes[-1].out_shape

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        """Learnable tensors in execution order."""
        out: dict[str, tuple[int, ...]] = {}
        for node in self.nodes:
            if node.kind == "conv":
                out[f"{node.name}.weight"] = node.spec.weight_shape
                if node.spec.has_bias:
                    out[f"{node.name}.bias"] = (node.spec.out_ch,)
                if node.bn:
                    out[f"{node.name}.bn.gamma"] = (node.spec.out_ch,)
                    out[f"{node.name}.bn.beta"] = (node.spec.out_ch,)
            elif node.kind == "dwsc":
                for sub, conv in (("dw", node.spec.depthwise), ("pw", node.spec.pointwise)):
                    out[f"{node.name}.{sub}.weight"] = conv.weight_shape
                    out[f"{node.name}.{sub}.bn.gamma"] = (conv.out_ch,)
                    out[f"{node.name}.{sub}.bn.beta"] = (conv.out_ch,)
        return out

    def buffer_shapes(self) -> dict[str, tuple[int, ...]]:
        """BN running statistics, keyed like ``Conv4.dw.bn.running_mean``."""
        out = {}
        for name, shape in self.param_shapes().items():
            if name.endswith(".bn.gamma"):
                prefix = name[: -len("gamma")]
                out[prefix + "running_mean"] = shape
                out[prefix + "running_var"] = shape
        return out


def _conv_node(name, part, conv: Conv2dSpec, in_shape, bn=True, relu=True) -> LayerNode:
    c, h, w = in_shape
    ho, wo = conv.output_hw(h, w)
    return LayerNode(name, "conv", conv, in_shape, (conv.out_ch, ho, wo), part, bn, relu)


def _block(name, part, conv_type, in_ch, out_ch, kernel, stride, padding, in_shape) -> LayerNode:
    if conv_type == "SC":
        return _conv_node(name, part, Conv2dSpec(in_ch, out_ch, kernel, stride, padding), in_shape)
    spec = DepthwiseSeparableSpec(in_ch, out_ch, kernel, stride, padding)
    _, h, w = in_shape
    ho, wo = spec.depthwise.output_hw(h, w)
    return LayerNode(name, "dwsc", spec, in_shape, (out_ch, ho, wo), part, True, True)


def _pool_node(name, part, kernel, in_shape) -> LayerNode:
    spec = PoolSpec("max", kernel)
    c, h, w = in_shape
    return LayerNode(name, "maxpool", spec, in_shape, (c, *spec.output_hw(h, w)), part)


def min_input_len(config: NetworkConfig) -> int:
    return scale_llf_for_rate(config).samples_per_frame


def build(config: NetworkConfig, input_len: int) -> LayerGraph:
    """Resolve every layer and its shapes for an input of ``input_len`` samples."""
    config.validate()
    geo = scale_llf_for_rate(config)
    if input_len < geo.samples_per_frame:
        raise ConfigError(
            f"input of {input_len} samples is shorter than one frame ({geo.samples_per_frame} samples)"
        )
    nodes: list[LayerNode] = []

    def add(node: LayerNode) -> tuple[int, ...]:
        nodes.append(node)
        return node.out_shape

    shape: tuple[int, ...] = (1, 1, input_len)
    conv1 = Conv1dSpec.decimating(1, config.c1, geo.kernel1, geo.s1).to_2d()
    shape = add(_conv_node("Conv1", "LLF", conv1, shape))
    conv2 = Conv1dSpec.decimating(config.c1, LLF_CHANNELS, geo.kernel2, geo.s2).to_2d()
    shape = add(_block("Conv2", "LLF", config.conv_type, config.c1, LLF_CHANNELS,
                       conv2.kernel, conv2.stride, conv2.padding, shape))
    shape = add(_pool_node("Maxpool1", "LLF", (1, geo.pool_kernel), shape))
    c, _, t = shape
    shape = add(LayerNode("Transpose", "transpose", None, shape, (1, c, t), "HLF"))

    chans = [apply_width_multiplier(b, config.width_multiplier) for b in HLF_BASE_CHANNELS]
    conv3 = Conv2dSpec(1, chans[0])
    shape = add(_conv_node("Conv3", "HLF", conv3, shape))
    shape = add(_pool_node("Maxpool2", "HLF", (2, 2), shape))
    in_ch = chans[0]
    for stage in range(4):
        for k in range(2):
            idx = 1 + 2 * stage + k
            shape = add(_block(f"Conv{idx + 3}", "HLF", config.conv_type, in_ch, chans[idx],
                               (3, 3), (1, 1), (1, 1, 1, 1), shape))
            in_ch = chans[idx]
        shape = add(_pool_node(f"Maxpool{stage + 3}", "HLF", (2, 2), shape))

    shape = add(LayerNode("Dropout", "dropout", DropoutSpec(config.dropout_p), shape, shape, "HLF"))
    head = Conv2dSpec(in_ch, config.num_classes, (1, 1), (1, 1), (0, 0, 0, 0), has_bias=True)
    shape = add(_conv_node("Conv12", "HLF", head, shape, bn=False, relu=False))
    shape = add(LayerNode("Avgpool1", "avgpool", PoolSpec("avg-global"), shape,
                          (config.num_classes,), "HLF"))
    add(LayerNode("Softmax", "softmax", None, shape, shape, "HLF"))
    return LayerGraph(config, int(input_len), geo, tuple(nodes))


# ---------------------------------------------------------------------------
# weights


@dataclass
class WeightSet:
    """Learnable tensors plus BN running statistics, both name-keyed and ordered."""

    params: dict[str, np.ndarray] = field(default_factory=dict)
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def num_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def flatten(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params.values()])

    def astype(self, dtype) -> "WeightSet":
        return WeightSet({k: v.astype(dtype) for k, v in self.params.items()},
                         {k: v.astype(dtype) for k, v in self.buffers.items()})

    def copy(self) -> "WeightSet":
        return WeightSet({k: v.copy() for k, v in self.params.items()},
                         {k: v.copy() for k, v in self.buffers.items()})


def _fan_in(shape: tuple[int, ...]) -> int:
    return int(np.prod(shape[1:]))


def init_weights(graph: LayerGraph, seed: int = 0, dtype=np.float32) -> WeightSet:
    """Fan-in scaled uniform init; BN gamma=1, beta=0, running stats (0, 1).

    Convs feeding a ReLU get variance 2/fan_in (He); the linear class head
    gets 1/fan_in and a zero bias.
    """
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in graph.param_shapes().items():
        if name.endswith(".weight"):
            gain = 1.0 if name.startswith("Conv12.") else 2.0
            bound = math.sqrt(3.0 * gain / _fan_in(shape))
            params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
        elif name.endswith(".gamma"):
            params[name] = np.ones(shape, dtype=dtype)
        else:
            params[name] = np.zeros(shape, dtype=dtype)
    buffers = {}
    for name, shape in graph.buffer_shapes().items():
        fill = 0.0 if name.endswith("running_mean") else 1.0
        buffers[name] = np.full(shape, fill, dtype=dtype)
    return WeightSet(params, buffers)
