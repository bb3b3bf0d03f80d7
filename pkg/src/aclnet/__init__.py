"""AclNet: end-to-end waveform CNNs for audio classification, in numpy.

Build a network from a :class:`NetworkConfig`, count its parameters and
multiply-accumulates, augment and mix training audio, train with momentum
SGD and run inference on clips of any length.
"""
from .builder import (
    LayerGraph,
    NetworkConfig,
    WeightSet,
    apply_width_multiplier,
    build,
    init_weights,
    scale_llf_for_rate,
)
from .complexity import ComplexityReport, count_macs, count_params, report_for, sweep
from .network import backward, forward, predict

__all__ = [
    "ComplexityReport",
    "LayerGraph",
    "NetworkConfig",
    "WeightSet",
    "apply_width_multiplier",
    "backward",
    "build",
    "count_macs",
    "count_params",
    "forward",
    "init_weights",
    "predict",
    "report_for",
    "scale_llf_for_rate",
    "sweep",
]
