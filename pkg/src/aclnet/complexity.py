"""Parameter and multiply-accumulate accounting for a LayerGraph.

MAC convention: one MAC per multiply-accumulate inside a convolution
kernel. Batch norm (foldable into the preceding conv), ReLU, pooling,
dropout and softmax cost nothing. MACs are reported per reference window
(1.28 s by default) and per second of audio.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .builder import LayerGraph, LayerNode, NetworkConfig, build
from .layers import Conv2dSpec

REFERENCE_WINDOW_SECONDS = 1.28
CSV_HEADER = ("config", "llf_params", "llf_mmacs", "hlf_params", "hlf_mmacs",
              "total_params", "total_mmacs", "width_multiplier")

# Published reference figures, one row per (rate, conv type, WM):
# llf params (k), llf MMACS, hlf params (k), hlf MMACS, total params (k), total MMACS.
# Values kept as strings so the number of printed decimals is known.
REFERENCE_TABLE = (
    (16000, "DWSC", 0.125, "1.44", "4.35", "13.91", "2.93", "15.35", "7.28"),
    (16000, "DWSC", 0.5, "1.44", "4.35", "153.43", "31.07", "154.87", "35.42"),
    (16000, "DWSC", 1.0, "1.44", "4.35", "567.92", "113.7", "569.4", "118.1"),
    (44100, "DWSC", 0.125, "1.81", "17.98", "13.91", "2.96", "15.72", "20.94"),
    (44100, "DWSC", 0.5, "1.81", "17.98", "153.43", "31.33", "155.23", "49.31"),
    (44100, "DWSC", 1.0, "1.81", "17.98", "567.92", "114.6", "569.73", "132.59"),
    (44100, "SC", 0.125, "6.99", "80.9", "77.21", "8.88", "84.21", "131.17"),
    (44100, "SC", 0.5, "6.99", "80.9", "1190.0", "132.72", "1197.0", "255.01"),
    (44100, "SC", 1.0, "6.99", "80.9", "4730.0", "524.67", "4737.0", "646.97"),
    (44100, "SC", 1.5, "6.99", "80.9", "10620", "786.56", "10627", "867.45"),
)

SWEEP_WIDTHS = (Fraction(1, 32), Fraction(1, 16), Fraction(1, 8), Fraction(1, 4), Fraction(1, 2),
                Fraction(3, 4), Fraction(1), Fraction(3, 2), Fraction(2))
SWEEP_FAMILIES = ((16000, "DWSC"), (44100, "DWSC"), (44100, "SC"))


@dataclass(frozen=True)
class LayerCost:
    name: str
    part: str
    params: int
    macs: int


@dataclass
class ComplexityReport:
    config: NetworkConfig
    input_len: int
    rows: list[LayerCost] = field(default_factory=list)

    def _sum(self, attr: str, part: str | None = None) -> int:
        return sum(getattr(r, attr) for r in self.rows if part is None or r.part == part)

    @property
    def llf_params(self) -> int:
        return self._sum("params", "LLF")

    @property
    def hlf_params(self) -> int:
        return self._sum("params", "HLF")

    @property
    def total_params(self) -> int:
        return self._sum("params")

    @property
    def llf_macs(self) -> int:
        return self._sum("macs", "LLF")

    @property
    def hlf_macs(self) -> int:
        return self._sum("macs", "HLF")

    @property
    def total_macs(self) -> int:
        return self._sum("macs")

    @property
    def window_seconds(self) -> float:
        return self.input_len / self.config.sample_rate

    def mmacs(self, part: str | None = None) -> float:
        """Millions of MACs per analysis window."""
        return self._sum("macs", part) / 1e6

    def mmacs_per_second(self, part: str | None = None) -> float:
        return self.mmacs(part) / self.window_seconds


def _conv_params(conv: Conv2dSpec, bn: bool) -> int:
    kh, kw = conv.kernel
    n = conv.in_ch // conv.groups * conv.out_ch * kh * kw
    if conv.has_bias:
        n += conv.out_ch
    if bn:
        n += 2 * conv.out_ch
    return n


def _conv_macs(conv: Conv2dSpec, out_hw: tuple[int, int]) -> int:
    kh, kw = conv.kernel
    return out_hw[0] * out_hw[1] * conv.out_ch * kh * kw * (conv.in_ch // conv.groups)


def layer_cost(node: LayerNode) -> LayerCost:
    out_hw = tuple(node.out_shape[1:]) if len(node.out_shape) == 3 else (1, 1)
    if node.kind == "conv":
        return LayerCost(node.name, node.part, _conv_params(node.spec, node.bn),
                         _conv_macs(node.spec, out_hw))
    if node.kind == "dwsc":
        dw, pw = node.spec.depthwise, node.spec.pointwise
        return LayerCost(node.name, node.part,
                         _conv_params(dw, True) + _conv_params(pw, True),
                         _conv_macs(dw, out_hw) + _conv_macs(pw, out_hw))
    return LayerCost(node.name, node.part, 0, 0)


def analyze(graph: LayerGraph) -> ComplexityReport:
    return ComplexityReport(graph.config, graph.input_len, [layer_cost(n) for n in graph])


def count_params(graph: LayerGraph) -> ComplexityReport:
    """Per-layer and total parameter counts (independent of input length)."""
    return analyze(graph)


def count_macs(graph: LayerGraph, input_len: int | None = None) -> ComplexityReport:
    """Per-layer MACs for ``input_len`` samples (defaults to the graph's own length)."""
    if input_len is not None and input_len != graph.input_len:
        graph = build(graph.config, input_len)
    return analyze(graph)


def reference_input_len(config: NetworkConfig, seconds: float = REFERENCE_WINDOW_SECONDS) -> int:
    return round(seconds * config.sample_rate)


def report_for(config: NetworkConfig, seconds: float = REFERENCE_WINDOW_SECONDS) -> ComplexityReport:
    return analyze(build(config, reference_input_len(config, seconds)))


def sweep(configs: Iterable[NetworkConfig], seconds: float = REFERENCE_WINDOW_SECONDS) -> list[ComplexityReport]:
    return [report_for(c, seconds) for c in configs]


def paper_grid_configs() -> list[NetworkConfig]:
    """Reference-table rows first, then the full width sweep for all three families."""
    out = [NetworkConfig(sample_rate=r, conv_type=ct, width_multiplier=wm)
           for r, ct, wm, *_ in REFERENCE_TABLE]
    for rate, ct in SWEEP_FAMILIES:
        out += [NetworkConfig(sample_rate=rate, conv_type=ct, width_multiplier=float(wm))
                for wm in SWEEP_WIDTHS]
    return out


def reference_row(config: NetworkConfig):
    for r, ct, wm, *vals in REFERENCE_TABLE:
        if (r, ct) == (config.sample_rate, config.conv_type) and wm == config.width_multiplier:
            return vals
    return None


MMACS_BAND = (0.5, 2.0)


def mmacs_ratios(report: ComplexityReport) -> dict[str, float] | None:
    """Our MMACS over the published MMACS for LLF, HLF and total, if published."""
    ref = reference_row(report.config)
    if ref is None:
        return None
    return {"LLF": report.mmacs("LLF") / float(ref[1]),
            "HLF": report.mmacs("HLF") / float(ref[3]),
            "total": report.mmacs() / float(ref[5])}


def out_of_band(report: ComplexityReport, band: tuple[float, float] = MMACS_BAND) -> list[str]:
    """Components whose MMACS ratio to the published value falls outside ``band``."""
    ratios = mmacs_ratios(report) or {}
    return [k for k, v in ratios.items() if not band[0] <= v <= band[1]]


def _wm_text(wm: float) -> str:
    frac = Fraction(wm).limit_denominator(1024)
    return str(frac) if frac.denominator != 1 or float(frac) != wm else f"{wm:g}"


def to_csv(reports: Sequence[ComplexityReport], out=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in reports:
        w.writerow([
            r.config.label.replace(" ", "-"),
            r.llf_params, f"{r.mmacs('LLF'):.2f}",
            r.hlf_params, f"{r.mmacs('HLF'):.2f}",
            r.total_params, f"{r.mmacs():.2f}",
            f"{r.config.width_multiplier:g}",
        ])
    text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text


def format_table(reports: Sequence[ComplexityReport], compare: bool = True) -> str:
    """Aligned text table; rows with a published counterpart get ratio columns.

    The ``ref`` columns list published total params (k) and total MMACS, and
    ``dP``/``dM`` are our value divided by the published one. ``flag`` names
    each component (LLF, HLF, total) whose MMACS is off by more than 2x.
    """
    head = ["config", "WM", "LLF k", "LLF MMAC", "HLF k", "HLF MMAC", "total k", "total MMAC",
            "MMAC/s"]
    if compare:
        head += ["ref k", "ref MMAC", "dP", "dM", "flag"]
    lines = []
    for r in reports:
        row = [r.config.label, _wm_text(r.config.width_multiplier),
               f"{r.llf_params / 1e3:.2f}", f"{r.mmacs('LLF'):.2f}",
               f"{r.hlf_params / 1e3:.2f}", f"{r.mmacs('HLF'):.2f}",
               f"{r.total_params / 1e3:.2f}", f"{r.mmacs():.2f}", f"{r.mmacs_per_second():.2f}"]
        if compare:
            ref = reference_row(r.config)
            if ref is None:
                row += ["-", "-", "-", "-", "-"]
            else:
                ref_p, ref_m = float(ref[4]), float(ref[5])
                row += [ref[4], ref[5], f"{r.total_params / 1e3 / ref_p:.3f}",
                        f"{r.mmacs() / ref_m:.3f}", ",".join(out_of_band(r)) or "ok"]
        lines.append(row)
    widths = [max(len(x) for x in col) for col in zip(head, *lines)]
    fmt = lambda cells: "  ".join(c.rjust(w) for c, w in zip(cells, widths))
    out = [f"# MACs counted per {REFERENCE_WINDOW_SECONDS:g} s window, one per kernel "
           "multiply-accumulate; BN/ReLU/pooling free. MMAC/s = per second of audio.",
           fmt(head), fmt(["-" * w for w in widths])]
    out += [fmt(row) for row in lines]
    return "\n".join(out)
