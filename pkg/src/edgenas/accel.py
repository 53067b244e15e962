"""Analytical performance model (APM) for a systolic-array accelerator.

Roofline with three ceilings per layer, each expressed as a time:

  compute_us = macs / (R * C * clock_hz * utilization) * 1e6
  dram_us    = dram_bytes / dram_bw * 1e6
  bus_us     = bus_bytes / onchip_bus_bw * 1e6

and layer latency = max of the three. Utilization models how well a layer
fills an R x C weight-stationary array: the contraction dimension D (k^2 *
Cin for convolutions, Cin for dense) maps to rows, output channels to
columns, so

  u = D / (R * ceil(D/R)) * Cout / (C * ceil(Cout/C))

Depthwise convolutions have no cross-channel reduction, so only one
contraction row is ever active: u = (1/R) * u_out over channels. This single
rule is what makes fused blocks beat depthwise bottlenecks on some shapes
and lose on others.

Traffic model: weights are fetched from DRAM once; activations (input +
output) cross DRAM and the internal bus once each way, multiplied by a
refetch factor ceil(working_set / buffer_bytes) when the layer does not fit
in the on-chip buffer. IBN-style blocks are accounted as the sum of their
serialized sub-layers, then the roofline max is taken over the summed
ceilings.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from math import ceil

from .ir import (
    LayerSpec,
    Conv2D,
    DepthwiseConv,
    Dense,
    GlobalAvgPool,
    IBNBlock,
    FusedIBNBlock,
    ModelGraph,
    ModelValidationError,
    ShapeError,
    TensorShape,
    count_macs,
    count_params,
    layer_names,
    output_shape,
    sublayers,
    validate_with_shapes,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Accelerator configuration violates its invariants."""


@dataclass(frozen=True)
class AcceleratorConfig:
    array_rows: int
    array_cols: int
    clock_hz: float
    dram_bw: float
    onchip_bus_bw: float
    buffer_bytes: int
    bytes_per_element: float = 1.0

    def __post_init__(self):
        for name in ("array_rows", "array_cols", "clock_hz", "dram_bw",
                     "onchip_bus_bw", "buffer_bytes", "bytes_per_element"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"AcceleratorConfig.{name} must be positive")
        if self.onchip_bus_bw < self.dram_bw:
            raise ConfigError("onchip_bus_bw must be >= dram_bw")


def config_from_dict(obj: dict) -> AcceleratorConfig:
    known = {f: obj[f] for f in obj}
    try:
        return AcceleratorConfig(**known)
    except TypeError as e:
        raise ConfigError(f"bad accelerator config: {e}") from e


def load_config(path) -> AcceleratorConfig:
    with open(path, "rb") as f:
        return config_from_dict(tomllib.load(f))


@dataclass(frozen=True)
class LayerLatency:
    compute_us: float
    dram_us: float
    bus_us: float
    latency_us: float
    bound: str  # "compute" | "dram" | "bus", tie-break in that order
    utilization: float


@dataclass(frozen=True)
class LatencyBreakdown:
    per_layer: tuple[LayerLatency, ...]
    total_us: float
    macs: int
    params: int


def traffic(layer: LayerSpec, in_shape: TensorShape, cfg: AcceleratorConfig) -> tuple[float, float]:
    """(dram_bytes, bus_bytes) for one layer.

    The refetch factor applies to the activation portion only; weights stay
    resident once loaded. Blocks sum their sub-layers.
    """
    if isinstance(layer, (IBNBlock, FusedIBNBlock)):
        parts = [traffic(sub, s, cfg) for sub, s in sublayers(layer, in_shape)]
        return sum(p[0] for p in parts), sum(p[1] for p in parts)
    bpe = cfg.bytes_per_element
    out = output_shape(layer, in_shape)
    params = count_params(layer, in_shape)
    acts = in_shape.elems + out.elems
    working_set = (acts + params) * bpe
    refetch = ceil(working_set / cfg.buffer_bytes)
    dram = params * bpe + refetch * acts * bpe
    bus = acts * bpe
    return dram, bus


def _unit_utilization(d: int, rows: int) -> float:
    return d / (rows * ceil(d / rows))


def utilization(layer: LayerSpec, in_shape: TensorShape, cfg: AcceleratorConfig) -> float:
    """Fraction of peak array throughput the layer can reach, in (0, 1].

    Blocks report the MAC-weighted effective value of their sub-layers
    (total MACs divided by the MAC-cycles the sub-layers actually need).
    """
    R, C = cfg.array_rows, cfg.array_cols
    if isinstance(layer, (IBNBlock, FusedIBNBlock)):
        subs = sublayers(layer, in_shape)
        total = sum(count_macs(sub, s) for sub, s in subs)
        weighted = sum(count_macs(sub, s) / utilization(sub, s, cfg) for sub, s in subs)
        return total / weighted
    if isinstance(layer, Conv2D):
        d = layer.kernel**2 * in_shape.c
        return _unit_utilization(d, R) * _unit_utilization(layer.out_channels, C)
    if isinstance(layer, Dense):
        return _unit_utilization(in_shape.c, R) * _unit_utilization(layer.units, C)
    if isinstance(layer, DepthwiseConv):
        return (1.0 / R) * _unit_utilization(in_shape.c, C)
    if isinstance(layer, GlobalAvgPool):
        return 1.0
    raise TypeError(f"unknown layer type {type(layer).__name__}")


def _estimate_layer_stats(layer: LayerSpec, in_shape: TensorShape,
                          cfg: AcceleratorConfig) -> tuple[LayerLatency, int, int]:
    """Hot path: per-primitive (macs, params, utilization, activations) as
    plain integer arithmetic, accumulated into the three ceilings. Blocks
    unroll inline; the result matches composing count_macs / utilization /
    traffic over sublayers() term for term."""
    R, C = cfg.array_rows, cfg.array_cols
    peak = R * C * cfg.clock_hz
    bpe = cfg.bytes_per_element
    h, w, c = in_shape.h, in_shape.w, in_shape.c

    if isinstance(layer, (Conv2D, DepthwiseConv, IBNBlock, FusedIBNBlock)):
        if layer.stride == 2 and (h < 2 or w < 2):
            raise ShapeError(
                f"stride-2 {type(layer).__name__} needs height,width >= 2, got {h}x{w}"
            )
        oh = -(h // -layer.stride)
        ow = -(w // -layer.stride)
        k2 = layer.kernel**2

    if isinstance(layer, Conv2D):
        co = layer.out_channels
        parts = [(oh * ow * co * k2 * c, k2 * c * co,
                  _unit_utilization(k2 * c, R) * _unit_utilization(co, C),
                  h * w * c + oh * ow * co)]
    elif isinstance(layer, DepthwiseConv):
        parts = [(oh * ow * c * k2, k2 * c,
                  _unit_utilization(c, C) / R,
                  h * w * c + oh * ow * c)]
    elif isinstance(layer, IBNBlock):
        mid = layer.expansion * c
        co = layer.out_channels
        parts = [
            (h * w * mid * 1 * c, 1 * c * mid,
             _unit_utilization(c, R) * _unit_utilization(mid, C),
             h * w * c + h * w * mid),
            (oh * ow * mid * k2, k2 * mid,
             _unit_utilization(mid, C) / R,
             h * w * mid + oh * ow * mid),
            (oh * ow * co * 1 * mid, 1 * mid * co,
             _unit_utilization(mid, R) * _unit_utilization(co, C),
             oh * ow * mid + oh * ow * co),
        ]
    elif isinstance(layer, FusedIBNBlock):
        mid = layer.expansion * c
        co = layer.out_channels
        parts = [
            (oh * ow * mid * k2 * c, k2 * c * mid,
             _unit_utilization(k2 * c, R) * _unit_utilization(mid, C),
             h * w * c + oh * ow * mid),
            (oh * ow * co * 1 * mid, 1 * mid * co,
             _unit_utilization(mid, R) * _unit_utilization(co, C),
             oh * ow * mid + oh * ow * co),
        ]
    elif isinstance(layer, GlobalAvgPool):
        parts = [(0, 0, 1.0, h * w * c + c)]
    elif isinstance(layer, Dense):
        if h != 1 or w != 1:
            raise ShapeError(f"Dense needs a 1x1 spatial input, got {h}x{w}")
        parts = [(c * layer.units, c * layer.units,
                  _unit_utilization(c, R) * _unit_utilization(layer.units, C),
                  c + layer.units)]
    else:
        raise TypeError(f"unknown layer type {type(layer).__name__}")

    compute_us = 0.0
    dram = 0.0
    bus = 0.0
    macs_total = 0
    params_total = 0
    buffer_bytes = cfg.buffer_bytes
    for macs, params, u, acts in parts:
        refetch = ceil((acts + params) * bpe / buffer_bytes)
        compute_us += macs / (peak * u) * 1e6
        dram += params * bpe + refetch * acts * bpe
        bus += acts * bpe
        macs_total += macs
        params_total += params
    dram_us = dram / cfg.dram_bw * 1e6
    bus_us = bus / cfg.onchip_bus_bw * 1e6
    latency_us = max(compute_us, dram_us, bus_us)
    if latency_us == compute_us:
        bound = "compute"
    elif latency_us == dram_us:
        bound = "dram"
    else:
        bound = "bus"
    u_eff = macs_total / (peak * compute_us / 1e6) if macs_total else 1.0
    ll = LayerLatency(
        compute_us=compute_us,
        dram_us=dram_us,
        bus_us=bus_us,
        latency_us=latency_us,
        bound=bound,
        utilization=u_eff,
    )
    return ll, macs_total, params_total


def estimate_layer(layer: LayerSpec, in_shape: TensorShape, cfg: AcceleratorConfig) -> LayerLatency:
    return _estimate_layer_stats(layer, in_shape, cfg)[0]


def estimate_model(graph: ModelGraph, cfg: AcceleratorConfig) -> LatencyBreakdown:
    violations, shapes = validate_with_shapes(graph)
    if violations:
        raise ModelValidationError(violations)
    per_layer = []
    macs = 0
    params = 0
    for layer, (s_in, _) in zip(graph.layers, shapes):
        ll, m, p = _estimate_layer_stats(layer, s_in, cfg)
        per_layer.append(ll)
        macs += m
        params += p
    return LatencyBreakdown(
        per_layer=tuple(per_layer),
        total_us=sum(ll.latency_us for ll in per_layer),
        macs=macs,
        params=params,
    )


def breakdown_rows(graph: ModelGraph, breakdown: LatencyBreakdown) -> list[dict]:
    """Flat per-layer records (name + latency fields) for CSV/wire output."""
    rows = []
    for name, ll in zip(layer_names(graph), breakdown.per_layer):
        rows.append(
            {
                "name": name,
                "latency_us": ll.latency_us,
                "bound": ll.bound,
                "compute_us": ll.compute_us,
                "dram_us": ll.dram_us,
                "bus_us": ll.bus_us,
            }
        )
    return rows
