"""Cycle-approximate simulator of a weight-stationary systolic array.

This is the slow, higher-fidelity oracle the analytical model is validated
against. Layers are executed as a sequence of output tiles sized by a greedy
largest-fit tiler under a double-buffering constraint (a tile's working set
must fit in half the on-chip buffer). For every tile the simulator steps a
discrete clock on which two engines advance in parallel:

  * the array, which retires one compute cycle per tick; a tile needs
    out_positions * ceil(Cout_tile / C) * ceil(D / R) compute cycles, with
    D = k^2 * Cin for convolutions (depthwise activates a single contraction
    row, so its pass count is k^2 per channel group),
  * the DMA engine, which needs ceil(tile_bytes * clock / dram_bw) cycles to
    move the tile's input slice, weights, and output.

With perfect double buffering the next tile's transfer hides behind the
current tile's busy phase, so a tile completes when both engines are done.
Each array pass additionally pays a pipeline fill of R + C - 2 cycles once
per layer.

Per-tile DMA counts the input extent the tile's taps actually touch
((th-1)*stride + k rows when k >= stride, th*k disjoint rows otherwise,
clamped to the input), so finer tilings never move fewer bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

from .ir import (
    LayerSpec,
    Conv2D,
    DepthwiseConv,
    Dense,
    GlobalAvgPool,
    ModelGraph,
    ModelValidationError,
    TensorShape,
    count_macs,
    count_params,
    output_shape,
    sublayers,
    validate_with_shapes,
)
from .accel import AcceleratorConfig


class InfeasibleTile(ValueError):
    """Even a 1x1x1-output tile exceeds half the buffer; config too small."""


@dataclass(frozen=True)
class Tile:
    compute_cycles: int
    dma_cycles: int


@dataclass(frozen=True)
class TileSchedule:
    tile_h: int
    tile_w: int
    tile_c: int
    tiles: tuple[Tile, ...]

    @property
    def tile_count(self) -> int:
        return len(self.tiles)


@dataclass(frozen=True)
class LayerSim:
    cycles: int
    compute_cycles: int  # summed over tiles and sub-layers
    dma_cycles: int


@dataclass(frozen=True)
class SimReport:
    per_layer: tuple[LayerSim, ...]
    total_cycles: int
    total_us: float
    macs: int
    params: int


def _touched_extent(tile_out: int, total_in: int, stride: int, kernel: int) -> int:
    if kernel >= stride:
        span = (tile_out - 1) * stride + kernel
    else:
        span = tile_out * kernel  # strided taps leave gaps that are never fetched
    return min(total_in, span)


def _tile_stats(layer: LayerSpec, in_shape: TensorShape, cfg: AcceleratorConfig,
                th: int, tw: int, tc: int) -> tuple[int, int, int]:
    """(in_elems, out_elems, weight_elems) for one output tile."""
    if isinstance(layer, Conv2D):
        ih = _touched_extent(th, in_shape.h, layer.stride, layer.kernel)
        iw = _touched_extent(tw, in_shape.w, layer.stride, layer.kernel)
        return ih * iw * in_shape.c, th * tw * tc, layer.kernel**2 * in_shape.c * tc
    if isinstance(layer, DepthwiseConv):
        ih = _touched_extent(th, in_shape.h, layer.stride, layer.kernel)
        iw = _touched_extent(tw, in_shape.w, layer.stride, layer.kernel)
        return ih * iw * tc, th * tw * tc, layer.kernel**2 * tc
    if isinstance(layer, Dense):
        return in_shape.c, tc, in_shape.c * tc
    if isinstance(layer, GlobalAvgPool):
        return in_shape.h * in_shape.w * tc, tc, 0
    raise TypeError(f"unsupported layer for tiling: {type(layer).__name__}")


def _tile_compute_cycles(layer: LayerSpec, in_shape: TensorShape, cfg: AcceleratorConfig,
                         th: int, tw: int, tc: int) -> int:
    R, C = cfg.array_rows, cfg.array_cols
    if isinstance(layer, Conv2D):
        d = layer.kernel**2 * in_shape.c
        return th * tw * ceil(tc / C) * ceil(d / R)
    if isinstance(layer, DepthwiseConv):
        return th * tw * ceil(tc / C) * layer.kernel**2
    if isinstance(layer, Dense):
        return ceil(tc / C) * ceil(in_shape.c / R)
    if isinstance(layer, GlobalAvgPool):
        return in_shape.h * in_shape.w * ceil(tc / C)
    raise TypeError(f"unsupported layer for tiling: {type(layer).__name__}")


def _tile_working_set(layer: LayerSpec, in_shape: TensorShape, cfg: AcceleratorConfig,
                      th: int, tw: int, tc: int) -> float:
    i, o, w = _tile_stats(layer, in_shape, cfg, th, tw, tc)
    return (i + o + w) * cfg.bytes_per_element


def plan_tiles(layer: LayerSpec, in_shape: TensorShape, cfg: AcceleratorConfig) -> TileSchedule:
    """Greedy largest-fit tiling of one primitive layer.

    Starting from the whole output, halve the largest of (rows, cols,
    channels) until the nominal tile's working set fits in buffer_bytes / 2.
    Channel tiles stay rounded up to a multiple of the array width while
    above it, so a channel split never changes the total number of
    column-group passes; without this, shrinking the buffer could land on a
    better-aligned tile size and reduce cycles. Edge tiles are clamped, so
    the schedule covers the output exactly.
    """
    out = output_shape(layer, in_shape)
    if isinstance(layer, (GlobalAvgPool, Dense)):
        dims = [1, 1, out.c]
    else:
        dims = [out.h, out.w, out.c]
    budget = cfg.buffer_bytes / 2
    cols = cfg.array_cols
    while _tile_working_set(layer, in_shape, cfg, *dims) > budget:
        if dims == [1, 1, 1]:
            raise InfeasibleTile(
                f"1x1x1 tile of {type(layer).__name__} needs "
                f"{_tile_working_set(layer, in_shape, cfg, 1, 1, 1):.0f} bytes, "
                f"buffer/2 is {budget:.0f}"
            )
        axis = max(range(3), key=lambda k: dims[k])
        halved = ceil(dims[axis] / 2)
        if axis == 2 and halved > cols:
            halved = cols * ceil(halved / cols)  # keep channel tiles array-aligned
        dims[axis] = halved
    th, tw, tc = dims

    full = (out.h, out.w, out.c) if not isinstance(layer, (GlobalAvgPool, Dense)) else (1, 1, out.c)
    bpe = cfg.bytes_per_element
    cycles_per_byte = cfg.clock_hz / cfg.dram_bw
    tiles = []
    for h0 in range(0, full[0], th):
        ah = min(th, full[0] - h0)
        for w0 in range(0, full[1], tw):
            aw = min(tw, full[1] - w0)
            for c0 in range(0, full[2], tc):
                ac = min(tc, full[2] - c0)
                i, o, wgt = _tile_stats(layer, in_shape, cfg, ah, aw, ac)
                dma = ceil((i + o + wgt) * bpe * cycles_per_byte)
                comp = _tile_compute_cycles(layer, in_shape, cfg, ah, aw, ac)
                tiles.append(Tile(compute_cycles=comp, dma_cycles=dma))
    return TileSchedule(tile_h=th, tile_w=tw, tile_c=tc, tiles=tuple(tiles))


def _run_tile(compute_cycles: int, dma_cycles: int) -> int:
    # Discrete-clock co-simulation: both engines tick together; the tile is
    # done when both have drained. This is where the simulator spends its
    # time, by design: it steps every cycle instead of evaluating a formula.
    c = compute_cycles
    d = dma_cycles
    t = 0
    while c > 0 or d > 0:
        if c > 0:
            c -= 1
        if d > 0:
            d -= 1
        t += 1
    return t


def _simulate_primitive(layer: LayerSpec, in_shape: TensorShape,
                        cfg: AcceleratorConfig) -> tuple[int, int, int]:
    schedule = plan_tiles(layer, in_shape, cfg)
    fill = cfg.array_rows + cfg.array_cols - 2
    cycles = fill
    comp_total = 0
    dma_total = 0
    for tile in schedule.tiles:
        cycles += _run_tile(tile.compute_cycles, tile.dma_cycles)
        comp_total += tile.compute_cycles
        dma_total += tile.dma_cycles
    return cycles, comp_total, dma_total


def simulate_layer(layer: LayerSpec, in_shape: TensorShape, cfg: AcceleratorConfig) -> int:
    """Simulated cycles for one layer, pipeline fill included.

    Blocks run their sub-layers as separate array passes, each paying its
    own fill.
    """
    return _simulate_layer_detail(layer, in_shape, cfg).cycles


def _simulate_layer_detail(layer: LayerSpec, in_shape: TensorShape,
                           cfg: AcceleratorConfig) -> LayerSim:
    cycles = 0
    comp = 0
    dma = 0
    for sub, s in sublayers(layer, in_shape):
        c, cc, dc = _simulate_primitive(sub, s, cfg)
        cycles += c
        comp += cc
        dma += dc
    return LayerSim(cycles=cycles, compute_cycles=comp, dma_cycles=dma)


def simulate_model(graph: ModelGraph, cfg: AcceleratorConfig) -> SimReport:
    violations, shapes = validate_with_shapes(graph)
    if violations:
        raise ModelValidationError(violations)
    per_layer = tuple(
        _simulate_layer_detail(layer, s_in, cfg)
        for layer, (s_in, _) in zip(graph.layers, shapes)
    )
    total = sum(ls.cycles for ls in per_layer)
    macs = sum(count_macs(layer, s_in) for layer, (s_in, _) in zip(graph.layers, shapes))
    params = sum(count_params(layer, s_in) for layer, (s_in, _) in zip(graph.layers, shapes))
    return SimReport(
        per_layer=per_layer,
        total_cycles=total,
        total_us=total / cfg.clock_hz * 1e6,
        macs=macs,
        params=params,
    )
