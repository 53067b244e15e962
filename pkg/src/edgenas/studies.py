"""Reproducible studies: APM-vs-simulator agreement and block crossover sweeps."""

from __future__ import annotations

import csv
import random
import time
from dataclasses import dataclass

import numpy as np

from .accel import AcceleratorConfig, estimate_layer, estimate_model
from .ir import Conv2D, FusedIBNBlock, IBNBlock, LayerSpec, TensorShape
from .simulator import simulate_layer, simulate_model
from .space import DEFAULT_SKELETON, StageSkeleton, decode, sample_with_rng


@dataclass(frozen=True)
class StudyReport:
    pairs: tuple[tuple[float, float], ...]  # (apm_us, sim_us) per model
    rmse: float
    spearman: float | None  # None when rank correlation is undefined
    speedup: float  # sim wall time / apm wall time


def _average_ranks(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="mergesort")
    ranks = np.empty(len(v), dtype=float)
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys) -> float | None:
    """Spearman rank correlation; None when either side is constant."""
    if len(xs) < 2 or len(set(xs)) < 2 or len(set(ys)) < 2:
        return None
    rx = _average_ranks(xs)
    ry = _average_ranks(ys)
    return float(np.corrcoef(rx, ry)[0, 1])


def rmse_study(n: int, seed: int, cfg: AcceleratorConfig,
               skeleton: StageSkeleton = DEFAULT_SKELETON) -> StudyReport:
    """Estimate n random models with both estimators and compare.

    Wall times cover estimation only (decode is shared), so the speedup is
    the estimator speed ratio the fast path buys.
    """
    if n < 2:
        raise ValueError("need n >= 2 models")
    rng = random.Random(seed)
    graphs = [decode(sample_with_rng(rng, skeleton), skeleton) for _ in range(n)]
    t0 = time.perf_counter()
    apm = [estimate_model(g, cfg).total_us for g in graphs]
    apm_wall = time.perf_counter() - t0
    t0 = time.perf_counter()
    sim = [simulate_model(g, cfg).total_us for g in graphs]
    sim_wall = time.perf_counter() - t0
    err = np.asarray(apm) - np.asarray(sim)
    return StudyReport(
        pairs=tuple(zip(apm, sim)),
        rmse=float(np.sqrt(np.mean(err**2))),
        spearman=spearman(apm, sim),
        speedup=sim_wall / apm_wall,
    )


def write_study_csv(report: StudyReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["apm_us", "sim_us"])
        for a, s in report.pairs:
            writer.writerow([repr(a), repr(s)])


# --- crossover sweeps ----------------------------------------------------

BLOCK_KINDS = ("conv2d", "ibn", "fused_ibn")


def parse_block_token(token: str) -> tuple[str, int, int | None]:
    """Parse "kind:k3" / "ibn:k5:e6" into (kind, kernel, expansion | None).

    Without an explicit :e part, bottleneck blocks sweep over the expansion
    axis of the grid; plain convs ignore it.
    """
    parts = token.split(":")
    kind = parts[0]
    if kind not in BLOCK_KINDS:
        raise ValueError(f"block kind must be one of {BLOCK_KINDS}, got {kind!r}")
    kernel = 3
    expansion = None
    for part in parts[1:]:
        if part.startswith("k"):
            kernel = int(part[1:])
        elif part.startswith("e"):
            expansion = int(part[1:])
        else:
            raise ValueError(f"bad block token part {part!r} (want k<n> or e<n>)")
    return kind, kernel, expansion


def _build_block(kind: str, kernel: int, expansion: int, cout: int) -> LayerSpec:
    if kind == "conv2d":
        return Conv2D(kernel=kernel, stride=1, out_channels=cout)
    if kind == "ibn":
        return IBNBlock(kernel=kernel, stride=1, expansion=expansion, out_channels=cout)
    return FusedIBNBlock(kernel=kernel, stride=1, expansion=expansion, out_channels=cout)


def _block_latency_us(layer: LayerSpec, shape: TensorShape, cfg: AcceleratorConfig,
                      estimator: str) -> float:
    if estimator == "apm":
        return estimate_layer(layer, shape, cfg).latency_us
    return simulate_layer(layer, shape, cfg) / cfg.clock_hz * 1e6


def crossover_sweep(block_a: str, block_b: str, sizes, cins, couts, expansions,
                    cfg: AcceleratorConfig, estimator: str = "apm") -> list[dict]:
    """Latency ratio block_a / block_b on a (size, cin, cout, expansion) grid."""
    kind_a, k_a, e_a = parse_block_token(block_a)
    kind_b, k_b, e_b = parse_block_token(block_b)
    rows = []
    for size in sizes:
        for cin in cins:
            shape = TensorShape(size, size, cin)
            for cout in couts:
                for expansion in expansions:
                    la = _block_latency_us(
                        _build_block(kind_a, k_a, e_a or expansion, cout), shape, cfg, estimator
                    )
                    lb = _block_latency_us(
                        _build_block(kind_b, k_b, e_b or expansion, cout), shape, cfg, estimator
                    )
                    rows.append(
                        {
                            "h": size,
                            "w": size,
                            "cin": cin,
                            "cout": cout,
                            "expansion": expansion,
                            "a_us": la,
                            "b_us": lb,
                            "ratio": la / lb,
                        }
                    )
    return rows


def write_sweep_csv(rows: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["h", "w", "cin", "cout", "expansion", "a_us", "b_us", "ratio"])
        for r in rows:
            writer.writerow(
                [r["h"], r["w"], r["cin"], r["cout"], r["expansion"],
                 repr(r["a_us"]), repr(r["b_us"]), repr(r["ratio"])]
            )
