"""Synthetic accuracy oracle standing in for a trainer.

Accuracy is a saturating function of the parameter count plus optional
deterministic per-graph noise, so that bigger models are better but with
diminishing returns: the tension the latency term of the search reward
pushes against. Values are synthetic by construction and never claim to
predict real trained accuracy. A CSV-backed lookup table is available for
plugging in externally measured numbers.
"""

from __future__ import annotations

import csv
import hashlib
import random
from dataclasses import dataclass

from .ir import ModelGraph, count_params, graph_hash, infer_shapes


class MissEntry(LookupError):
    """Requested graph has no entry in the accuracy table."""


@dataclass(frozen=True)
class SurrogateParams:
    a_max: float = 0.82
    b: float = 0.38
    c: float = 0.6
    noise_sd: float = 0.003
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.a_max <= 1:
            raise ValueError("a_max must be in (0, 1]")
        if self.b >= self.a_max:
            raise ValueError("b must be < a_max")
        if self.c <= 0:
            raise ValueError("c must be positive")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")


def total_params(graph: ModelGraph) -> int:
    shapes = infer_shapes(graph)
    return sum(count_params(layer, s_in) for layer, (s_in, _) in zip(graph.layers, shapes))


def predict(graph: ModelGraph, params: SurrogateParams = SurrogateParams()) -> float:
    """accuracy = a_max - b * (1 + P/1e6)^(-c) + noise, clipped to [0.01, a_max].

    Noise is Gaussian with sd noise_sd, seeded from the graph's canonical
    hash and params.seed: the same graph always gets the same value, on any
    platform.
    """
    p = total_params(graph)
    acc = params.a_max - params.b * (1 + p / 1e6) ** (-params.c)
    if params.noise_sd > 0:
        key = hashlib.sha256(f"{graph_hash(graph)}:{params.seed}".encode()).digest()
        rng = random.Random(int.from_bytes(key[:8], "big"))
        acc += rng.gauss(0.0, params.noise_sd)
    return min(max(acc, 0.01), params.a_max)


@dataclass(frozen=True)
class AccuracyTable:
    entries: dict[str, float]

    def __post_init__(self):
        for key, acc in self.entries.items():
            if not 0 < acc < 1:
                raise ValueError(f"table accuracy for {key} must be in (0, 1), got {acc}")


def predict_from_table(graph: ModelGraph, table: AccuracyTable) -> float:
    key = graph_hash(graph)
    try:
        return table.entries[key]
    except KeyError:
        raise MissEntry(f"no table entry for graph hash {key}") from None


def load_table(path) -> AccuracyTable:
    entries: dict[str, float] = {}
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != ["genome_hash", "accuracy"]:
            raise ValueError(f'expected header "genome_hash,accuracy", got {reader.fieldnames}')
        for row in reader:
            entries[row["genome_hash"]] = float(row["accuracy"])
    return AccuracyTable(entries=entries)


def save_table(table: AccuracyTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["genome_hash", "accuracy"])
        for key in sorted(table.entries):
            writer.writerow([key, repr(table.entries[key])])
