"""Multi-objective architecture search over the factorized space.

Two controllers share one evaluation contract: plain random search (the
honesty baseline) and regularized aging evolution, which each cycle samples
a tournament from the population, mutates the best member, and retires the
oldest. Both are bit-deterministic for a given (seed, config, evaluator).

The scalar reward folds latency into accuracy MnasNet-style:

  soft: r = accuracy * (latency / T)^w           (w <= 0)
  hard: r = accuracy               if latency <= T
        r = accuracy * (latency / T)^w           otherwise
"""

from __future__ import annotations

import csv
import random
from collections import deque
from dataclasses import dataclass
from typing import Callable

from .space import (
    Genome,
    StageSkeleton,
    DEFAULT_SKELETON,
    genome_from_json,
    genome_to_json,
    mutate_with_rng,
    sample_with_rng,
)

ALGORITHMS = ("random", "evolution")
ESTIMATORS = ("apm", "sim", "service")


@dataclass(frozen=True)
class RewardSpec:
    target_latency_us: float
    exponent: float = -0.07
    mode: str = "soft"

    def __post_init__(self):
        if self.target_latency_us <= 0:
            raise ValueError("target_latency_us must be positive")
        if self.exponent > 0:
            raise ValueError("exponent must be <= 0")
        if self.mode not in ("soft", "hard"):
            raise ValueError("mode must be 'soft' or 'hard'")


def reward(accuracy: float, latency_us: float, spec: RewardSpec) -> float:
    if latency_us <= 0:
        raise ValueError("latency_us must be positive")
    if spec.mode == "hard" and latency_us <= spec.target_latency_us:
        return accuracy
    return accuracy * (latency_us / spec.target_latency_us) ** spec.exponent


@dataclass(frozen=True)
class Evaluation:
    accuracy: float
    latency_us: float
    macs: int
    params: int


Evaluator = Callable[[Genome], Evaluation]


class EvaluatorError(RuntimeError):
    """Evaluation failed; carries the offending genome."""

    def __init__(self, genome: Genome, cause: Exception):
        self.genome = genome
        self.cause = cause
        super().__init__(f"evaluator failed on {genome_to_json(genome)}: {cause}")


@dataclass(frozen=True)
class Candidate:
    genome: Genome
    accuracy: float
    latency_us: float
    macs: int
    params: int
    reward: float
    birth_index: int


@dataclass(frozen=True)
class SearchConfig:
    budget: int
    algorithm: str = "evolution"
    population: int = 64
    sample_size: int = 16
    seed: int = 0
    estimator: str = "apm"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        if not 1 <= self.sample_size <= self.population <= self.budget:
            raise ValueError("need 1 <= sample_size <= population <= budget")


@dataclass(frozen=True)
class ParetoPoint:
    latency_us: float
    accuracy: float
    genome: Genome


def _evaluate(genome: Genome, evaluator: Evaluator, spec: RewardSpec, birth_index: int) -> Candidate:
    try:
        ev = evaluator(genome)
    except Exception as e:  # noqa: BLE001 - attach genome, per contract
        raise EvaluatorError(genome, e) from e
    return Candidate(
        genome=genome,
        accuracy=ev.accuracy,
        latency_us=ev.latency_us,
        macs=ev.macs,
        params=ev.params,
        reward=reward(ev.accuracy, ev.latency_us, spec),
        birth_index=birth_index,
    )


def random_search(cfg: SearchConfig, reward_spec: RewardSpec, evaluator: Evaluator,
                  skeleton: StageSkeleton = DEFAULT_SKELETON) -> list[Candidate]:
    rng = random.Random(cfg.seed)
    return [
        _evaluate(sample_with_rng(rng, skeleton), evaluator, reward_spec, i)
        for i in range(cfg.budget)
    ]


def evolution_search(cfg: SearchConfig, reward_spec: RewardSpec, evaluator: Evaluator,
                     skeleton: StageSkeleton = DEFAULT_SKELETON) -> list[Candidate]:
    """Regularized (aging) evolution.

    Population starts with `population` random candidates; each cycle draws
    `sample_size` members without replacement, mutates the highest-reward one
    (ties to the oldest), evaluates the child, and removes the oldest member.
    """
    rng = random.Random(cfg.seed)
    history: list[Candidate] = []
    population: deque[Candidate] = deque()
    for i in range(cfg.population):
        cand = _evaluate(sample_with_rng(rng, skeleton), evaluator, reward_spec, i)
        history.append(cand)
        population.append(cand)
    while len(history) < cfg.budget:
        committee = rng.sample(list(population), cfg.sample_size)
        parent = max(committee, key=lambda c: (c.reward, -c.birth_index))
        child_genome = mutate_with_rng(parent.genome, rng)
        child = _evaluate(child_genome, evaluator, reward_spec, len(history))
        history.append(child)
        population.append(child)
        population.popleft()  # oldest by birth_index
    return history


def run_search(cfg: SearchConfig, reward_spec: RewardSpec, evaluator: Evaluator,
               skeleton: StageSkeleton = DEFAULT_SKELETON) -> list[Candidate]:
    if cfg.algorithm == "random":
        return random_search(cfg, reward_spec, evaluator, skeleton)
    return evolution_search(cfg, reward_spec, evaluator, skeleton)


def pareto_front(candidates: list) -> list[ParetoPoint]:
    """Non-dominated subset under (min latency, max accuracy).

    Sorted by latency ascending; exact (latency, accuracy) duplicates keep
    the first occurrence.
    """
    indexed = sorted(
        range(len(candidates)),
        key=lambda i: (candidates[i].latency_us, -candidates[i].accuracy, i),
    )
    front: list[ParetoPoint] = []
    best_accuracy = float("-inf")
    for i in indexed:
        c = candidates[i]
        if c.accuracy > best_accuracy:
            front.append(ParetoPoint(latency_us=c.latency_us, accuracy=c.accuracy, genome=c.genome))
            best_accuracy = c.accuracy
    return front


HISTORY_HEADER = ["index", "genome", "accuracy", "latency_us", "macs", "params", "reward"]
PARETO_HEADER = ["latency_us", "accuracy", "genome"]


def write_history_csv(history: list[Candidate], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(HISTORY_HEADER)
        for i, c in enumerate(history):
            writer.writerow(
                [i, genome_to_json(c.genome), repr(c.accuracy), repr(c.latency_us),
                 c.macs, c.params, repr(c.reward)]
            )


def read_history_csv(path) -> list[Candidate]:
    out: list[Candidate] = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != HISTORY_HEADER:
            raise ValueError(f"expected header {','.join(HISTORY_HEADER)}, got {reader.fieldnames}")
        for row in reader:
            out.append(
                Candidate(
                    genome=genome_from_json(row["genome"]),
                    accuracy=float(row["accuracy"]),
                    latency_us=float(row["latency_us"]),
                    macs=int(row["macs"]),
                    params=int(row["params"]),
                    reward=float(row["reward"]),
                    birth_index=int(row["index"]),
                )
            )
    return out


def write_pareto_csv(front: list[ParetoPoint], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(PARETO_HEADER)
        for p in front:
            writer.writerow([repr(p.latency_us), repr(p.accuracy), genome_to_json(p.genome)])
