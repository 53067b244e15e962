"""MnasNet-style factorized search space over a fixed stage skeleton.

The skeleton fixes the stem (3x3 stride-2 conv), the per-stage strides and
base channel counts, and the head (global pool + dense classifier). A genome
picks one block configuration per stage; repeats within a stage share the
choice, with the stage stride on the first repeat only.
"""

from __future__ import annotations

import hashlib
import json
import random
import sys
from dataclasses import dataclass

from .ir import (
    Conv2D,
    Dense,
    FusedIBNBlock,
    GlobalAvgPool,
    IBNBlock,
    LayerSpec,
    ModelGraph,
    TensorShape,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

BLOCK_TYPES = ("ibn", "fused_ibn", "plain_conv")
KERNELS = (3, 5)
EXPANSIONS = (1, 3, 6)
FILTER_MULTS = (0.75, 1.0, 1.25)
NUM_LAYERS = (1, 2, 3, 4)
SKIP = (False, True)

# mutation picks uniformly over (stage, field); order fixed for determinism
GENE_DOMAINS: dict[str, tuple] = {
    "block_type": BLOCK_TYPES,
    "kernel": KERNELS,
    "expansion": EXPANSIONS,
    "filter_mult": FILTER_MULTS,
    "num_layers": NUM_LAYERS,
    "skip": SKIP,
}


@dataclass(frozen=True)
class BlockChoice:
    block_type: str
    kernel: int
    expansion: int  # inert for plain_conv
    filter_mult: float
    num_layers: int
    skip: bool

    def __post_init__(self):
        for name, domain in GENE_DOMAINS.items():
            if getattr(self, name) not in domain:
                raise ValueError(f"BlockChoice.{name} must be one of {domain}, got {getattr(self, name)!r}")


Genome = tuple[BlockChoice, ...]


@dataclass(frozen=True)
class StageSkeleton:
    input: TensorShape = TensorShape(224, 224, 3)
    stem_filters: int = 32
    base_filters: tuple[int, ...] = (16, 24, 40, 80, 112, 192, 320)
    strides: tuple[int, ...] = (1, 2, 2, 2, 1, 2, 1)
    base_layers: tuple[int, ...] = (1, 2, 2, 3, 3, 4, 1)  # reference repeats, informational
    head_units: int = 1000

    def __post_init__(self):
        if not (len(self.base_filters) == len(self.strides) == len(self.base_layers)):
            raise ValueError("skeleton stage lists must have equal length")
        if any(s not in (1, 2) for s in self.strides):
            raise ValueError("skeleton strides must be in {1, 2}")

    @property
    def num_stages(self) -> int:
        return len(self.base_filters)


DEFAULT_SKELETON = StageSkeleton()


def load_skeleton(path) -> StageSkeleton:
    with open(path, "rb") as f:
        obj = tomllib.load(f)
    inp = obj.pop("input", {"h": 224, "w": 224, "c": 3})
    return StageSkeleton(
        input=TensorShape(inp["h"], inp["w"], inp["c"]),
        stem_filters=obj.get("stem_filters", 32),
        base_filters=tuple(obj["base_filters"]),
        strides=tuple(obj["strides"]),
        base_layers=tuple(obj.get("base_layers", [1] * len(obj["base_filters"]))),
        head_units=obj.get("head_units", 1000),
    )


def check_genome(genome: Genome, skeleton: StageSkeleton) -> None:
    if len(genome) != skeleton.num_stages:
        raise ValueError(f"genome has {len(genome)} genes, skeleton has {skeleton.num_stages} stages")


def decode(genome: Genome, skeleton: StageSkeleton = DEFAULT_SKELETON) -> ModelGraph:
    """Expand a genome into a validated model graph.

    The skip flag turns on the residual connection for every eligible repeat
    (stride 1 and unchanged channel count); it is inert where no repeat
    qualifies, as is the expansion field for plain_conv stages.
    """
    check_genome(genome, skeleton)
    layers: list[LayerSpec] = [Conv2D(kernel=3, stride=2, out_channels=skeleton.stem_filters)]
    channels = skeleton.stem_filters
    for gene, base, stage_stride in zip(genome, skeleton.base_filters, skeleton.strides):
        cout = max(1, round(base * gene.filter_mult))
        for repeat in range(gene.num_layers):
            stride = stage_stride if repeat == 0 else 1
            residual = gene.skip and stride == 1 and channels == cout
            if gene.block_type == "ibn":
                layers.append(IBNBlock(gene.kernel, stride, gene.expansion, cout, residual))
            elif gene.block_type == "fused_ibn":
                layers.append(FusedIBNBlock(gene.kernel, stride, gene.expansion, cout, residual))
            else:
                layers.append(Conv2D(gene.kernel, stride, cout))
            channels = cout
    layers.append(GlobalAvgPool())
    layers.append(Dense(units=skeleton.head_units))
    return ModelGraph(name=f"g{genome_hash(genome)[:12]}", input=skeleton.input, layers=tuple(layers))


def sample_with_rng(rng: random.Random, skeleton: StageSkeleton = DEFAULT_SKELETON) -> Genome:
    genes = []
    for _ in range(skeleton.num_stages):
        genes.append(
            BlockChoice(
                block_type=rng.choice(BLOCK_TYPES),
                kernel=rng.choice(KERNELS),
                expansion=rng.choice(EXPANSIONS),
                filter_mult=rng.choice(FILTER_MULTS),
                num_layers=rng.choice(NUM_LAYERS),
                skip=rng.choice(SKIP),
            )
        )
    return tuple(genes)


def sample(seed: int, skeleton: StageSkeleton = DEFAULT_SKELETON) -> Genome:
    return sample_with_rng(random.Random(seed), skeleton)


def mutate_with_rng(genome: Genome, rng: random.Random) -> Genome:
    """Resample exactly one (stage, field) position to a different value."""
    stage = rng.randrange(len(genome))
    field = rng.choice(list(GENE_DOMAINS))
    current = getattr(genome[stage], field)
    alternatives = [v for v in GENE_DOMAINS[field] if v != current]
    new_value = rng.choice(alternatives)
    mutated = list(genome)
    values = {f: getattr(genome[stage], f) for f in GENE_DOMAINS}
    values[field] = new_value
    mutated[stage] = BlockChoice(**values)
    return tuple(mutated)


def mutate(genome: Genome, seed: int) -> Genome:
    return mutate_with_rng(genome, random.Random(seed))


def space_size(skeleton: StageSkeleton = DEFAULT_SKELETON, domains=GENE_DOMAINS) -> int:
    per_stage = 1
    for domain in domains.values():
        per_stage *= len(domain)
    return per_stage**skeleton.num_stages


def genome_to_obj(genome: Genome) -> list[dict]:
    return [
        {
            "block": g.block_type,
            "kernel": g.kernel,
            "expansion": g.expansion,
            "filter_mult": g.filter_mult,
            "num_layers": g.num_layers,
            "skip": g.skip,
        }
        for g in genome
    ]


def genome_to_json(genome: Genome) -> str:
    return json.dumps(genome_to_obj(genome), separators=(",", ":"))


def genome_from_obj(obj) -> Genome:
    return tuple(
        BlockChoice(
            block_type=g["block"],
            kernel=g["kernel"],
            expansion=g["expansion"],
            filter_mult=g["filter_mult"],
            num_layers=g["num_layers"],
            skip=g["skip"],
        )
        for g in obj
    )


def genome_from_json(text: str) -> Genome:
    return genome_from_obj(json.loads(text))


def genome_hash(genome: Genome) -> str:
    return hashlib.sha256(genome_to_json(genome).encode("utf-8")).hexdigest()
