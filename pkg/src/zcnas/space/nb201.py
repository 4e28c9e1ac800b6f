"""NAS-Bench-201 cell space: 5 ops on 6 edges of a 4-node DAG, 15625 cells."""

from __future__ import annotations

from dataclasses import dataclass
import itertools

from ..errors import ArgumentError, ConfigError
from ..nn import (AvgPool, BatchNorm, Conv2d, GlobalAvgPool, GraphBuilder, Identity, Linear,
                  ReLU, Zeroize)
from .genotype import EDGES, OPS, CellGenotype

SPACE_SIZE = len(OPS) ** len(EDGES)


@dataclass(frozen=True)
class Nb201Space:
    """Macro skeleton: stem, three stages of N cells with residual downsampling, head."""

    stem_width: int = 16
    cells_per_stage: int = 5
    resolution: int = 32
    classes: int = 10
    flops_budget: int | None = None
    kind = "nb201-cell"

    def __post_init__(self):
        if self.stem_width < 1 or self.cells_per_stage < 1 or self.classes < 1:
            raise ConfigError("nb201 widths, cell counts and classes must be positive")
        if self.resolution < 4 or self.resolution % 4:
            raise ConfigError(f"nb201 resolution must be a positive multiple of 4, got {self.resolution}")
        if self.flops_budget is not None and self.flops_budget <= 0:
            raise ConfigError("flops_budget must be positive")

    @property
    def stage_plan(self):
        """(channels, resolution) of the three cell stages."""
        c, r = self.stem_width, self.resolution
        return [(c, r), (2 * c, r // 2), (4 * c, r // 4)]


def _edge_layers(op, c):
    name = OPS[op]
    if name == "none":
        return [Zeroize()]
    if name == "skip_connect":
        return [Identity()]
    if name == "nor_conv_1x1":
        return [ReLU(), Conv2d(c, c, 1, 1, 0), BatchNorm(c)]
    if name == "nor_conv_3x3":
        return [ReLU(), Conv2d(c, c, 3, 1, 1), BatchNorm(c)]
    return [AvgPool(3, 1, 1)]


def add_cell(builder, src, genotype, c, name):
    nodes = [src]
    k = 0
    for dst in (1, 2, 3):
        outs = []
        for s in range(dst):
            assert EDGES[k] == (s, dst)
            op = genotype.edge_ops[k]
            key = f"{name}/edge{k}/{OPS[op]}"
            outs.append(builder.chain(nodes[s], *_edge_layers(op, c), key=key))
            k += 1
        nodes.append(builder.add(Identity(), *outs))
    return nodes[3]


def add_resblock(builder, src, cin, cout, name):
    a = builder.chain(src, ReLU(), Conv2d(cin, cout, 3, 2, 1), BatchNorm(cout), key=f"{name}/a")
    b = builder.chain(a, ReLU(), Conv2d(cout, cout, 3, 1, 1), BatchNorm(cout), key=f"{name}/b")
    sc = builder.chain(src, AvgPool(2, 2, 0), Conv2d(cin, cout, 1, 1, 0), key=f"{name}/shortcut")
    return builder.add(Identity(), b, sc)


def instantiate(genotype, space):
    if not isinstance(genotype, CellGenotype):
        raise ArgumentError("nb201 space needs a CellGenotype")
    c0 = space.stem_width
    builder = GraphBuilder((3, space.resolution, space.resolution))
    x = builder.chain(0, Conv2d(3, c0, 3, 1, 1), BatchNorm(c0), key="stem")
    plan = space.stage_plan
    for stage, (c, _) in enumerate(plan):
        if stage:
            x = add_resblock(builder, x, plan[stage - 1][0], c, f"stage{stage}/reduce")
        for cell in range(space.cells_per_stage):
            builder.begin_block(x)
            x = add_cell(builder, x, genotype, c, f"stage{stage}/cell{cell}")
            builder.end_block(x)
    c_last = plan[-1][0]
    builder.chain(x, BatchNorm(c_last), ReLU(), GlobalAvgPool(), Linear(c_last, space.classes),
                  key="head")
    return builder.build(meta={"space": space.kind, "genotype": str(genotype)})


_EDGE_MACS_PER_C2R2 = {"nor_conv_1x1": 1, "nor_conv_3x3": 9}


def count_flops(genotype, space):
    """Closed-form MAC count of the instantiated network (per sample)."""
    c0, r0 = space.stem_width, space.resolution
    total = 9 * 3 * c0 * r0 * r0
    cell_factor = sum(_EDGE_MACS_PER_C2R2.get(OPS[o], 0) for o in genotype.edge_ops)
    plan = space.stage_plan
    for stage, (c, r) in enumerate(plan):
        if stage:
            cin = plan[stage - 1][0]
            total += 9 * cin * c * r * r + 9 * c * c * r * r + cin * c * r * r
        total += space.cells_per_stage * cell_factor * c * c * r * r
    total += plan[-1][0] * space.classes
    return int(total)


def mutate(genotype, rng):
    ops = list(genotype.edge_ops)
    e = int(rng.integers(len(ops)))
    new = int(rng.integers(len(OPS) - 1))
    ops[e] = new if new < ops[e] else new + 1
    return CellGenotype(tuple(ops))


def random_genotype(rng):
    return CellGenotype(tuple(int(v) for v in rng.integers(0, len(OPS), size=len(EDGES))))


def enumerate_space():
    for ops in itertools.product(range(len(OPS)), repeat=len(EDGES)):
        yield CellGenotype(ops)
