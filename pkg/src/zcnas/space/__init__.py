"""Search spaces: genotypes, instantiation, MAC accounting, mutation and sampling."""

from __future__ import annotations

from ..errors import ArgumentError, ConfigError, UnsupportedOperation
from . import macro, nb201
from .genotype import (EDGES, OPS, CellGenotype, MacroGenotype, MacroStage, format_genotype,
                       parse_genotype)
from .macro import MacroSpace
from .nb201 import SPACE_SIZE, Nb201Space

SpaceSpec = Nb201Space | MacroSpace

__all__ = [
    "EDGES", "OPS", "SPACE_SIZE", "CellGenotype", "MacroGenotype", "MacroSpace", "MacroStage",
    "Nb201Space", "SpaceSpec", "count_flops", "enumerate_space", "format_genotype", "instantiate",
    "is_feasible", "mutate", "parse_genotype", "random_genotype", "space_from_dict",
    "space_to_dict", "validate",
]


def validate(genotype, space):
    if isinstance(space, Nb201Space):
        if not isinstance(genotype, CellGenotype):
            raise ArgumentError(f"{type(genotype).__name__} does not belong to the nb201 cell space")
    elif isinstance(space, MacroSpace):
        macro.validate(genotype, space)
    else:
        raise ConfigError(f"unknown space {space!r}")


def instantiate(genotype, space, init=None):
    """Build the network for ``genotype``; initialize weights when ``init`` is given."""
    from ..nn import init_weights

    validate(genotype, space)
    if isinstance(space, Nb201Space):
        graph = nb201.instantiate(genotype, space)
    else:
        graph = macro.instantiate(genotype, space)
    if init is not None:
        init_weights(graph, init)
    return graph


def count_flops(genotype, space):
    """Multiply-accumulate count (per sample) from the genotype alone."""
    validate(genotype, space)
    if isinstance(space, Nb201Space):
        return nb201.count_flops(genotype, space)
    return macro.count_flops(genotype, space)


def is_feasible(genotype, space):
    return space.flops_budget is None or count_flops(genotype, space) <= space.flops_budget


def mutate(genotype, space, rng):
    validate(genotype, space)
    if isinstance(space, Nb201Space):
        return nb201.mutate(genotype, rng)
    return macro.mutate(genotype, space, rng)


def random_genotype(space, rng):
    if isinstance(space, Nb201Space):
        return nb201.random_genotype(rng)
    if isinstance(space, MacroSpace):
        return macro.random_genotype(space, rng)
    raise ConfigError(f"unknown space {space!r}")


def enumerate_space(space):
    """All 15625 cells in lexicographic order of their op ids."""
    if not isinstance(space, Nb201Space):
        raise UnsupportedOperation("enumeration is only defined for the nb201 cell space")
    return nb201.enumerate_space()


_NB201_KEYS = {"kind", "stem_width", "cells_per_stage", "resolution", "classes", "flops_budget"}
_MACRO_KEYS = {"kind", "resolution", "classes", "stem", "stage_strides", "width_ranges",
               "depth_range", "expansions", "kernels", "width_step", "flops_budget"}


def space_from_dict(doc):
    doc = dict(doc)
    kind = doc.get("kind", "nb201-cell")
    if kind == "nb201-cell":
        allowed, cls = _NB201_KEYS, Nb201Space
    elif kind == "mobile-macro":
        allowed, cls = _MACRO_KEYS, MacroSpace
    else:
        raise ConfigError(f"unknown space kind {kind!r}")
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown space keys: {sorted(unknown)}")
    doc.pop("kind", None)
    return cls(**doc)


def space_to_dict(space):
    keys = _NB201_KEYS if isinstance(space, Nb201Space) else _MACRO_KEYS
    out = {"kind": space.kind}
    for k in sorted(keys - {"kind"}):
        v = getattr(space, k)
        out[k] = [list(x) if isinstance(x, tuple) else x for x in v] if isinstance(v, tuple) else v
    return out
