"""Inverted-residual macro space (MobileNetV2-like).

Each stage is ``(depth, width, expansion, kernel, stride)``.  The default
ranges below are a non-canonical stand-in: the published search space does
not document its mutation table.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from ..errors import ArgumentError, ConfigError, UnsupportedOperation
from ..nn import BatchNorm, Conv2d, GlobalAvgPool, GraphBuilder, Identity, Linear, ReLU
from .genotype import MacroGenotype, MacroStage

_MBV2_WIDTHS = (16, 24, 32, 64, 96, 160, 320)
_MBV2_STRIDES = (1, 2, 2, 2, 1, 2, 1)


def round8(v):
    return max(8, int(round(v / 8.0)) * 8)


@dataclass(frozen=True)
class MacroSpace:
    resolution: int = 224
    classes: int = 1000
    stem: int = 32
    stage_strides: tuple = _MBV2_STRIDES
    width_ranges: tuple = tuple((round8(w / 2), round8(w * 2)) for w in _MBV2_WIDTHS)
    depth_range: tuple = (1, 4)
    expansions: tuple = (1, 2, 3, 4, 6)
    kernels: tuple = (3, 5, 7)
    width_step: int = 8
    flops_budget: int | None = None
    kind = "mobile-macro"

    def __post_init__(self):
        for name in ("stage_strides", "width_ranges", "depth_range", "expansions", "kernels"):
            val = getattr(self, name)
            if name == "width_ranges":
                val = tuple(tuple(int(x) for x in r) for r in val)
            else:
                val = tuple(int(x) for x in val)
            object.__setattr__(self, name, val)
        if len(self.stage_strides) != len(self.width_ranges) or not self.stage_strides:
            raise ConfigError("stage_strides and width_ranges must be non-empty and equally long")
        if any(s not in (1, 2) for s in self.stage_strides):
            raise ConfigError("strides must be 1 or 2")
        if any(k not in (3, 5, 7) for k in self.kernels) or not self.kernels:
            raise ConfigError("kernels must be drawn from {3, 5, 7}")
        if self.width_step % 8:
            raise ConfigError("width_step must be a multiple of 8")
        for lo, hi in self.width_ranges:
            if lo % 8 or hi % 8 or lo < 8 or hi < lo:
                raise ConfigError(f"bad width range {(lo, hi)}")
        if self.stem % 8 or self.stem < 8:
            raise ConfigError("stem channels must be a positive multiple of 8")
        lo, hi = self.depth_range
        if lo < 1 or hi < lo:
            raise ConfigError(f"bad depth range {self.depth_range}")
        if self.flops_budget is not None and self.flops_budget <= 0:
            raise ConfigError("flops_budget must be positive")
        total = 2
        for s in self.stage_strides:
            total *= s
        if self.resolution % total:
            raise ConfigError(f"resolution {self.resolution} not divisible by total stride {total}")


def _out(n, k, s):
    p = k // 2
    return (n + 2 * p - k) // s + 1


def validate(genotype, space):
    if not isinstance(genotype, MacroGenotype):
        raise ArgumentError("macro space needs a MacroGenotype")
    if len(genotype.stages) != len(space.stage_strides):
        raise ArgumentError(f"expected {len(space.stage_strides)} stages, got {len(genotype.stages)}")
    if genotype.stem % 8 or genotype.stem < 8:
        raise ArgumentError("stem channels must be a positive multiple of 8")
    for st, stride, (wlo, whi) in zip(genotype.stages, space.stage_strides, space.width_ranges):
        if st.depth < 1 or st.width < 8 or st.width % 8:
            raise ArgumentError(f"invalid stage {st}")
        if st.stride != stride or st.kernel not in (3, 5, 7) or st.expansion < 1:
            raise ArgumentError(f"invalid stage {st}")


def _hidden(cin, e):
    return round8(cin * e)


def _blocks(genotype, named=False):
    cin = genotype.stem
    for s, st in enumerate(genotype.stages):
        for d in range(st.depth):
            item = (cin, st, (st.stride if d == 0 else 1))
            yield item + (f"stage{s}/block{d}",) if named else item
            cin = st.width


def instantiate(genotype, space):
    validate(genotype, space)
    r = space.resolution
    builder = GraphBuilder((3, r, r))
    x = builder.chain(0, Conv2d(3, genotype.stem, 3, 2, 1), BatchNorm(genotype.stem), ReLU(),
                      key="stem")
    for cin, st, stride, name in _blocks(genotype, named=True):
        hid = _hidden(cin, st.expansion)
        builder.begin_block(x)
        h = builder.chain(
            x,
            Conv2d(cin, hid, 1, 1, 0), BatchNorm(hid), ReLU(),
            Conv2d(hid, hid, st.kernel, stride, st.kernel // 2, groups=hid), BatchNorm(hid), ReLU(),
            Conv2d(hid, st.width, 1, 1, 0), BatchNorm(st.width),
            key=name,
        )
        if stride == 1 and cin == st.width:
            h = builder.add(Identity(), h, x)
        builder.end_block(h)
        x = h
    w_last = genotype.stages[-1].width
    builder.chain(x, GlobalAvgPool(), Linear(w_last, genotype.classes), key="head")
    return builder.build(meta={"space": space.kind, "genotype": str(genotype)})


def count_flops(genotype, space):
    r = _out(space.resolution, 3, 2)
    total = 9 * 3 * genotype.stem * r * r
    for cin, st, stride in _blocks(genotype):
        hid = _hidden(cin, st.expansion)
        ro = _out(r, st.kernel, stride)
        total += cin * hid * r * r
        total += st.kernel * st.kernel * hid * ro * ro
        total += hid * st.width * ro * ro
        r = ro
    total += genotype.stages[-1].width * genotype.classes
    return int(total)


def _step(values, current, direction):
    values = sorted(values)
    if current in values:
        i = values.index(current) + direction
    else:
        i = sum(v < current for v in values) - (direction < 0)
    return values[min(max(i, 0), len(values) - 1)]


def _clip(v, lo, hi):
    return min(max(v, lo), hi)


def mutate(genotype, space, rng):
    """Apply one random action; re-draw until the result differs from the parent."""
    stages = list(genotype.stages)
    for _ in range(1000):
        i = int(rng.integers(len(stages)))
        st = stages[i]
        action = int(rng.integers(4))
        sign = 1 if rng.integers(2) else -1
        if action == 0:
            new = replace(st, depth=_clip(st.depth + sign, *space.depth_range))
        elif action == 1:
            lo, hi = space.width_ranges[i]
            new = replace(st, width=_clip(st.width + sign * space.width_step, lo, hi))
        elif action == 2:
            new = replace(st, expansion=_step(space.expansions, st.expansion, sign))
        else:
            choices = [k for k in space.kernels if k != st.kernel]
            if not choices:
                continue
            new = replace(st, kernel=choices[int(rng.integers(len(choices)))])
        if new != st:
            stages[i] = new
            return MacroGenotype(tuple(stages), genotype.stem, genotype.classes)
    raise UnsupportedOperation("macro space admits no mutation (all ranges are singletons)")


def random_genotype(space, rng):
    stages = []
    for stride, (lo, hi) in zip(space.stage_strides, space.width_ranges):
        steps = (hi - lo) // space.width_step
        stages.append(MacroStage(
            depth=int(rng.integers(space.depth_range[0], space.depth_range[1] + 1)),
            width=lo + space.width_step * int(rng.integers(steps + 1)),
            expansion=int(space.expansions[int(rng.integers(len(space.expansions)))]),
            kernel=int(space.kernels[int(rng.integers(len(space.kernels)))]),
            stride=stride,
        ))
    return MacroGenotype(tuple(stages), space.stem, space.classes)
