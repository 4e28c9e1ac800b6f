"""Genotype encodings and their text forms.

Cell genotypes use the NAS-Bench-201 string grammar::

    |op~0|+|op~0|op~1|+|op~0|op~1|op~2|

Macro genotypes serialize as a compact JSON object with ``stages``, ``stem``
and ``classes``.
"""

from __future__ import annotations

from dataclasses import dataclass
import json

from ..errors import GenotypeParseError

OPS = ("none", "skip_connect", "nor_conv_1x1", "nor_conv_3x3", "avg_pool_3x3")
OP_INDEX = {name: i for i, name in enumerate(OPS)}

# (src, dst) per edge, in grammar order
EDGES = ((0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3))


@dataclass(frozen=True, order=True)
class CellGenotype:
    edge_ops: tuple

    def __post_init__(self):
        ops = tuple(int(o) for o in self.edge_ops)
        if len(ops) != len(EDGES):
            raise ValueError(f"a cell has {len(EDGES)} edges, got {len(ops)}")
        if any(not 0 <= o < len(OPS) for o in ops):
            raise ValueError(f"op ids must lie in [0, {len(OPS)}), got {ops}")
        object.__setattr__(self, "edge_ops", ops)

    @classmethod
    def from_names(cls, names):
        return cls(tuple(OP_INDEX[n] for n in names))

    @property
    def op_names(self):
        return tuple(OPS[o] for o in self.edge_ops)

    def __str__(self):
        return format_genotype(self)


@dataclass(frozen=True)
class MacroStage:
    depth: int
    width: int
    expansion: int
    kernel: int
    stride: int


@dataclass(frozen=True)
class MacroGenotype:
    stages: tuple
    stem: int = 32
    classes: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(
            s if isinstance(s, MacroStage) else MacroStage(**s) for s in self.stages))

    def __str__(self):
        return format_genotype(self)


def format_genotype(genotype):
    if isinstance(genotype, CellGenotype):
        names = genotype.op_names
        parts, k = [], 0
        for dst in (1, 2, 3):
            row = []
            for src in range(dst):
                row.append(f"{names[k]}~{src}")
                k += 1
            parts.append("|" + "|".join(row) + "|")
        return "+".join(parts)
    if isinstance(genotype, MacroGenotype):
        doc = {
            "stages": [
                {"depth": s.depth, "width": s.width, "expansion": s.expansion,
                 "kernel": s.kernel, "stride": s.stride}
                for s in genotype.stages
            ],
            "stem": genotype.stem,
            "classes": genotype.classes,
        }
        return json.dumps(doc, separators=(",", ":"))
    raise TypeError(f"not a genotype: {genotype!r}")


def _offset(text, i):
    return len(text[:i].encode("utf-8"))


def _parse_cell(text):
    i, n = 0, len(text)
    names = []

    def fail(msg, at):
        raise GenotypeParseError(msg, _offset(text, at))

    def expect(ch, at):
        if at >= n or text[at] != ch:
            got = repr(text[at]) if at < n else "end of input"
            fail(f"expected {ch!r}, got {got}", at)
        return at + 1

    for dst in (1, 2, 3):
        if dst > 1:
            i = expect("+", i)
        i = expect("|", i)
        for src in range(dst):
            end = i
            while end < n and text[end] not in "~|+":
                end += 1
            name = text[i:end]
            if not name:
                fail(f"missing edge {src}->{dst}: expected an op name", i)
            if name not in OP_INDEX:
                fail(f"unknown op name {name!r}", i)
            i = expect("~", end)
            end = i
            while end < n and text[end].isdigit():
                end += 1
            if end == i:
                fail("expected a source node index", i)
            if int(text[i:end]) != src:
                fail(f"edge into node {dst} must read node {src}, got {text[i:end]}", i)
            names.append(name)
            i = expect("|", end)
    if i != n:
        fail("trailing characters after the third node (wrong edge count?)", i)
    return CellGenotype.from_names(names)


def _parse_macro(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GenotypeParseError(f"invalid macro JSON: {exc.msg}", _offset(text, exc.pos)) from None
    if not isinstance(doc, dict) or set(doc) != {"stages", "stem", "classes"}:
        raise GenotypeParseError("macro genotype needs exactly the keys stages, stem, classes", 0)
    try:
        stages = tuple(MacroStage(**{k: int(v) for k, v in st.items()}) for st in doc["stages"])
        return MacroGenotype(stages=stages, stem=int(doc["stem"]), classes=int(doc["classes"]))
    except (TypeError, AttributeError, ValueError) as exc:
        raise GenotypeParseError(f"malformed macro stage: {exc}", 0) from None


def parse_genotype(text):
    """Parse a cell string or a macro JSON object."""
    if not isinstance(text, str):
        raise TypeError("genotype text must be a str")
    if text.lstrip().startswith("{"):
        return _parse_macro(text)
    return _parse_cell(text)
