"""Evaluation harness: ground-truth tables, external score columns, correlation reports.

File formats
------------
ground truth CSV   ``arch_id,genotype,<dataset>...`` (accuracies in percent)
external scores    ``arch_id,<proxy>...``
scores JSONL       one object per architecture with keys
                   ``id, genotype, sE, sP, sT, sC, flops, az``
scatter CSV        ``pred_rank,gt_rank``

Floats are written with 17 significant digits; a failed score is ``null``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
import io
from itertools import combinations
import json
import math
from pathlib import Path

import numpy as np

from .errors import (GenotypeParseError, JoinError, LoadError, UndefinedCorrelation)
from .ranking import BUILTIN_PROXIES, ScoreTable, aggregate, kendall_tau, spearman_rho
from .rng import stream
from .space import parse_genotype

SCORE_FIELDS = ("id", "genotype", "sE", "sP", "sT", "sC", "flops", "az")
_PROXY_FIELD = {"E": "sE", "P": "sP", "T": "sT", "C": "sC"}


def fmt_float(x):
    if x is None:
        return "null"
    x = float(x)
    if not math.isfinite(x):
        return "null"
    return format(x, ".17g")


def _json_value(v):
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    return json.dumps(v)


def jsonl_line(record, fields=SCORE_FIELDS):
    """One JSON object with a fixed key order and 17-digit floats."""
    parts = [f"{json.dumps(k)}:{_json_value(record.get(k))}" for k in fields]
    return "{" + ",".join(parts) + "}"


def score_record(arch_id, genotype, scores, az=None):
    return {
        "id": arch_id,
        "genotype": str(genotype),
        "sE": scores.sE, "sP": scores.sP, "sT": scores.sT, "sC": scores.sC,
        "flops": int(scores.flops),
        "az": az,
    }


def write_scores_jsonl(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(jsonl_line(rec) + "\n")


@dataclass
class ScoreFile:
    table: ScoreTable
    genotypes: list
    az: np.ndarray


def _nan(v):
    return float("nan") if v is None else float(v)


def load_scores_jsonl(path):
    ids, genos, cols, az = [], [], {p: [] for p in BUILTIN_PROXIES}, []
    flops = []
    with open(path, encoding="utf-8") as fh:
        for row, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LoadError(f"invalid JSON: {exc.msg}", row) from None
            missing = [k for k in ("id", "genotype", "sE", "sP", "sT", "sC") if k not in rec]
            if missing:
                raise LoadError(f"missing fields {missing}", row)
            ids.append(str(rec["id"]))
            genos.append(rec["genotype"])
            for p, f in _PROXY_FIELD.items():
                cols[p].append(_nan(rec[f]))
            flops.append(_nan(rec.get("flops")))
            az.append(_nan(rec.get("az")))
    if len(set(ids)) != len(ids):
        seen = set()
        for row, i in enumerate(ids, start=1):
            if i in seen:
                raise LoadError(f"duplicate id {i!r}", row)
            seen.add(i)
    table = ScoreTable(ids, cols)
    table.add_column("flops", flops)
    return ScoreFile(table, genos, np.array(az))


@dataclass
class GroundTruthTable:
    arch_ids: list
    genotypes: list
    columns: dict = field(default_factory=dict)

    @property
    def datasets(self):
        return list(self.columns)

    def index(self):
        return {a: i for i, a in enumerate(self.arch_ids)}


def _read_rows(path):
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json" or text.lstrip().startswith("["):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise LoadError(f"invalid JSON: {exc.msg}") from None
        if not isinstance(doc, list) or not all(isinstance(r, dict) for r in doc):
            raise LoadError("JSON ground truth must be an array of objects")
        header = list(doc[0]) if doc else []
        return header, [{k: r.get(k) for k in header} | r for r in doc]
    reader = csv.DictReader(io.StringIO(text))
    return list(reader.fieldnames or []), list(reader)


def load_ground_truth(path):
    header, rows = _read_rows(path)
    if header[:2] != ["arch_id", "genotype"] or len(header) < 3:
        raise LoadError("header must be arch_id,genotype,<dataset>...")
    datasets = header[2:]
    ids, genos = [], []
    cols = {d: [] for d in datasets}
    seen = set()
    for row, rec in enumerate(rows, start=1):
        arch_id = str(rec["arch_id"])
        if arch_id in seen:
            raise LoadError(f"duplicate arch_id {arch_id!r}", row)
        seen.add(arch_id)
        try:
            parse_genotype(str(rec["genotype"]))
        except GenotypeParseError as exc:
            err = LoadError(f"malformed genotype: {exc}", row)
            err.offset = exc.offset
            raise err from exc
        for d in datasets:
            try:
                v = float(rec[d])
            except (TypeError, ValueError):
                raise LoadError(f"non-numeric accuracy {rec[d]!r} in column {d!r}", row) from None
            if not 0.0 <= v <= 100.0:
                raise LoadError(f"accuracy {v} in column {d!r} outside [0, 100]", row)
            cols[d].append(v)
        ids.append(arch_id)
        genos.append(str(rec["genotype"]))
    return GroundTruthTable(ids, genos, {d: np.array(v) for d, v in cols.items()})


def load_external_scores(path):
    """Read ``arch_id,<proxy>...``; returns ``{proxy: {arch_id: score}}``."""
    header, rows = _read_rows(path)
    if not header or header[0] != "arch_id" or len(header) < 2:
        raise LoadError("header must be arch_id,<proxy>...")
    out = {name: {} for name in header[1:]}
    for row, rec in enumerate(rows, start=1):
        arch_id = str(rec["arch_id"])
        if arch_id in out[header[1]]:
            raise LoadError(f"duplicate arch_id {arch_id!r}", row)
        for name in header[1:]:
            v = rec[name]
            try:
                out[name][arch_id] = float("nan") if v in (None, "", "null") else float(v)
            except ValueError:
                raise LoadError(f"non-numeric score {v!r} in column {name!r}", row) from None
    return out


def join_external(table, external):
    """Add external columns to ``table`` in place; ids must match one to one."""
    ids = set(map(str, table.arch_ids))
    for name, col in external.items():
        missing = ids.symmetric_difference(col)
        if missing:
            raise JoinError(missing)
        table.add_column(name, [col[str(a)] for a in table.arch_ids])
    return table


def align_ground_truth(table, gt):
    """Row indices into ``gt`` matching ``table`` order; ids must match one to one."""
    idx = gt.index()
    ids = [str(a) for a in table.arch_ids]
    missing = set(ids).symmetric_difference(idx)
    if missing:
        raise JoinError(missing)
    return np.array([idx[a] for a in ids])


def all_subsets(proxies=BUILTIN_PROXIES):
    """Every non-empty subset, by size then in the given order."""
    out = []
    for r in range(1, len(proxies) + 1):
        out.extend(tuple(c) for c in combinations(proxies, r))
    return out


@dataclass
class ReportRow:
    subset: tuple
    aggregation: str
    dataset: str
    m: int
    kt: float | None
    spr: float | None
    sel_mean: float | None = None
    sel_std: float | None = None
    runs: int = 0
    note: str = ""


@dataclass
class EvalReport:
    rows: list

    def cell(self, subset, dataset, aggregation="nl"):
        for r in self.rows:
            if r.subset == tuple(subset) and r.dataset == dataset and r.aggregation == aggregation:
                return r
        raise KeyError((tuple(subset), dataset, aggregation))

    CSV_FIELDS = ("subset", "aggregation", "dataset", "m", "kt", "spr", "sel_mean", "sel_std",
                  "runs", "note")

    def to_csv(self, fh=None):
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_FIELDS)
        for r in self.rows:
            w.writerow(["+".join(r.subset), r.aggregation, r.dataset, r.m,
                        "" if r.kt is None else fmt_float(r.kt),
                        "" if r.spr is None else fmt_float(r.spr),
                        "" if r.sel_mean is None else fmt_float(r.sel_mean),
                        "" if r.sel_std is None else fmt_float(r.sel_std),
                        r.runs, r.note])
        return buf.getvalue() if fh is None else None

    def to_text(self):
        lines = [f"{'subset':<10} {'agg':<6} {'dataset':<12} {'m':>6} {'KT':>7} {'SPR':>7}  selected acc"]
        for r in self.rows:
            kt = "undef" if r.kt is None else f"{r.kt:.3f}"
            spr = "undef" if r.spr is None else f"{r.spr:.3f}"
            sel = "" if r.sel_mean is None else f"{r.sel_mean:.2f} +- {r.sel_std:.2f} ({r.runs} runs)"
            lines.append(f"{'+'.join(r.subset):<10} {r.aggregation:<6} {r.dataset:<12} "
                         f"{r.m:>6} {kt:>7} {spr:>7}  {sel}")
        return "\n".join(lines)


def _safe(fn, x, y):
    try:
        return fn(x, y), ""
    except UndefinedCorrelation as exc:
        return None, str(exc)


def correlation_report(table, gt, proxy_subsets, aggregations=("nl",), runs=0, sample_size=3000,
                       seed=0):
    """Kendall tau-b and Spearman rho of each aggregated subset against each dataset.

    With ``runs > 0`` also reports the random-sample selection protocol: per
    run, draw ``sample_size`` architectures, re-rank them, and record the
    ground-truth accuracy of the AZ argmax.
    """
    # Canonical id order makes the report independent of input row order.
    table = table.take(sorted(range(table.m), key=lambda i: str(table.arch_ids[i])))
    rows_idx = align_ground_truth(table, gt)
    m = table.m
    out = []
    for subset in proxy_subsets:
        subset = tuple(subset)
        for agg in aggregations:
            pred = aggregate(table, subset, agg)
            picks = []
            for run in range(runs):
                rng = stream(seed, "selection", run)
                size = min(sample_size, m)
                idx = np.sort(rng.choice(m, size=size, replace=False))
                sub_pred = aggregate(table.take(idx), subset, agg)
                best = idx[np.lexsort((np.arange(size), -sub_pred))[0]]
                picks.append(rows_idx[best])
            for d in gt.datasets:
                acc = gt.columns[d][rows_idx]
                kt, note1 = _safe(kendall_tau, pred, acc)
                spr, note2 = _safe(spearman_rho, pred, acc)
                row = ReportRow(subset, agg, d, m, kt, spr, note=note1 or note2)
                if picks:
                    sel = gt.columns[d][np.array(picks)]
                    row.sel_mean, row.sel_std, row.runs = float(sel.mean()), float(sel.std()), runs
                out.append(row)
    return EvalReport(out)


def emit_scatter_csv(pred_ranks, gt_ranks, path):
    pred_ranks = np.asarray(pred_ranks, dtype=np.float64)
    gt_ranks = np.asarray(gt_ranks, dtype=np.float64)
    if pred_ranks.shape != gt_ranks.shape:
        raise ValueError("pred_ranks and gt_ranks must have equal length")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("pred_rank,gt_rank\n")
        for p, g in zip(pred_ranks, gt_ranks):
            fh.write(f"{fmt_float(p)},{fmt_float(g)}\n")


def read_scatter_csv(path):
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return (np.array([float(r["pred_rank"]) for r in rows]),
            np.array([float(r["gt_rank"]) for r in rows]))
