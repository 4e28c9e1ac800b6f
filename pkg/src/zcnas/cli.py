"""Command-line entry point: ``zcnas {score,rank,search,eval,space,selftest}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys

import numpy as np

from . import bench
from .config import RunConfig
from .errors import (ArgumentError, ConfigError, GenotypeParseError, InfeasibleBudget, JoinError,
                     LoadError, UnsupportedOperation, ZcnasError)
from .proxies import Scorer, score_many
from .ranking import BUILTIN_PROXIES, aggregate, assign_ranks
from .rng import stream
from .search import PlantedScorer, evolutionary_search, random_search
from .selftest import run_selftest
from .space import (MacroSpace, Nb201Space, enumerate_space, format_genotype, parse_genotype,
                    random_genotype)

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
_USAGE_ERRORS = (ArgumentError, ConfigError, GenotypeParseError, LoadError, UnsupportedOperation)


class UsageError(ZcnasError):
    pass


def _proxy_list(text):
    names = [p.strip() for p in text.split(",") if p.strip()]
    if not names:
        raise argparse.ArgumentTypeError("empty proxy list")
    return tuple(names)


def _add_config_flags(p):
    g = p.add_argument_group("configuration (flags override --config)")
    g.add_argument("--config", help="RunConfig JSON file")
    g.add_argument("--seed", type=int, help="global seed")
    g.add_argument("--space", choices=("nb201", "macro"), help="search space kind")
    g.add_argument("--cells-per-stage", type=int, help="nb201 cells per stage (N)")
    g.add_argument("--stem-width", type=int, help="nb201 stem channels (C)")
    g.add_argument("--resolution", type=int, help="input resolution")
    g.add_argument("--classes", type=int)
    g.add_argument("--flops-budget", type=int, help="MAC budget of the space")
    g.add_argument("--batch", type=int)
    g.add_argument("--init", dest="init_method", help="weight init method")
    g.add_argument("--power-iters", type=int)
    g.add_argument("--power-tol", type=float)
    g.add_argument("--eig-tol", type=float)
    g.add_argument("--workers", type=int)


def _space_override(cfg, args):
    kind = getattr(args, "space", None)
    space = cfg.space
    if kind == "nb201" and not isinstance(space, Nb201Space):
        space = Nb201Space()
    elif kind == "macro" and not isinstance(space, MacroSpace):
        space = MacroSpace()
    fields = {}
    for flag, attr in (("cells_per_stage", "cells_per_stage"), ("stem_width", "stem_width"),
                       ("resolution", "resolution"), ("classes", "classes"),
                       ("flops_budget", "flops_budget")):
        v = getattr(args, flag, None)
        if v is None:
            continue
        if not hasattr(space, attr):
            raise UsageError(f"--{flag.replace('_', '-')} does not apply to {space.kind}")
        fields[attr] = v
    if fields:
        from dataclasses import replace
        space = replace(space, **fields)
    return space


def load_config(args):
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    cfg.space = _space_override(cfg, args)
    for name in ("seed", "batch", "init_method", "power_iters", "power_tol", "eig_tol",
                 "workers", "T", "k", "budget", "rerank_period", "proxies", "aggregation"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    return cfg.validate()


def _read_genotype_source(path):
    """Genotypes from a text file (one per line) or a CSV with arch_id,genotype columns."""
    fh = sys.stdin if path == "-" else open(path, encoding="utf-8")
    with fh:
        text = fh.read()
    first = text.lstrip().split("\n", 1)[0]
    if first.startswith("arch_id,"):
        rows = list(csv.DictReader(io.StringIO(text)))
        if rows and "genotype" not in rows[0]:
            raise LoadError("CSV input needs a genotype column")
        return [(r["arch_id"], r["genotype"]) for r in rows]
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    return [(ln, ln) for ln in lines]


def _out(path):
    return sys.stdout if path in (None, "-") else open(path, "w", encoding="utf-8", newline="")


def cmd_score(args):
    cfg = load_config(args)
    items = [(g, g) for g in args.genotype]
    if args.file:
        items.extend(_read_genotype_source(args.file))
    if not items:
        raise UsageError("give at least one genotype or --file")
    ids = [i for i, _ in items]
    if len(set(ids)) != len(ids):
        raise UsageError("duplicate architecture ids in the input")
    genos = []
    for row, (_, text) in enumerate(items, start=1):
        try:
            genos.append(parse_genotype(text))
        except GenotypeParseError as exc:
            raise GenotypeParseError(f"input {row}: {exc.args[0].rsplit(' at byte', 1)[0]}",
                                     exc.offset) from None
    scores = score_many(genos, cfg.space, cfg.scoring_config(), cfg.workers)
    out = _out(args.out)
    try:
        for arch_id, g, s in zip(ids, genos, scores):
            out.write(bench.jsonl_line(bench.score_record(arch_id, g, s)) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def _check_proxies(table, proxies):
    unknown = [p for p in proxies if p not in table.columns]
    if unknown:
        raise UsageError(f"unknown proxy name(s): {', '.join(unknown)}; "
                         f"available: {', '.join(c for c in table.columns if c != 'flops')}")


def _load_scores(args):
    sf = bench.load_scores_jsonl(args.scores)
    if getattr(args, "external", None):
        bench.join_external(sf.table, bench.load_external_scores(args.external))
    return sf


def cmd_rank(args):
    cfg = load_config(args)
    sf = _load_scores(args)
    proxies = tuple(cfg.proxies)
    _check_proxies(sf.table, proxies)
    az = aggregate(sf.table, proxies, cfg.aggregation)
    order = np.lexsort((np.arange(len(az)), -az))
    cols = [p for p in sf.table.columns if p != "flops"]
    out = _out(args.out)
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["rank", "id", "genotype", "az"] + cols)
        for pos, i in enumerate(order, start=1):
            w.writerow([pos, sf.table.arch_ids[i], sf.genotypes[i], bench.fmt_float(az[i])]
                       + [bench.fmt_float(sf.table.columns[c][i]) for c in cols])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_search(args):
    cfg = load_config(args)
    space = cfg.space
    if args.planted is not None:
        scorer = PlantedScorer(space, seed=args.planted)
    else:
        scorer = Scorer(space, cfg.scoring_config())
    scfg = cfg.search_config()
    if args.mode == "random":
        best, table = random_search(space, args.n, scfg, scorer)
        genos = [parse_genotype(a) for a in table.arch_ids]
        flops = table.columns["flops"]
        az = aggregate(table, scfg.proxy_subset, "nl")
        rows = [(i, g, {p: table.columns[p][i] for p in BUILTIN_PROXIES}, flops[i], az[i])
                for i, g in enumerate(genos)]
    else:
        result = evolutionary_search(space, scfg, scorer)
        h = result.history
        best = result.best
        rows = [(i, g, {p: h.scores[p][i] for p in BUILTIN_PROXIES}, h.flops[i], result.az[i])
                for i, g in enumerate(h.genotypes)]
    trace = args.trace or cfg.paths.get("trace")
    if trace:
        with open(trace, "w", encoding="utf-8") as fh:
            for i, g, s, fl, a in rows:
                rec = {"id": i, "genotype": format_genotype(g), "sE": s["E"], "sP": s["P"],
                       "sT": s["T"], "sC": s["C"], "flops": int(fl), "az": a}
                fh.write(bench.jsonl_line(rec) + "\n")
    print(format_genotype(best))
    return EXIT_OK


def _parse_subsets(args, table):
    if args.all_subsets:
        subsets = bench.all_subsets()
    elif args.subsets:
        subsets = [_proxy_list(s) for s in args.subsets.split(";") if s.strip()]
    else:
        subsets = [BUILTIN_PROXIES]
    for s in subsets:
        _check_proxies(table, s)
    return subsets


def cmd_eval(args):
    cfg = load_config(args)
    sf = _load_scores(args)
    gt = bench.load_ground_truth(args.gt)
    subsets = _parse_subsets(args, sf.table)
    aggs = tuple(a.strip() for a in args.aggregations.split(",") if a.strip())
    for a in aggs:
        if a not in ("nl", "linear"):
            raise UsageError(f"unknown aggregation {a!r}")
    report = bench.correlation_report(sf.table, gt, subsets, aggs, runs=args.runs,
                                      sample_size=args.sample_size,
                                      seed=cfg.sub_seed("selection"))
    print(report.to_text())
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            report.to_csv(fh)
    if args.scatter:
        idx = bench.align_ground_truth(sf.table, gt)
        pred = aggregate(sf.table, subsets[0], aggs[0])
        bench.emit_scatter_csv(assign_ranks(pred), assign_ranks(gt.columns[gt.datasets[0]][idx]),
                               args.scatter)
    return EXIT_OK


def cmd_space(args):
    cfg = load_config(args)
    out = _out(args.out)
    try:
        if args.action == "enumerate":
            for g in enumerate_space(cfg.space):
                out.write(format_genotype(g) + "\n")
        else:
            rng = stream(cfg.sub_seed("sample"), "space-sample")
            for _ in range(args.n):
                out.write(format_genotype(random_genotype(cfg.space, rng)) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_selftest(args):
    results = run_selftest()
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name}: {r.detail}")
    failed = sum(not r.ok for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_FAILURE


def build_parser():
    parser = argparse.ArgumentParser(prog="zcnas", description="Training-free architecture search.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="score genotypes, emit JSONL")
    p.add_argument("genotype", nargs="*", help="genotype strings")
    p.add_argument("--file", help="text file (one genotype per line), CSV with arch_id,genotype, or -")
    p.add_argument("--out", help="output path (default stdout)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("rank", help="aggregate a scores JSONL into a ranked CSV")
    p.add_argument("scores", help="scores JSONL")
    p.add_argument("--proxies", type=_proxy_list, help="comma-separated proxy subset")
    p.add_argument("--aggregation", choices=("nl", "linear"))
    p.add_argument("--external", help="CSV arch_id,<proxy>... joined as extra columns")
    p.add_argument("--out", help="output path (default stdout)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("search", help="evolutionary or random search; prints the best genotype")
    p.add_argument("--mode", choices=("evolution", "random"), default="evolution")
    p.add_argument("--n", type=int, default=100, help="samples for --mode random")
    p.add_argument("--T", type=int, help="evolution iterations")
    p.add_argument("--k", type=int, help="top-k parent pool")
    p.add_argument("--budget", type=int, help="MAC budget")
    p.add_argument("--rerank-period", type=int)
    p.add_argument("--proxies", type=_proxy_list)
    p.add_argument("--planted", type=int, metavar="SEED",
                   help="score with a planted synthetic fitness instead of the proxies")
    p.add_argument("--trace", help="JSONL trace path")
    _add_config_flags(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval", help="correlation report against ground-truth accuracies")
    p.add_argument("scores", help="scores JSONL")
    p.add_argument("--gt", required=True, help="ground truth CSV or JSON")
    p.add_argument("--subsets", help="semicolon-separated subsets, e.g. 'E,P,T,C;C'")
    p.add_argument("--all-subsets", action="store_true", help="all 15 subsets of E,P,T,C")
    p.add_argument("--aggregations", default="nl", help="comma-separated: nl,linear")
    p.add_argument("--external", help="CSV arch_id,<proxy>... joined as extra columns")
    p.add_argument("--runs", type=int, default=0, help="selection-protocol runs")
    p.add_argument("--sample-size", type=int, default=3000)
    p.add_argument("--csv", help="write the report as CSV")
    p.add_argument("--scatter", help="write pred_rank,gt_rank for the first subset and dataset")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("space", help="enumerate or sample genotypes")
    p.add_argument("action", choices=("enumerate", "sample"))
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--out", help="output path (default stdout)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_space)

    p = sub.add_parser("selftest", help="run the built-in invariant checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, *_USAGE_ERRORS) as exc:
        print(f"zcnas {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (JoinError, InfeasibleBudget, ZcnasError, OSError) as exc:
        print(f"zcnas {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
