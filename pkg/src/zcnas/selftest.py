"""Fast invariant checks runnable from the command line (``zcnas selftest``)."""

from __future__ import annotations

from dataclasses import dataclass
import itertools
import math

import numpy as np

from .linalg import jacobi_eigvalsh, power_iteration
from .nn import (AvgPool, BatchNorm, Conv2d, GraphBuilder, InitSpec, ReLU, block_vjp, forward,
                 graph_macs, init_weights)
from .proxies import block_expressivity, trainability
from .ranking import ScoreTable, aggregate_linear, aggregate_nonlinear, kendall_tau
from .rng import stream
from .space import (SPACE_SIZE, Nb201Space, count_flops, enumerate_space, format_genotype,
                    instantiate, parse_genotype, random_genotype)


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str


def _entropy_pair():
    # rows are centered and orthogonal with covariance diag(3, 1)
    a = np.array([1.0, -1.0, 1.0, -1.0]) * math.sqrt(9.0 / 4.0)
    b = np.array([1.0, 1.0, -1.0, -1.0]) * math.sqrt(3.0 / 4.0)
    h = block_expressivity(np.stack([a, b]))
    return abs(h - 0.5623) <= 1e-4, f"H({{3,1}}) = {h:.6f}"


def _trainability_symmetry():
    t1, t2, th = trainability([1.0]), trainability([2.0]), trainability([0.5])
    return t1 == 0.0 and t2 == -0.5 and th == -0.5, f"T(1)={t1} T(2)={t2} T(1/2)={th}"


def _vjp_finite_difference():
    rng = stream(0, "selftest", "vjp")
    builder = GraphBuilder((3, 6, 6))
    builder.begin_block(0)
    out = builder.chain(0, Conv2d(3, 4, 3), BatchNorm(4), ReLU(), AvgPool(3, 1, 1))
    builder.end_block(out)
    graph = init_weights(builder.build(), InitSpec(seed=1))
    x = rng.normal(size=(2, 3, 6, 6))
    g = rng.normal(size=(2, 4, 6, 6))
    outputs, cache = forward(graph, x)
    analytic = block_vjp(graph, cache, 0, g)
    eps = 1e-6
    worst = 0.0
    for _ in range(20):
        d = rng.normal(size=x.shape)
        fp = np.sum(g * forward(graph, x + eps * d)[0][0])
        fm = np.sum(g * forward(graph, x - eps * d)[0][0])
        fd = (fp - fm) / (2 * eps)
        an = np.sum(analytic * d)
        worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-12))
    return worst <= 1e-4, f"max relative error {worst:.2e}"


def _power_iteration():
    rng = stream(0, "selftest", "power")
    worst = 0.0
    for _ in range(10):
        M = rng.normal(size=(int(rng.integers(2, 24)), int(rng.integers(2, 24))))
        exact = math.sqrt(jacobi_eigvalsh(M.T @ M)[-1])
        est = power_iteration(M, power_iters=5000, power_tol=1e-15).sigma
        worst = max(worst, abs(est - exact) / exact)
    return worst <= 1e-6, f"max relative error {worst:.2e}"


def _tau_brute(x, y):
    conc = disc = tx = ty = 0
    for i, j in itertools.combinations(range(len(x)), 2):
        a, b = np.sign(x[i] - x[j]), np.sign(y[i] - y[j])
        if a == 0 and b == 0:
            continue
        if a == 0:
            tx += 1
        elif b == 0:
            ty += 1
        elif a == b:
            conc += 1
        else:
            disc += 1
    return (conc - disc) / math.sqrt((conc + disc + tx) * (conc + disc + ty))


def _kendall():
    rng = stream(0, "selftest", "kendall")
    worst = 0.0
    for _ in range(10):
        x = rng.integers(0, 8, size=60).astype(float)
        y = rng.integers(0, 8, size=60).astype(float)
        worst = max(worst, abs(kendall_tau(x, y) - _tau_brute(x, y)))
    return worst <= 1e-12, f"max deviation {worst:.1e}"


def _aggregation_example():
    # per-proxy ranks (4,4,4,1) and (2,2,2,2) among m = 4 architectures
    table = ScoreTable(["a", "b", "c", "d"], {
        "E": [4, 2, 1, 3], "P": [4, 2, 1, 3], "T": [4, 2, 3, 1], "C": [1, 2, 3, 4],
    })
    nl = aggregate_nonlinear(table)
    lin = aggregate_linear(table)
    ok = (abs(nl[0] + 1.3863) <= 1e-4 and abs(nl[1] + 2.7726) <= 1e-4
          and lin[0] == 13 and lin[1] == 8)
    return ok, f"NL {nl[0]:.4f} {nl[1]:.4f}, linear {lin[0]:g} {lin[1]:g}"


def _genotype_round_trip():
    count = 0
    bad = 0
    for g in enumerate_space(Nb201Space()):
        count += 1
        if parse_genotype(format_genotype(g)) != g:
            bad += 1
    return count == SPACE_SIZE and bad == 0, f"{count} cells, {bad} round-trip failures"


def _flops_closed_form():
    space = Nb201Space(cells_per_stage=1, resolution=16)
    rng = stream(0, "selftest", "flops")
    bad = 0
    for _ in range(10):
        g = random_genotype(space, rng)
        if count_flops(g, space) != graph_macs(instantiate(g, space)):
            bad += 1
    return bad == 0, f"{bad}/10 mismatches"


CHECKS = (
    ("expressivity {3,1}", _entropy_pair),
    ("trainability symmetry", _trainability_symmetry),
    ("vjp vs finite differences", _vjp_finite_difference),
    ("power iteration vs eigensolver", _power_iteration),
    ("kendall tau-b vs brute force", _kendall),
    ("aggregation worked example", _aggregation_example),
    ("genotype round trip", _genotype_round_trip),
    ("closed-form MACs", _flops_closed_form),
)


def run_selftest():
    results = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check, not a crashed selftest
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(ok), detail))
    return results
