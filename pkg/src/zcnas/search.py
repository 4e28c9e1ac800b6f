"""Random-sampling search and budget-constrained evolutionary search."""

from __future__ import annotations

from bisect import bisect_left, bisect_right, insort
from dataclasses import dataclass
import math

import numpy as np

from .errors import ArgumentError, InfeasibleBudget
from .proxies import ProxyScores
from .ranking import BUILTIN_PROXIES, ScoreTable, aggregate_nonlinear
from .rng import stream
from .space import (EDGES, OPS, CellGenotype, Nb201Space, count_flops, format_genotype, mutate,
                    random_genotype)


@dataclass(frozen=True)
class SearchConfig:
    T: int = 2000
    k: int = 1024
    budget: int | None = None  # None: fall back to the space's flops_budget
    seed: int = 0
    rerank_period: int = 1
    proxy_subset: tuple = BUILTIN_PROXIES
    max_retries: int = 100

    def __post_init__(self):
        object.__setattr__(self, "proxy_subset", tuple(self.proxy_subset))
        if self.T < 1 or not 1 <= self.k <= self.T:
            raise ArgumentError(f"need 1 <= k <= T, got k={self.k}, T={self.T}")
        if self.budget is not None and self.budget <= 0:
            raise ArgumentError("budget must be positive")
        if self.rerank_period < 1:
            raise ArgumentError("rerank_period must be >= 1")
        if not self.proxy_subset:
            raise ArgumentError("proxy_subset must not be empty")


def _key(v):
    return -math.inf if math.isnan(v) else v


class OrderStatIndex:
    """Sorted multiset answering average-tie rank queries in O(log m)."""

    def __init__(self):
        self._sorted = []

    def __len__(self):
        return len(self._sorted)

    def add(self, v):
        insort(self._sorted, _key(v))

    def rank(self, v):
        v = _key(v)
        lo = bisect_left(self._sorted, v)
        hi = bisect_right(self._sorted, v)
        return lo + (hi - lo + 1) / 2.0


class SearchHistory:
    """Append-only architectures and per-proxy score arrays."""

    def __init__(self, proxies=BUILTIN_PROXIES):
        self.proxies = tuple(proxies)
        self.genotypes = []
        self.flops = []
        self.scores = {p: [] for p in BUILTIN_PROXIES}
        self._index = {p: OrderStatIndex() for p in BUILTIN_PROXIES}

    def __len__(self):
        return len(self.genotypes)

    def append(self, genotype, s: ProxyScores):
        self.genotypes.append(genotype)
        self.flops.append(s.flops)
        for name, v in s.as_dict().items():
            self.scores[name].append(v)
            self._index[name].add(v)

    def ranks(self, name):
        idx = self._index[name]
        return np.array([idx.rank(v) for v in self.scores[name]])

    def az_scores(self, proxies=None):
        proxies = self.proxies if proxies is None else proxies
        m = len(self)
        total = np.zeros(m)
        for name in proxies:
            total += np.log(self.ranks(name) / m)
        return total

    def table(self):
        ids = list(range(len(self)))
        return ScoreTable(ids, {p: self.scores[p] for p in BUILTIN_PROXIES})


def top_k(history, az_scores, k):
    """Indices of the k best AZ scores; earlier insertion wins ties."""
    az = np.asarray(az_scores, dtype=np.float64)
    if len(az) == 0:
        raise ArgumentError("history is empty")
    order = np.lexsort((np.arange(len(az)), -az))
    return [int(i) for i in order[:k]]


def _budget(space, cfg):
    return cfg.budget if cfg.budget is not None else space.flops_budget


def _feasible(genotype, space, budget):
    return budget is None or count_flops(genotype, space) <= budget


def _random_feasible(space, rng, budget, retries):
    for _ in range(retries):
        g = random_genotype(space, rng)
        if _feasible(g, space, budget):
            return g
    return None


@dataclass
class SearchResult:
    best: object
    history: SearchHistory
    az: np.ndarray
    best_index: int


def evolutionary_search(space, cfg, scorer, on_iteration=None):
    """Aging-free evolutionary search driven by non-linear rank aggregation.

    Every iteration scores one candidate, appends it to the history,
    re-ranks the whole history (every ``rerank_period`` iterations) and
    mutates a uniformly chosen member of the current top-k to produce the
    next candidate.  Mutations over budget are re-drawn up to
    ``max_retries`` times before falling back to a fresh random sample.
    """
    rng = stream(cfg.seed, "search")
    budget = _budget(space, cfg)
    current = _random_feasible(space, rng, budget, cfg.max_retries * 10)
    if current is None:
        raise InfeasibleBudget(f"no architecture within {budget} MACs after "
                               f"{cfg.max_retries * 10} random draws")
    history = SearchHistory(cfg.proxy_subset)
    elites = []
    for i in range(cfg.T):
        history.append(current, scorer(current))
        if i % cfg.rerank_period == 0 or not elites:
            elites = top_k(history, history.az_scores(), cfg.k)
        if on_iteration is not None:
            on_iteration(i, current, history)
        if i == cfg.T - 1:
            break
        parent = history.genotypes[elites[int(rng.integers(len(elites)))]]
        child = None
        for _ in range(cfg.max_retries):
            cand = mutate(parent, space, rng)
            if _feasible(cand, space, budget):
                child = cand
                break
        if child is None:
            child = _random_feasible(space, rng, budget, cfg.max_retries * 10) or parent
        current = child
    az = history.az_scores()
    best = top_k(history, az, 1)[0]
    return SearchResult(history.genotypes[best], history, az, best)


def random_search(space, n, cfg, scorer, candidates=None):
    """Score ``n`` distinct uniform samples (or the given candidates); pick the AZ argmax.

    Returns ``(best_genotype, table)``; table ids are genotype strings.
    """
    budget = _budget(space, cfg)
    if candidates is None:
        if n < 1:
            raise ArgumentError("n must be >= 1")
        rng = stream(cfg.seed, "random-search")
        seen, candidates = set(), []
        misses = 0
        while len(candidates) < n:
            g = random_genotype(space, rng)
            key = format_genotype(g)
            if key in seen or not _feasible(g, space, budget):
                misses += 1
                if misses > 100 * n + 10000:
                    raise InfeasibleBudget(f"could not draw {n} distinct feasible architectures")
                continue
            seen.add(key)
            candidates.append(g)
    candidates = list(candidates)
    scores = [scorer(g) for g in candidates]
    table = ScoreTable(
        [format_genotype(g) for g in candidates],
        {p: [s.as_dict()[p] for s in scores] for p in BUILTIN_PROXIES},
    )
    table.add_column("flops", [s.flops for s in scores])
    az = aggregate_nonlinear(table, cfg.proxy_subset)
    best = top_k(None, az, 1)[0]
    return candidates[best], table


class PlantedScorer:
    """Synthetic scorer reporting one known fitness as all four proxies.

    Fitness of a cell is a sum of per-edge op values plus a weaker coupling
    between consecutive edges, so the landscape is smooth but not separable.
    """

    def __init__(self, space, seed=0, coupling=0.25):
        if not isinstance(space, Nb201Space):
            raise ArgumentError("the planted scorer is defined on the nb201 cell space")
        rng = stream(seed, "planted-fitness")
        self.space = space
        self.unary = rng.normal(size=(len(EDGES), len(OPS)))
        self.pair = coupling * rng.normal(size=(len(EDGES) - 1, len(OPS), len(OPS)))

    def fitness(self, genotype: CellGenotype):
        ops = genotype.edge_ops
        f = sum(self.unary[e, o] for e, o in enumerate(ops))
        f += sum(self.pair[e, ops[e], ops[e + 1]] for e in range(len(ops) - 1))
        return float(f)

    def __call__(self, genotype):
        f = self.fitness(genotype)
        return ProxyScores(f, f, f, f, count_flops(genotype, self.space))
