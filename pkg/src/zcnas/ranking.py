"""Rank assignment, rank aggregation and rank-correlation statistics."""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import ArgumentError, UndefinedCorrelation

BUILTIN_PROXIES = ("E", "P", "T", "C")


@dataclass
class ScoreTable:
    """m architectures x named score columns."""

    arch_ids: list
    columns: dict = field(default_factory=dict)

    def __post_init__(self):
        self.arch_ids = list(self.arch_ids)
        if not self.arch_ids:
            raise ArgumentError("a score table needs at least one architecture")
        if len(set(self.arch_ids)) != len(self.arch_ids):
            raise ArgumentError("arch_ids must be unique")
        self.columns = {k: np.asarray(v, dtype=np.float64) for k, v in self.columns.items()}
        for name, col in self.columns.items():
            if col.shape != (len(self.arch_ids),):
                raise ArgumentError(f"column {name!r} has length {col.size}, expected {self.m}")

    @property
    def m(self):
        return len(self.arch_ids)

    def add_column(self, name, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (self.m,):
            raise ArgumentError(f"column {name!r} has length {values.size}, expected {self.m}")
        self.columns[name] = values

    def take(self, idx):
        idx = np.asarray(idx, dtype=int)
        return ScoreTable([self.arch_ids[i] for i in idx],
                          {k: v[idx] for k, v in self.columns.items()})

    def _subset(self, proxy_subset):
        subset = list(proxy_subset)
        if not subset:
            raise ArgumentError("proxy subset must not be empty")
        missing = [p for p in subset if p not in self.columns]
        if missing:
            raise ArgumentError(f"unknown proxy columns: {missing}")
        return subset


def assign_ranks(scores):
    """Ascending average-tie ranks in [1, m]; NaN entries tie at the bottom."""
    v = np.asarray(scores, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ArgumentError("scores must be a non-empty 1-D array")
    v = np.where(np.isnan(v), -np.inf, v)
    order = np.argsort(v, kind="stable")
    sv = v[order]
    new = np.empty(sv.size, dtype=bool)
    new[0] = True
    np.not_equal(sv[1:], sv[:-1], out=new[1:])
    starts = np.flatnonzero(new)
    ends = np.append(starts[1:], sv.size)
    avg = (starts + 1 + ends) / 2.0
    ranks = np.empty(sv.size)
    ranks[order] = avg[np.cumsum(new) - 1]
    return ranks


def nan_flags(scores):
    """Mask of entries that :func:`assign_ranks` forced to the bottom."""
    return np.isnan(np.asarray(scores, dtype=np.float64))


def aggregate_nonlinear(table, proxy_subset=BUILTIN_PROXIES):
    """Sum over proxies of log(rank / m); 0 only for an all-top architecture."""
    subset = table._subset(proxy_subset)
    m = table.m
    total = np.zeros(m)
    for name in subset:
        total += np.log(assign_ranks(table.columns[name]) / m)
    return total


def aggregate_linear(table, proxy_subset=BUILTIN_PROXIES):
    subset = table._subset(proxy_subset)
    total = np.zeros(table.m)
    for name in subset:
        total += assign_ranks(table.columns[name])
    return total


def aggregate(table, proxy_subset=BUILTIN_PROXIES, method="nl"):
    if method in ("nl", "nonlinear"):
        return aggregate_nonlinear(table, proxy_subset)
    if method in ("l", "linear"):
        return aggregate_linear(table, proxy_subset)
    raise ArgumentError(f"unknown aggregation {method!r}; use 'nl' or 'linear'")


def _check_pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ArgumentError("x and y must be 1-D and equally long")
    if x.size < 2:
        raise ArgumentError("need at least two observations")
    if np.isnan(x).any() or np.isnan(y).any():
        raise ArgumentError("NaN in correlation input; rank or drop failed entries first")
    return x, y


def _tie_pairs(sorted_vals):
    """Sum of t(t-1)/2 over runs of equal values in a sorted array."""
    new = np.r_[True, sorted_vals[1:] != sorted_vals[:-1], True]
    runs = np.diff(np.flatnonzero(new))
    return int(np.sum(runs * (runs - 1) // 2))


def _count_inversions(a):
    """Number of pairs i < j with a[i] > a[j] (bottom-up merge sort)."""
    a = list(a)
    n = len(a)
    buf = [None] * n
    inv = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if a[j] < a[i]:
                    buf[k] = a[j]
                    inv += mid - i
                    j += 1
                else:
                    buf[k] = a[i]
                    i += 1
                k += 1
            buf[k:hi] = a[i:mid] + a[j:hi]
        a, buf = buf, a
        width *= 2
    return inv


def kendall_tau(x, y):
    """Kendall's tau-b in O(m log m)."""
    x, y = _check_pair(x, y)
    m = x.size
    n0 = m * (m - 1) // 2
    order = np.lexsort((y, x))
    xs, ys = x[order], y[order]
    n1 = _tie_pairs(xs)
    # pairs tied in both x and y
    joint_new = np.r_[True, (xs[1:] != xs[:-1]) | (ys[1:] != ys[:-1]), True]
    runs = np.diff(np.flatnonzero(joint_new))
    n3 = int(np.sum(runs * (runs - 1) // 2))
    swaps = _count_inversions(ys.tolist())
    n2 = _tie_pairs(np.sort(ys))
    denom = (n0 - n1) * (n0 - n2)
    if denom == 0:
        raise UndefinedCorrelation("kendall tau is undefined for a constant vector")
    s = n0 - n1 - n2 + n3 - 2 * swaps
    return float(min(max(s / math.sqrt(denom), -1.0), 1.0))


def spearman_rho(x, y):
    """Pearson correlation of average-tie ranks."""
    x, y = _check_pair(x, y)
    rx, ry = assign_ranks(x), assign_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if denom == 0.0:
        raise UndefinedCorrelation("spearman rho is undefined for a constant vector")
    return float(min(max(float(rx @ ry) / denom, -1.0), 1.0))
