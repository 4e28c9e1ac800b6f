"""Expressivity, progressivity, trainability and complexity scores of one network.

All four come out of a single forward pass on Gaussian noise plus one
probe-injected backward pass per primary block.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import math
import warnings

import numpy as np

from .errors import ArgumentError, NumericError
from .linalg import jacobi_eigvalsh, power_iteration
from .nn import InitSpec, block_vjp, forward
from .rng import derive_seed, sample_gaussian_input, sample_rademacher
from .space import count_flops, instantiate


class DegenerateScoreWarning(UserWarning):
    """A proxy was evaluated on too few blocks to be meaningful."""


@dataclass(frozen=True)
class ScoringConfig:
    batch: int = 64
    resolution: int | None = None  # None: use the space's resolution
    init: InitSpec = field(default_factory=InitSpec)
    input_seed: int = 0
    probe_seed: int = 0
    power_iters: int = 50
    power_tol: float = 1e-6
    eig_tol: float = 1e-10

    def __post_init__(self):
        if self.batch < 1:
            raise ArgumentError("batch must be >= 1")
        if self.power_iters < 1:
            raise ArgumentError("power_iters must be >= 1")


@dataclass(frozen=True)
class ProxyScores:
    sE: float
    sP: float
    sT: float
    sC: float
    flops: int
    failed: bool = False
    flags: tuple = ()

    def as_dict(self):
        return {"E": self.sE, "P": self.sP, "T": self.sT, "C": self.sC}


@dataclass(frozen=True)
class BlockStats:
    block_entropy: np.ndarray
    block_sigma: np.ndarray


def features_matrix(f):
    """(b, c, h, w) activations -> c x (b*h*w) matrix, one column per position."""
    b, c, h, w = f.shape
    return f.transpose(1, 0, 2, 3).reshape(c, b * h * w)


def _entropy(eigs, eig_tol):
    lam = np.clip(eigs, 0.0, None)
    total = lam.sum()
    if total <= eig_tol:
        return 0.0, True
    p = lam / total
    p = p[p > 0.0]
    return float(max(-np.sum(p * np.log(p)), 0.0)), False


def block_expressivity(features, eig_tol=1e-10, return_dead=False):
    """Entropy of the L1-normalized covariance spectrum of c x n features."""
    F = np.asarray(features, dtype=np.float64)
    if F.ndim != 2:
        raise ArgumentError("features must be a c x n matrix")
    c, n = F.shape
    if n < 2:
        raise ArgumentError("need at least two feature vectors")
    Fc = F - F.mean(axis=1, keepdims=True)
    V = (Fc @ Fc.T) / (n - 1)
    ent, dead = _entropy(jacobi_eigvalsh(V), eig_tol)
    return (ent, dead) if return_dead else ent


def expressivity(block_entropies):
    return float(np.sum(block_entropies))


def progressivity(block_entropies):
    """Smallest increase of block entropy between consecutive blocks."""
    e = np.asarray(block_entropies, dtype=np.float64)
    if e.size < 2:
        warnings.warn("progressivity needs at least two blocks; returning 0",
                      DegenerateScoreWarning, stacklevel=2)
        return 0.0
    return float(np.min(np.diff(e)))


def trainability(sigmas):
    """Mean of -sigma - 1/sigma + 2 over the block Jacobian spectral norms."""
    s = np.asarray(sigmas, dtype=np.float64)
    if s.size == 0:
        warnings.warn("trainability needs at least two blocks; returning 0",
                      DegenerateScoreWarning, stacklevel=2)
        return 0.0
    if np.any(s <= 0):
        raise ArgumentError("spectral norms must be positive")
    return float(np.mean(-s - 1.0 / s + 2.0))


def block_probes(shape, seed):
    """Rademacher probes shaped like a (b, c, h, w) block output.

    Every spatial-batch position gets an independent c-vector.
    """
    b, c, h, w = shape
    v = sample_rademacher(c, b * h * w, seed)
    return v.reshape(c, b, h, w).transpose(1, 0, 2, 3)


def estimate_block_jacobian(graph, cache, l, probes):
    """Monte-Carlo estimate of the block Jacobian transpose (c_in x c_out).

    ``l`` is the 0-based block index.  Input-gradient positions of a strided
    block are paired with the output position they project onto, and the
    average runs over output positions.
    """
    g_in = block_vjp(graph, cache, l, probes)
    b, c, h, w = probes.shape
    H, W = g_in.shape[2:]
    if (H, W) != (h, w):
        ih = (np.arange(H) * h) // H
        iw = (np.arange(W) * w) // W
        probes = probes[:, :, ih[:, None], iw[None, :]]
    n = b * h * w
    return np.tensordot(g_in, probes, axes=([0, 2, 3], [0, 2, 3])) / n


def _failed(flops, reason):
    nan = float("nan")
    return ProxyScores(nan, nan, nan, nan, flops, failed=True, flags=(reason,))


def score_architecture(genotype, space, cfg=None):
    """Score one architecture; returns ``(ProxyScores, BlockStats)``.

    A numeric failure does not raise: it yields NaN scores with
    ``failed=True`` so that ranking puts the network last on every proxy.
    """
    cfg = cfg or ScoringConfig()
    if cfg.resolution is not None and cfg.resolution != space.resolution:
        space = replace(space, resolution=cfg.resolution)
    flops = count_flops(genotype, space)
    # Weights are keyed by structural position, not by genotype, so two
    # architectures sharing an op on an edge share its weights.
    probe_seed = derive_seed(cfg.probe_seed, "probe")
    graph = instantiate(genotype, space, cfg.init)
    x = sample_gaussian_input(cfg.batch, *graph.input_shape, cfg.input_seed)
    empty = BlockStats(np.zeros(0), np.zeros(0))
    try:
        outputs, cache = forward(graph, x)
        flags = []
        ent = np.zeros(len(outputs))
        for l, f in enumerate(outputs):
            ent[l], dead = _entropy_of(f, cfg.eig_tol)
            if dead:
                flags.append(f"dead-block:{l + 1}")
        sigmas = np.zeros(max(len(outputs) - 1, 0))
        for l in range(1, len(outputs)):
            probes = block_probes(outputs[l].shape, derive_seed(probe_seed, l + 1))
            At = estimate_block_jacobian(graph, cache, l, probes)
            res = power_iteration(At, cfg.power_iters, cfg.power_tol,
                                  seed=derive_seed(probe_seed, "power", l + 1), eig_tol=cfg.eig_tol)
            sigmas[l - 1] = res.sigma
            if res.degenerate:
                flags.append(f"zero-jacobian:{l + 1}")
        if len(outputs) < 2:
            flags.append("single-block")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateScoreWarning)
            sE, sP, sT = expressivity(ent), progressivity(ent), trainability(sigmas)
    except NumericError as exc:
        return _failed(flops, f"numeric-failure:{exc.node}"), empty
    scores = (sE, sP, sT)
    if not all(math.isfinite(v) for v in scores):
        return _failed(flops, "non-finite-score"), empty
    return ProxyScores(sE, sP, sT, float(flops), flops, flags=tuple(flags)), BlockStats(ent, sigmas)


def _entropy_of(f, eig_tol):
    F = features_matrix(f)
    if F.shape[1] < 2:
        raise ArgumentError("block output has fewer than two positions")
    return block_expressivity(F, eig_tol, return_dead=True)


class Scorer:
    """Callable ``genotype -> ProxyScores`` bound to a space and a config."""

    def __init__(self, space, cfg=None):
        self.space = space
        self.cfg = cfg or ScoringConfig()

    def __call__(self, genotype):
        return score_architecture(genotype, self.space, self.cfg)[0]


def _score_one(args):
    genotype, space, cfg = args
    return score_architecture(genotype, space, cfg)[0]


def score_many(genotypes, space, cfg=None, workers=1):
    """Score a list of genotypes; results come back in input order."""
    cfg = cfg or ScoringConfig()
    genotypes = list(genotypes)
    if workers <= 1 or len(genotypes) < 2:
        return [score_architecture(g, space, cfg)[0] for g in genotypes]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_score_one, [(g, space, cfg) for g in genotypes], chunksize=4))
