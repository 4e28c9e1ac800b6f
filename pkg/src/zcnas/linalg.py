"""Symmetric eigenvalues by cyclic Jacobi rotations and spectral norms by power iteration."""

from __future__ import annotations

from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import ArgumentError, NumericError
from .rng import stream


@lru_cache(maxsize=64)
def _round_robin(n):
    """Tournament schedule: n-1 (or n) rounds of disjoint index pairs covering all pairs."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a < n and b < n]
        if pairs:
            p, q = zip(*pairs)
            rounds.append((np.array(p), np.array(q)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_eigvalsh(A, tol=1e-14, max_sweeps=50):
    """Eigenvalues of a real symmetric matrix, ascending.

    Each round of a sweep applies n/2 independent rotations at once
    (round-robin ordering), which keeps the inner loop in numpy.
    """
    A = np.array(A, dtype=np.float64, copy=True)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ArgumentError(f"expected a square matrix, got shape {A.shape}")
    if not np.isfinite(A).all():
        raise NumericError("non-finite matrix entry")
    n = A.shape[0]
    if n == 1:
        return A[0].copy()
    A = 0.5 * (A + A.T)
    scale = np.linalg.norm(A)
    if scale == 0.0:
        return np.zeros(n)
    rounds = _round_robin(n)
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(A * A) - np.sum(np.diag(A) ** 2), 0.0))
        if off <= tol * scale:
            break
        for p, q in rounds:
            apq = A[p, q]
            active = np.abs(apq) > 1e-300
            if not active.any():
                continue
            app, aqq = A[p, p], A[q, q]
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                tau = np.where(active, (aqq - app) / (2.0 * np.where(active, apq, 1.0)), 0.0)
                t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            Ap, Aq = A[p, :], A[q, :]
            A[p, :] = c[:, None] * Ap - s[:, None] * Aq
            A[q, :] = s[:, None] * Ap + c[:, None] * Aq
            Ap, Aq = A[:, p], A[:, q]
            A[:, p] = Ap * c[None, :] - Aq * s[None, :]
            A[:, q] = Ap * s[None, :] + Aq * c[None, :]
    return np.sort(np.diag(A))


class PowerResult(NamedTuple):
    sigma: float
    iterations: int
    converged: bool
    degenerate: bool


def power_iteration(M, power_iters=50, power_tol=1e-6, seed=0, eig_tol=1e-10):
    """Largest singular value of ``M`` by power iteration on M^T M.

    Stops after ``power_iters`` steps or once two successive Rayleigh
    quotients agree to ``power_tol`` relatively.  The result is clamped
    below at ``eig_tol``; an all-zero matrix is reported as degenerate.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.size == 0:
        raise ArgumentError(f"expected a non-empty matrix, got shape {M.shape}")
    if not np.isfinite(M).all():
        raise NumericError("non-finite matrix entry")
    if power_iters < 1:
        raise ArgumentError("power_iters must be >= 1")
    if not M.any():
        return PowerResult(float(eig_tol), 0, True, True)
    x = stream(seed, "power-iteration", M.shape[0], M.shape[1]).standard_normal(M.shape[1])
    x /= np.linalg.norm(x)
    prev = None
    rayleigh = 0.0
    converged = False
    it = 0
    for it in range(1, power_iters + 1):
        z = M.T @ (M @ x)
        rayleigh = float(x @ z)
        nz = np.linalg.norm(z)
        if nz == 0.0:
            break
        x = z / nz
        if prev is not None and abs(rayleigh - prev) <= power_tol * abs(rayleigh):
            converged = True
            break
        prev = rayleigh
    # one more matvec with the final normalized iterate
    sigma = float(np.linalg.norm(M @ x))
    sigma = max(sigma, np.sqrt(max(rayleigh, 0.0)))
    degenerate = sigma <= eig_tol
    return PowerResult(max(sigma, float(eig_tol)), it, converged, degenerate)


def spectral_norm(M, power_iters=50, power_tol=1e-6, seed=0, eig_tol=1e-10):
    return power_iteration(M, power_iters, power_tol, seed, eig_tol).sigma
