"""Small dense linear algebra used by strategy evaluation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SingularMatrixError(ArithmeticError):
    pass


def gauss_solve(a, b, pivot_tol: float = 1e-14) -> np.ndarray:
    """Solve ``a @ x = b`` by Gaussian elimination with partial pivoting."""
    m = np.array(a, dtype=float)
    x = np.array(b, dtype=float)
    n = m.shape[0]
    if m.shape != (n, n) or x.shape != (n,):
        raise ValueError(f"shape mismatch: {m.shape} vs {x.shape}")
    scale = max(1.0, float(np.abs(m).max(initial=0.0)))
    for k in range(n):
        p = k + int(np.argmax(np.abs(m[k:, k])))
        if abs(m[p, k]) <= pivot_tol * scale:
            raise SingularMatrixError(f"pivot {m[p, k]:.3g} in column {k}")
        if p != k:
            m[[k, p]] = m[[p, k]]
            x[[k, p]] = x[[p, k]]
        f = m[k + 1:, k] / m[k, k]
        m[k + 1:, k:] -= np.outer(f, m[k, k:])
        x[k + 1:] -= f * x[k]
    for k in range(n - 1, -1, -1):
        x[k] = (x[k] - m[k, k + 1:] @ x[k + 1:]) / m[k, k]
    return x


@dataclass(frozen=True)
class RadiusEstimate:
    value: float
    lower: float
    upper: float
    rounds: int


def spectral_radius(b, rounds: int = 200, tol: float = 1e-12) -> RadiusEstimate:
    """Estimate the spectral radius of a non-negative square matrix.

    Power iteration runs on ``B + I``, which has the same Perron vector, radius
    shifted by one, and no periodicity. Collatz-Wielandt ratios give the bracket.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if n == 0:
        return RadiusEstimate(0.0, 0.0, 0.0, 0)
    m = b + np.eye(n)
    v = np.ones(n) / n
    lo, hi = 0.0, float(m.sum(axis=1).max())
    k = 0
    for k in range(1, rounds + 1):
        w = m @ v
        pos = v > 0
        ratios = w[pos] / v[pos]
        if np.all(pos):
            lo = max(lo, float(ratios.min()))
        hi = min(hi, float(ratios.max()))
        v = w / w.sum()
        if hi - lo < tol:
            break
    est = float((m @ v).sum() / v.sum())
    est = min(max(est, lo), hi)
    return RadiusEstimate(est - 1.0, max(lo - 1.0, 0.0), hi - 1.0, k)
