"""Integer least-squares ambiguity resolution: LDL^T factorization, integer
decorrelation (Gauss transforms + permutations) and depth-first search with a
shrinking ellipsoid for the best two candidates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_CANDIDATES = 100_000


class SearchOverflow(RuntimeError):
    pass


@dataclass
class IlsProblem:
    float_estimate: np.ndarray  # cycles
    covariance: np.ndarray  # cycles^2

    def __post_init__(self):
        self.float_estimate = np.asarray(self.float_estimate, dtype=float)
        q = np.asarray(self.covariance, dtype=float)
        n = self.float_estimate.size
        if n < 1 or q.shape != (n, n):
            raise ValueError("covariance must be n x n with n >= 1")
        scale = max(np.abs(q).max(), 1e-300)
        if np.abs(q - q.T).max() > 1e-12 * scale:
            raise ValueError("covariance is not symmetric")
        q = 0.5 * (q + q.T)
        np.linalg.cholesky(q)  # raises LinAlgError when not positive-definite
        self.covariance = q


def ldl(q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Factor q = L^T diag(d) L with L unit lower-triangular (elimination from the last row)."""
    n = q.shape[0]
    a = q.astype(float).copy()
    L = np.zeros((n, n))
    d = np.zeros(n)
    for i in range(n - 1, -1, -1):
        d[i] = a[i, i]
        if d[i] <= 0.0:
            raise np.linalg.LinAlgError("matrix is not positive-definite")
        row = a[i, : i + 1] / np.sqrt(d[i])
        for j in range(i):
            a[j, : j + 1] -= row[: j + 1] * row[j]
        L[i, : i + 1] = row / row[i]
    return L, d


def decorrelate(L: np.ndarray, d: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Integer decorrelation of (L, d); returns (L, d, Z) with Z^T Q Z = L^T diag(d) L.

    Only the sub-diagonal entry is size-reduced ahead of each swap test, and the
    whole factor is size-reduced once at the end (the lazy ordering of MLAMBDA).
    Works on Python lists: at n ~ 20 numpy call overhead dominates.
    """
    n = d.size
    Lr = L.tolist()
    dr = d.tolist()
    Zr = np.eye(n).tolist()
    j = n - 2
    while j >= 0:
        _gauss(Lr, Zr, j + 1, j)
        l = Lr[j + 1][j]
        delta = dr[j] + l * l * dr[j + 1]
        if delta < dr[j + 1] * (1.0 - 1e-10):
            eta = dr[j] / delta
            lam = dr[j + 1] * l / delta
            dr[j] = eta * dr[j + 1]
            dr[j + 1] = delta
            rj, rj1 = Lr[j], Lr[j + 1]
            for c in range(j):
                a, b = rj[c], rj1[c]
                rj[c] = b - l * a
                rj1[c] = eta * a + lam * b
            rj1[j] = lam
            for r in range(j + 2, n):
                row = Lr[r]
                row[j], row[j + 1] = row[j + 1], row[j]
            for row in Zr:
                row[j], row[j + 1] = row[j + 1], row[j]
            j = min(j + 1, n - 2)
        else:
            j -= 1
    for j in range(n - 2, -1, -1):
        for i in range(j + 1, n):
            _gauss(Lr, Zr, i, j)
    return np.array(Lr), np.array(dr), np.array(Zr)


def _gauss(L, Z, i, j):
    mu = math.floor(L[i][j] + 0.5)
    if mu != 0:
        for r in range(i, len(L)):
            row = L[r]
            row[j] -= mu * row[i]
        for row in Z:
            row[j] -= mu * row[i]


def search(L: np.ndarray, d: np.ndarray, zhat: np.ndarray, m: int = 2, max_candidates: int = MAX_CANDIDATES):
    """Best `m` integer vectors for sum_i (z_i - zcond_i)^2 / d_i.

    Returns (candidates as an n x m array, squared norms) sorted ascending.
    Raises SearchOverflow when more than `max_candidates` leaves are visited.
    """
    n = d.size
    chi2 = np.inf
    dist = np.zeros(n + 1)  # dist[k] = partial norm of levels > k
    zcond = np.zeros(n)
    z = np.zeros(n)
    step = np.zeros(n)
    # S[k, :] accumulates sum_{j>k} L[j, :] * (z_j - zcond_j)
    S = np.zeros((n + 1, n))
    best: list[tuple[float, np.ndarray]] = []
    visited = 0

    k = n - 1
    zcond[k] = zhat[k]
    z[k] = np.round(zcond[k])
    y = zcond[k] - z[k]
    step[k] = 1.0 if y >= 0 else -1.0
    while True:
        newdist = dist[k + 1] + (z[k] - zcond[k]) ** 2 / d[k]
        if newdist < chi2:
            if k > 0:
                dist[k] = newdist
                S[k, :k] = S[k + 1, :k] + (z[k] - zcond[k]) * L[k, :k]
                k -= 1
                zcond[k] = zhat[k] + S[k + 1, k]
                z[k] = np.round(zcond[k])
                step[k] = 1.0 if zcond[k] - z[k] >= 0 else -1.0
                continue
            visited += 1
            if visited > max_candidates:
                raise SearchOverflow(f"more than {max_candidates} candidates")
            best.append((newdist, z.copy()))
            best.sort(key=lambda c: c[0])
            if len(best) > m:
                best.pop()
            if len(best) == m:
                chi2 = best[-1][0]
            _next(z, step, k)
        else:
            if k == n - 1:
                break
            k += 1
            _next(z, step, k)
    zs = np.array([c[1] for c in best]).T
    return zs, np.array([c[0] for c in best])


def _next(z, step, k):
    # zig-zag around the conditional estimate: +1, -2, +3, ... (or mirrored)
    z[k] += step[k]
    step[k] = -step[k] - np.sign(step[k])


def solve_integer_ambiguities(p: IlsProblem, ratio_threshold: float = 3.0):
    """Returns (fixed integer vector or None, ratio q(second)/q(best))."""
    ahat = p.float_estimate
    L, d = ldl(p.covariance)
    L, d, Z = decorrelate(L, d)
    zhat = Z.T @ ahat
    try:
        zs, norms = search(L, d, zhat, m=2)
    except SearchOverflow:
        return None, 0.0
    afix = np.rint(np.linalg.solve(Z.T, zs)).astype(np.int64)
    if norms[0] > 0:
        ratio = float(norms[1] / norms[0])
    else:
        ratio = np.inf if norms[1] > 0 else 1.0
    fixed = afix[:, 0] if ratio >= ratio_threshold else None
    return fixed, ratio


def best_candidates(p: IlsProblem, m: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Best `m` integer vectors (columns, original space) and their quadratic forms."""
    L, d = ldl(p.covariance)
    L, d, Z = decorrelate(L, d)
    zs, norms = search(L, d, Z.T @ p.float_estimate, m=m)
    return np.rint(np.linalg.solve(Z.T, zs)).astype(np.int64), norms
