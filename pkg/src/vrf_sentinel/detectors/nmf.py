"""Non-negative factorization residual detector.

Factor the matrix as the product of two non-negative matrices of inner
dimension k, minimizing the squared Frobenius reconstruction error by
cyclic coordinate descent on the factor columns (HALS updates). Anomaly
scores are the signed residual `values - reconstruction`: entries the
low-rank model under-predicts rank highest.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import VrfError
from ..modmatrix import ModificationMatrix
from .scoring import ScoreMatrix, _score_matrix

logger = logging.getLogger(__name__)

DEFAULT_K = 5
DEFAULT_TOL = 1e-4     # relative objective change
DEFAULT_MAX_ITER = 200
_EPS = 1e-12


@dataclass(frozen=True)
class NmfResult:
    row_factors: np.ndarray   # (n_rows, k), >= 0
    col_factors: np.ndarray   # (n_cols, k), >= 0
    objective: list[float]    # squared Frobenius error per iteration (index 0 = init)
    converged: bool

    def reconstruction(self) -> np.ndarray:
        return self.row_factors @ self.col_factors.T


def _nndsvd_init(m: np.ndarray, k: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic SVD-based non-negative init; zero entries are filled
    with the matrix mean so no coordinate starts locked at zero."""
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        logger.warning("SVD failed during init; falling back to seeded uniform")
        scale = np.sqrt(max(m.mean(), _EPS) / k)
        return (
            rng.uniform(0.0, 1.0, size=(m.shape[0], k)) * scale,
            rng.uniform(0.0, 1.0, size=(m.shape[1], k)) * scale,
        )
    p = np.zeros((m.shape[0], k))
    q = np.zeros((m.shape[1], k))
    p[:, 0] = np.sqrt(s[0]) * np.abs(u[:, 0])
    q[:, 0] = np.sqrt(s[0]) * np.abs(vt[0, :])
    for t in range(1, k):
        x, y = u[:, t], vt[t, :]
        xp, xn = np.maximum(x, 0), np.maximum(-x, 0)
        yp, yn = np.maximum(y, 0), np.maximum(-y, 0)
        pos = np.linalg.norm(xp) * np.linalg.norm(yp)
        neg = np.linalg.norm(xn) * np.linalg.norm(yn)
        if pos >= neg:
            xs, ys, norm = xp, yp, pos
        else:
            xs, ys, norm = xn, yn, neg
        if norm <= _EPS:
            continue  # degenerate direction; mean fill below covers it
        coef = np.sqrt(s[t] * norm)
        p[:, t] = coef * xs / np.linalg.norm(xs)
        q[:, t] = coef * ys / np.linalg.norm(ys)
    fill = max(float(m.mean()), _EPS)
    p[p <= 0] = fill
    q[q <= 0] = fill
    return p, q


def nmf_factorize(
    values: np.ndarray,
    k: int,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> NmfResult:
    """Coordinate-descent non-negative factorization of a non-negative matrix.

    Each iteration cycles over the k columns of both factors, solving each
    column subproblem exactly with a non-negativity clip, so the objective
    is non-increasing across iterations. Stops when the relative objective
    change falls below `tol` or after `max_iter` iterations.
    """
    m = np.asarray(values, dtype=float)
    if np.any(m < 0):
        raise VrfError("factorization input must be non-negative")
    if k < 1 or k > min(m.shape):
        raise VrfError(f"k must be in [1, {min(m.shape)}], got {k}")

    rng = np.random.default_rng(seed)
    p, q = _nndsvd_init(m, k, rng)

    def objective() -> float:
        diff = m - p @ q.T
        return float(np.sum(diff * diff))

    history = [objective()]
    converged = False
    for _ in range(max_iter):
        # Update columns of p (q fixed): gram and cross products are exact
        # for the whole half-sweep because they only involve q.
        gram_q = q.T @ q
        cross_q = m @ q
        for t in range(k):
            denom = gram_q[t, t]
            if denom <= _EPS:
                continue
            p[:, t] = np.maximum(0.0, p[:, t] + (cross_q[:, t] - p @ gram_q[:, t]) / denom)
        gram_p = p.T @ p
        cross_p = m.T @ p
        for t in range(k):
            denom = gram_p[t, t]
            if denom <= _EPS:
                continue
            q[:, t] = np.maximum(0.0, q[:, t] + (cross_p[:, t] - q @ gram_p[:, t]) / denom)

        history.append(objective())
        prev, curr = history[-2], history[-1]
        if prev - curr <= tol * max(prev, _EPS):
            converged = True
            break

    if not converged:
        logger.warning("factorization did not converge in %d iterations", max_iter)
    return NmfResult(row_factors=p, col_factors=q, objective=history, converged=converged)


def nmf_residual_scores(
    matrix: ModificationMatrix,
    k: int = DEFAULT_K,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> ScoreMatrix:
    """Signed residual scores `values - reconstruction` under a rank-k
    non-negative factorization. k is clamped to min(matrix shape)."""
    if k > min(matrix.shape):
        logger.warning("k=%d exceeds min(shape)=%d; clamping", k, min(matrix.shape))
        k = min(matrix.shape)
    result = nmf_factorize(matrix.values, k=k, seed=seed, tol=tol, max_iter=max_iter)
    scores = matrix.values - result.reconstruction()
    return _score_matrix(
        matrix,
        "nmf",
        scores,
        {
            "k": k,
            "seed": seed,
            "tol": tol,
            "max_iter": max_iter,
            "converged": result.converged,
            "iterations": len(result.objective) - 1,
            "objective": result.objective[-1],
        },
    )
