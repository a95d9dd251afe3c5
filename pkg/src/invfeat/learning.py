"""Linear classifiers on top of feature vectors."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ._seeding import SeedLike, as_generator

__all__ = [
    "RlsModel",
    "one_vs_all",
    "rls_train",
    "rls_path",
    "rls_predict",
    "kernel_rls_train",
    "kernel_rls_predict",
    "nn_classify",
    "nn_classify_batch",
    "bag_of_words",
    "select_lambda",
    "accuracy",
    "DEFAULT_LAMBDA_GRID",
]

log = logging.getLogger(__name__)

DEFAULT_LAMBDA_GRID = (1e-8, 1e-6, 1e-4, 1e-2, 1.0)


@dataclass
class RlsModel:
    W: np.ndarray
    lam: float
    n_features: int
    n_classes: int

    def scores(self, F: np.ndarray) -> np.ndarray:
        F = np.atleast_2d(np.asarray(F, dtype=float))
        if F.shape[1] != self.n_features:
            raise ValueError(f"model expects {self.n_features} features, got {F.shape[1]}")
        return F @ self.W


def one_vs_all(labels: np.ndarray, T: int) -> np.ndarray:
    """``Y[i, t] = +1`` if ``labels[i] == t`` else ``-1``."""
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= T):
        raise ValueError(f"labels must lie in [0, {T})")
    return np.where(labels[:, None] == np.arange(T)[None, :], 1.0, -1.0)


def _spd_solve(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return cho_solve(cho_factor(A, lower=True, check_finite=False), B, check_finite=False)


def rls_train(F: np.ndarray, labels: np.ndarray, T: int, lam: float) -> RlsModel:
    """Minimise ``(1/N)||Y - F W||_F^2 + lam ||W||_F^2`` with +/-1 one-vs-all targets.

    Solves ``(F^T F + N lam I) W = F^T Y`` when ``D <= N`` and the equivalent
    dual system ``W = F^T (F F^T + N lam I)^{-1} Y`` otherwise.
    """
    return rls_path(F, labels, T, [lam])[0]


def rls_path(F: np.ndarray, labels: np.ndarray, T: int, lams: Sequence[float]) -> list[RlsModel]:
    """One model per regularisation value, sharing the Gram computation."""
    F = np.asarray(F, dtype=float)
    if F.ndim != 2 or F.shape[0] < 1:
        raise ValueError("features must be a non-empty (N, D) array")
    if not np.all(np.isfinite(F)):
        raise ValueError("features contain non-finite values")
    for lam in lams:
        if lam <= 0:
            raise ValueError(f"lambda must be positive, got {lam}")
    N, D = F.shape
    Y = one_vs_all(labels, T)
    primal = D <= N
    base = F.T @ F if primal else F @ F.T
    rhs = F.T @ Y if primal else Y
    models = []
    for lam in lams:
        A = base.copy()
        A[np.diag_indices(A.shape[0])] += N * lam
        sol = _spd_solve(A, rhs)
        W = sol if primal else F.T @ sol
        models.append(RlsModel(W, float(lam), D, int(T)))
    return models


def rls_predict(model: RlsModel, F: np.ndarray) -> np.ndarray:
    """Argmax of one-vs-all scores; ties go to the smallest class index."""
    return np.argmax(model.scores(F), axis=1)


def kernel_rls_train(K: np.ndarray, labels: np.ndarray, T: int, lam: float) -> np.ndarray:
    """Dual coefficients for RLS with a precomputed training Gram matrix."""
    K = np.asarray(K, dtype=float)
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    N = K.shape[0]
    A = K.copy()
    A[np.diag_indices(N)] += N * lam
    return _spd_solve(A, one_vs_all(labels, T))


def kernel_rls_predict(K_test_train: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    return np.argmax(np.asarray(K_test_train) @ alpha, axis=1)


def nn_classify_batch(train_F: np.ndarray, train_labels: np.ndarray, queries: np.ndarray,
                      chunk: int = 2048) -> np.ndarray:
    """1-NN in Euclidean distance; ties go to the lowest training index."""
    train_F = np.atleast_2d(np.asarray(train_F, dtype=float))
    if train_F.shape[0] == 0:
        raise ValueError("empty training set")
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    train_labels = np.asarray(train_labels)
    sq = np.einsum("ij,ij->i", train_F, train_F)
    out = np.empty(queries.shape[0], dtype=train_labels.dtype)
    for lo in range(0, queries.shape[0], chunk):
        Q = queries[lo:lo + chunk]
        # ||q||^2 is constant per query and dropped
        dist = sq[None, :] - 2 * Q @ train_F.T
        out[lo:lo + chunk] = train_labels[np.argmin(dist, axis=1)]
    return out


def nn_classify(train_F: np.ndarray, train_labels: np.ndarray, query: np.ndarray):
    train_F = np.atleast_2d(np.asarray(train_F, dtype=float))
    if train_F.shape[0] == 0:
        raise ValueError("empty training set")
    dist = np.linalg.norm(train_F - np.asarray(query, dtype=float)[None, :], axis=1)
    return np.asarray(train_labels)[int(np.argmin(dist))]


def bag_of_words(x: np.ndarray, alphabet: int = 8) -> np.ndarray:
    """Character counts of a one-hot block encoding (any common positive scale)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size % alphabet:
        raise ValueError(f"expected a flat vector of {alphabet}-wide blocks, got shape {x.shape}")
    blocks = x.reshape(-1, alphabet)
    nonzero = blocks != 0
    if not np.all(nonzero.sum(axis=1) == 1):
        raise ValueError("every block must contain exactly one non-zero entry")
    vals = blocks[nonzero]
    if np.any(vals <= 0) or not np.allclose(vals, vals[0]):
        raise ValueError("one-hot entries must share one positive value")
    return np.bincount(np.argmax(nonzero, axis=1), minlength=alphabet).astype(float)


def accuracy(pred: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.asarray(pred) == np.asarray(labels)))


def select_lambda(F: np.ndarray, labels: np.ndarray, grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
                  holdout: float = 0.2, seed: SeedLike = 0, T: int | None = None) -> float:
    """Grid value with the best holdout accuracy; ties favour the larger lambda."""
    grid = sorted(float(g) for g in grid)
    if not grid:
        raise ValueError("lambda grid is empty")
    if len(grid) == 1:
        return grid[0]
    F = np.asarray(F, dtype=float)
    labels = np.asarray(labels)
    T = int(labels.max()) + 1 if T is None else T
    N = F.shape[0]
    perm = as_generator(seed).permutation(N)
    n_hold = int(round(holdout * N))
    hold, fit = perm[:n_hold], perm[n_hold:]
    if n_hold == 0 or len(fit) == 0 or len(np.unique(labels[hold])) < 2:
        mid = grid[len(grid) // 2]
        log.warning("degenerate holdout split; falling back to lambda=%g", mid)
        return mid
    best, best_acc = grid[0], -1.0
    for lam, model in zip(grid, rls_path(F[fit], labels[fit], T, grid)):
        acc = accuracy(rls_predict(model, F[hold]), labels[hold])
        if acc >= best_acc:
            best, best_acc = lam, acc
    return best
