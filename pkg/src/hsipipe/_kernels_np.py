"""Pure-NumPy implementations of the hot kernels.

Mirrors the compiled extension module `hsipipe._kernels`; whichever is
available is selected at import by `hsipipe._backend`. Semantics (tie rules,
iteration order, stopping conditions) are identical between the two.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "numpy"

_TAU = 1e-12


def knn3_indices(features: np.ndarray, k: int) -> np.ndarray:
    """Exact k-nearest rows (self included) in a 3-D feature set.

    Neighbors are ordered, and ties broken, by (squared distance, index).
    Returns int64 indices of shape (n, k).
    """
    f = np.ascontiguousarray(features, dtype=np.float64)
    n = f.shape[0]
    if not (1 <= k <= n):
        raise ValueError(f"k={k} outside [1, {n}]")
    out = np.empty((n, k), dtype=np.int64)
    idx_all = np.arange(n)
    block = max(1, int(4_000_000 // max(n, 1)))
    for start in range(0, n, block):
        stop = min(n, start + block)
        d2 = (f[start:stop, 0:1] - f[None, :, 0]) ** 2
        d2 += (f[start:stop, 1:2] - f[None, :, 1]) ** 2
        d2 += (f[start:stop, 2:3] - f[None, :, 2]) ** 2
        for q in range(stop - start):
            row = d2[q]
            if k == n:
                out[start + q] = np.lexsort((idx_all, row))[:k]
                continue
            part = np.argpartition(row, k - 1)[:k]
            kth = row[part].max()
            cand = np.nonzero(row <= kth)[0]
            order = np.lexsort((cand, row[cand]))
            out[start + q] = cand[order[:k]]
    return out


def smo_solve(Q: np.ndarray, y: np.ndarray, C: float, tol: float, max_updates: int):
    """Sequential minimal optimization on the dual with the maximal violating pair.

    Q is the label-scaled kernel matrix Q_ij = y_i y_j K_ij. Returns
    (alpha, bias, n_updates, kkt_violation); decision values are
    sum_i alpha_i y_i K(x_i, x) + bias.
    """
    Q = np.asarray(Q, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = Q.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)
    updates = 0
    violation = np.inf
    while True:
        neg_yg = -y * grad
        in_up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        in_low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        if not in_up.any() or not in_low.any():
            violation = 0.0
            break
        up_vals = np.where(in_up, neg_yg, -np.inf)
        low_vals = np.where(in_low, neg_yg, np.inf)
        i = int(np.argmax(up_vals))
        j = int(np.argmin(low_vals))
        violation = float(up_vals[i] - low_vals[j])
        if violation <= tol:
            break
        if updates >= max_updates:
            break
        old_i, old_j = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = Q[i, i] + Q[j, j] + 2.0 * Q[i, j]
            if quad <= 0:
                quad = _TAU
            delta = (-grad[i] - grad[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            quad = Q[i, i] + Q[j, j] - 2.0 * Q[i, j]
            if quad <= 0:
                quad = _TAU
            delta = (grad[i] - grad[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = total
            if total > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = total
        grad += Q[:, i] * (alpha[i] - old_i) + Q[:, j] * (alpha[j] - old_j)
        updates += 1

    free = (alpha > 0) & (alpha < C)
    if free.any():
        bias = float(np.mean(-y[free] * grad[free]))
    else:
        neg_yg = -y * grad
        in_up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        in_low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        hi = np.max(np.where(in_up, neg_yg, -np.inf)) if in_up.any() else 0.0
        lo = np.min(np.where(in_low, neg_yg, np.inf)) if in_low.any() else 0.0
        bias = float((hi + lo) / 2.0)
    return alpha, bias, updates, max(violation, 0.0)


def kmeans_assign(points: np.ndarray, centroids: np.ndarray):
    """Nearest-centroid labels (ties to the lowest centroid index) and the
    squared distance to the winning centroid."""
    x = np.asarray(points, dtype=np.float64)
    c = np.asarray(centroids, dtype=np.float64)
    d2 = (
        np.einsum("nd,nd->n", x, x)[:, None]
        - 2.0 * (x @ c.T)
        + np.einsum("kd,kd->k", c, c)[None, :]
    )
    labels = np.argmin(d2, axis=1).astype(np.int64)
    best = d2[np.arange(x.shape[0]), labels]
    return labels, np.maximum(best, 0.0)


def kmeans_assign_cosine(points_unit: np.ndarray, centroids_unit: np.ndarray):
    """Cosine-distance assignment for unit-norm points and centroids."""
    sims = np.asarray(points_unit, dtype=np.float64) @ np.asarray(
        centroids_unit, dtype=np.float64
    ).T
    labels = np.argmax(sims, axis=1).astype(np.int64)
    best = sims[np.arange(sims.shape[0]), labels]
    return labels, np.maximum(1.0 - best, 0.0)


def tsne_grad(P: np.ndarray, Y: np.ndarray, exaggeration: float = 1.0):
    """Gradient of KL(exaggeration*P || Q) for a 1-D Student-t embedding.

    The returned KL value is always computed against the *unexaggerated* P,
    so cost traces stay comparable across optimization phases.
    """
    P = np.asarray(P, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    diff = Y[:, None] - Y[None, :]
    num = 1.0 / (1.0 + diff * diff)
    np.fill_diagonal(num, 0.0)
    z = num.sum()
    q = num / z
    grad = 4.0 * np.einsum("ij,ij,ij->i", exaggeration * P - q, num, diff)
    mask = P > 0
    kl = float(np.sum(P[mask] * np.log(P[mask] / np.maximum(q[mask], 1e-300))))
    return grad, kl


def perplexity_betas(d2: np.ndarray, perplexity: float, tol: float, max_iter: int):
    """Per-point Gaussian precision search matching conditional entropy to
    log(perplexity). Returns (row-stochastic conditional P, betas)."""
    d2 = np.asarray(d2, dtype=np.float64)
    n = d2.shape[0]
    target = np.log(perplexity)
    P = np.zeros((n, n), dtype=np.float64)
    betas = np.ones(n, dtype=np.float64)
    others = ~np.eye(n, dtype=bool)
    for i in range(n):
        di = d2[i][others[i]]
        dmin = di.min() if di.size else 0.0
        beta = 1.0
        beta_lo = -np.inf
        beta_hi = np.inf
        row = np.zeros(di.shape)
        for _ in range(max_iter):
            w = np.exp(-beta * (di - dmin))
            s = w.sum()
            row = w / s
            nz = row > 0
            entropy = float(-np.sum(row[nz] * np.log(row[nz])))
            diff = entropy - target
            if abs(diff) < tol:
                break
            if diff > 0:
                beta_lo = beta
                beta = beta * 2.0 if beta_hi == np.inf else (beta + beta_hi) / 2.0
            else:
                beta_hi = beta
                beta = beta / 2.0 if beta_lo == -np.inf else (beta + beta_lo) / 2.0
        P[i][others[i]] = row
        betas[i] = beta
    return P, betas
