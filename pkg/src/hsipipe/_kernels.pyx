# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels.

Mirrors hsipipe._kernels_np: exact 3-D KNN (grid-accelerated), the SMO inner
loop, k-means assignment, the 1-D embedding gradient, and the per-point
bandwidth bisection. Tie rules and stopping conditions match the NumPy
fallback exactly.
"""

import numpy as np

from libc.math cimport INFINITY, exp, log
from libc.stdlib cimport free, malloc

BACKEND_NAME = "compiled"

cdef double _TAU = 1e-12


# ---------------------------------------------------------------------------
# exact 3-D k-nearest neighbors over a uniform grid
# ---------------------------------------------------------------------------

cdef inline bint _entry_worse(double da, long ia, double db, long ib) noexcept nogil:
    """(da, ia) sorts after (db, ib) in (distance, index) order."""
    if da != db:
        return da > db
    return ia > ib


cdef inline void _heap_sift_down(double* hd, long* hi, long size, long pos) noexcept nogil:
    cdef long child
    cdef double d
    cdef long i
    while True:
        child = 2 * pos + 1
        if child >= size:
            return
        if child + 1 < size and _entry_worse(hd[child + 1], hi[child + 1], hd[child], hi[child]):
            child += 1
        if _entry_worse(hd[child], hi[child], hd[pos], hi[pos]):
            d = hd[pos]; i = hi[pos]
            hd[pos] = hd[child]; hi[pos] = hi[child]
            hd[child] = d; hi[child] = i
            pos = child
        else:
            return


cdef inline void _heap_sift_up(double* hd, long* hi, long pos) noexcept nogil:
    cdef long parent
    cdef double d
    cdef long i
    while pos > 0:
        parent = (pos - 1) // 2
        if _entry_worse(hd[pos], hi[pos], hd[parent], hi[parent]):
            d = hd[pos]; i = hi[pos]
            hd[pos] = hd[parent]; hi[pos] = hi[parent]
            hd[parent] = d; hi[parent] = i
            pos = parent
        else:
            return


def knn3_indices(features, long k):
    """Exact k nearest rows (self included); ties by (squared distance, index)."""
    f_arr = np.ascontiguousarray(features, dtype=np.float64)
    cdef double[:, ::1] f = f_arr
    cdef long n = f.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k={k} outside [1, {n}]")

    cdef long a, i, j, q
    cdef double mins[3]
    cdef double maxs[3]
    cdef double side[3]
    cdef long g[3]
    cdef double v, span
    for a in range(3):
        mins[a] = INFINITY
        maxs[a] = -INFINITY
    for i in range(n):
        for a in range(3):
            v = f[i, a]
            if v < mins[a]:
                mins[a] = v
            if v > maxs[a]:
                maxs[a] = v

    cdef long gtarget = <long> ((n / 4.0) ** (1.0 / 3.0))
    if gtarget < 1:
        gtarget = 1
    if gtarget > 96:
        gtarget = 96
    cdef double side_min_active = INFINITY
    for a in range(3):
        span = maxs[a] - mins[a]
        if span > 0.0:
            g[a] = gtarget
            side[a] = span / g[a]
            if side[a] < side_min_active:
                side_min_active = side[a]
        else:
            g[a] = 1
            side[a] = 1.0

    cdef long ncells = g[0] * g[1] * g[2]
    counts_arr = np.zeros(ncells + 1, dtype=np.int64)
    cell_of_arr = np.empty(n, dtype=np.int64)
    cdef long[::1] counts = counts_arr
    cdef long[::1] cell_of = cell_of_arr
    cdef long c0, c1, c2, cell
    for i in range(n):
        c0 = <long> ((f[i, 0] - mins[0]) / side[0]) if g[0] > 1 else 0
        c1 = <long> ((f[i, 1] - mins[1]) / side[1]) if g[1] > 1 else 0
        c2 = <long> ((f[i, 2] - mins[2]) / side[2]) if g[2] > 1 else 0
        if c0 >= g[0]: c0 = g[0] - 1
        if c1 >= g[1]: c1 = g[1] - 1
        if c2 >= g[2]: c2 = g[2] - 1
        cell = (c0 * g[1] + c1) * g[2] + c2
        cell_of[i] = cell
        counts[cell + 1] += 1
    for cell in range(ncells):
        counts[cell + 1] += counts[cell]
    bucket_arr = np.empty(n, dtype=np.int64)
    fill_arr = counts_arr[0:ncells].copy()
    cdef long[::1] bucket = bucket_arr
    cdef long[::1] fill = fill_arr
    for i in range(n):  # ascending i keeps buckets index-sorted
        cell = cell_of[i]
        bucket[fill[cell]] = i
        fill[cell] += 1

    out_arr = np.empty((n, k), dtype=np.int64)
    cdef long[:, ::1] out = out_arr
    cdef double* hd = <double*> malloc(k * sizeof(double))
    cdef long* hi = <long*> malloc(k * sizeof(long))
    if hd == NULL or hi == NULL:
        free(hd); free(hi)
        raise MemoryError()

    cdef long heap_size, r, rmax, d0, d1, d2, e0, e1, e2, p, start, stop
    cdef long qc0, qc1, qc2, t
    cdef double dx, dy, dz, d2val, bound
    cdef bint done
    with nogil:
        for q in range(n):
            qc0 = <long> ((f[q, 0] - mins[0]) / side[0]) if g[0] > 1 else 0
            qc1 = <long> ((f[q, 1] - mins[1]) / side[1]) if g[1] > 1 else 0
            qc2 = <long> ((f[q, 2] - mins[2]) / side[2]) if g[2] > 1 else 0
            if qc0 >= g[0]: qc0 = g[0] - 1
            if qc1 >= g[1]: qc1 = g[1] - 1
            if qc2 >= g[2]: qc2 = g[2] - 1
            rmax = 0
            if qc0 > rmax: rmax = qc0
            if g[0] - 1 - qc0 > rmax: rmax = g[0] - 1 - qc0
            if qc1 > rmax: rmax = qc1
            if g[1] - 1 - qc1 > rmax: rmax = g[1] - 1 - qc1
            if qc2 > rmax: rmax = qc2
            if g[2] - 1 - qc2 > rmax: rmax = g[2] - 1 - qc2

            heap_size = 0
            done = False
            for r in range(rmax + 1):
                if done:
                    break
                for d0 in range(-r, r + 1):
                    e0 = qc0 + d0
                    if e0 < 0 or e0 >= g[0]:
                        continue
                    for d1 in range(-r, r + 1):
                        e1 = qc1 + d1
                        if e1 < 0 or e1 >= g[1]:
                            continue
                        for d2 in range(-r, r + 1):
                            # surface cells of the Chebyshev ring only
                            if not (d0 == r or d0 == -r or d1 == r or d1 == -r
                                    or d2 == r or d2 == -r):
                                continue
                            e2 = qc2 + d2
                            if e2 < 0 or e2 >= g[2]:
                                continue
                            cell = (e0 * g[1] + e1) * g[2] + e2
                            start = counts[cell]
                            stop = counts[cell + 1]
                            for t in range(start, stop):
                                p = bucket[t]
                                dx = f[q, 0] - f[p, 0]
                                d2val = dx * dx
                                dy = f[q, 1] - f[p, 1]
                                d2val += dy * dy
                                dz = f[q, 2] - f[p, 2]
                                d2val += dz * dz
                                if heap_size < k:
                                    hd[heap_size] = d2val
                                    hi[heap_size] = p
                                    _heap_sift_up(hd, hi, heap_size)
                                    heap_size += 1
                                elif _entry_worse(hd[0], hi[0], d2val, p):
                                    hd[0] = d2val
                                    hi[0] = p
                                    _heap_sift_down(hd, hi, k, 0)
                if heap_size == k and side_min_active != INFINITY:
                    bound = r * side_min_active  # ring r+1 is at least this far
                    if bound * bound > hd[0]:
                        done = True

            # pop max repeatedly -> ascending (distance, index) order
            for t in range(heap_size - 1, -1, -1):
                out[q, t] = hi[0]
                heap_size -= 1
                hd[0] = hd[heap_size]
                hi[0] = hi[heap_size]
                if heap_size > 1:
                    _heap_sift_down(hd, hi, heap_size, 0)
    free(hd)
    free(hi)
    return out_arr


# ---------------------------------------------------------------------------
# SMO with maximal-violating-pair selection (ties to the lowest index)
# ---------------------------------------------------------------------------

def smo_solve(Q, y, double C, double tol, long max_updates):
    Q_arr = np.ascontiguousarray(Q, dtype=np.float64)
    y_arr = np.ascontiguousarray(y, dtype=np.float64)
    cdef double[:, ::1] q = Q_arr
    cdef double[::1] yv = y_arr
    cdef long n = q.shape[0]
    alpha_arr = np.zeros(n, dtype=np.float64)
    grad_arr = -np.ones(n, dtype=np.float64)
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] grad = grad_arr

    cdef long updates = 0
    cdef long i, j, t
    cdef double m_val, M_val, val, violation
    cdef double quad, delta, diff, total, old_i, old_j, d_i, d_j
    cdef bint has_up, has_low

    violation = INFINITY
    with nogil:
        while True:
            m_val = -INFINITY
            M_val = INFINITY
            i = -1
            j = -1
            has_up = False
            has_low = False
            for t in range(n):
                val = -yv[t] * grad[t]
                if (yv[t] > 0 and alpha[t] < C) or (yv[t] < 0 and alpha[t] > 0):
                    has_up = True
                    if val > m_val:
                        m_val = val
                        i = t
                if (yv[t] < 0 and alpha[t] < C) or (yv[t] > 0 and alpha[t] > 0):
                    has_low = True
                    if val < M_val:
                        M_val = val
                        j = t
            if not has_up or not has_low:
                violation = 0.0
                break
            violation = m_val - M_val
            if violation <= tol:
                break
            if updates >= max_updates:
                break
            old_i = alpha[i]
            old_j = alpha[j]
            if yv[i] != yv[j]:
                quad = q[i, i] + q[j, j] + 2.0 * q[i, j]
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
                quad = q[i, i] + q[j, j] - 2.0 * q[i, j]
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
            d_i = alpha[i] - old_i
            d_j = alpha[j] - old_j
            for t in range(n):
                grad[t] += q[t, i] * d_i + q[t, j] * d_j
            updates += 1

    cdef long free_count = 0
    cdef double bias = 0.0
    cdef double hi_b, lo_b
    for t in range(n):
        if 0.0 < alpha[t] < C:
            bias += -yv[t] * grad[t]
            free_count += 1
    if free_count > 0:
        bias /= free_count
    else:
        hi_b = -INFINITY
        lo_b = INFINITY
        for t in range(n):
            val = -yv[t] * grad[t]
            if (yv[t] > 0 and alpha[t] < C) or (yv[t] < 0 and alpha[t] > 0):
                if val > hi_b:
                    hi_b = val
            if (yv[t] < 0 and alpha[t] < C) or (yv[t] > 0 and alpha[t] > 0):
                if val < lo_b:
                    lo_b = val
        if hi_b == -INFINITY:
            hi_b = 0.0
        if lo_b == INFINITY:
            lo_b = 0.0
        bias = (hi_b + lo_b) / 2.0
    if violation < 0.0:
        violation = 0.0
    return alpha_arr, bias, updates, violation


# ---------------------------------------------------------------------------
# k-means assignment
# ---------------------------------------------------------------------------

def kmeans_assign(points, centroids):
    x_arr = np.ascontiguousarray(points, dtype=np.float64)
    c_arr = np.ascontiguousarray(centroids, dtype=np.float64)
    cdef double[:, ::1] x = x_arr
    cdef double[:, ::1] c = c_arr
    cdef long n = x.shape[0]
    cdef long k = c.shape[0]
    cdef long d = x.shape[1]
    labels_arr = np.empty(n, dtype=np.int64)
    best_arr = np.empty(n, dtype=np.float64)
    cdef long[::1] labels = labels_arr
    cdef double[::1] best = best_arr
    cdef long i, j, a
    cdef double acc, diff, b
    cdef long bj
    with nogil:
        for i in range(n):
            b = INFINITY
            bj = 0
            for j in range(k):
                acc = 0.0
                for a in range(d):
                    diff = x[i, a] - c[j, a]
                    acc += diff * diff
                if acc < b:
                    b = acc
                    bj = j
            labels[i] = bj
            best[i] = b if b > 0.0 else 0.0
    return labels_arr, best_arr


def kmeans_assign_cosine(points_unit, centroids_unit):
    x_arr = np.ascontiguousarray(points_unit, dtype=np.float64)
    c_arr = np.ascontiguousarray(centroids_unit, dtype=np.float64)
    cdef double[:, ::1] x = x_arr
    cdef double[:, ::1] c = c_arr
    cdef long n = x.shape[0]
    cdef long k = c.shape[0]
    cdef long d = x.shape[1]
    labels_arr = np.empty(n, dtype=np.int64)
    best_arr = np.empty(n, dtype=np.float64)
    cdef long[::1] labels = labels_arr
    cdef double[::1] best = best_arr
    cdef long i, j, a
    cdef double acc, b, dist
    cdef long bj
    with nogil:
        for i in range(n):
            b = -INFINITY
            bj = 0
            for j in range(k):
                acc = 0.0
                for a in range(d):
                    acc += x[i, a] * c[j, a]
                if acc > b:
                    b = acc
                    bj = j
            labels[i] = bj
            dist = 1.0 - b
            best[i] = dist if dist > 0.0 else 0.0
    return labels_arr, best_arr


# ---------------------------------------------------------------------------
# 1-D t-SNE gradient + KL cost
# ---------------------------------------------------------------------------

def tsne_grad(P, Y, double exaggeration=1.0):
    P_arr = np.ascontiguousarray(P, dtype=np.float64)
    y_arr = np.ascontiguousarray(Y, dtype=np.float64)
    cdef double[:, ::1] p = P_arr
    cdef double[::1] y = y_arr
    cdef long n = p.shape[0]
    grad_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] grad = grad_arr
    cdef long i, j
    cdef double diff, num, z, qij, kl, acc
    z = 0.0
    with nogil:
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                diff = y[i] - y[j]
                z += 1.0 / (1.0 + diff * diff)
        kl = 0.0
        for i in range(n):
            acc = 0.0
            for j in range(n):
                if i == j:
                    continue
                diff = y[i] - y[j]
                num = 1.0 / (1.0 + diff * diff)
                qij = num / z
                acc += (exaggeration * p[i, j] - qij) * num * diff
                if p[i, j] > 0.0:
                    qij = qij if qij > 1e-300 else 1e-300
                    kl += p[i, j] * log(p[i, j] / qij)
            grad[i] = 4.0 * acc
    return grad_arr, kl


# ---------------------------------------------------------------------------
# per-point bandwidth bisection
# ---------------------------------------------------------------------------

def perplexity_betas(d2, double perplexity, double tol, long max_iter):
    d2_arr = np.ascontiguousarray(d2, dtype=np.float64)
    cdef double[:, ::1] dist = d2_arr
    cdef long n = dist.shape[0]
    P_arr = np.zeros((n, n), dtype=np.float64)
    betas_arr = np.ones(n, dtype=np.float64)
    cdef double[:, ::1] P = P_arr
    cdef double[::1] betas = betas_arr
    cdef double target = log(perplexity)
    cdef long i, j, it
    cdef double beta, beta_lo, beta_hi, dmin, s, entropy, diffh, w
    cdef double* row = <double*> malloc(n * sizeof(double))
    if row == NULL:
        raise MemoryError()
    with nogil:
        for i in range(n):
            dmin = INFINITY
            for j in range(n):
                if j != i and dist[i, j] < dmin:
                    dmin = dist[i, j]
            if dmin == INFINITY:
                dmin = 0.0
            beta = 1.0
            beta_lo = -INFINITY
            beta_hi = INFINITY
            for it in range(max_iter):
                s = 0.0
                for j in range(n):
                    if j == i:
                        row[j] = 0.0
                        continue
                    w = exp(-beta * (dist[i, j] - dmin))
                    row[j] = w
                    s += w
                entropy = 0.0
                for j in range(n):
                    if j == i:
                        continue
                    w = row[j] / s
                    row[j] = w
                    if w > 0.0:
                        entropy -= w * log(w)
                diffh = entropy - target
                if diffh < tol and diffh > -tol:
                    break
                if diffh > 0:
                    beta_lo = beta
                    beta = beta * 2.0 if beta_hi == INFINITY else (beta + beta_hi) / 2.0
                else:
                    beta_hi = beta
                    beta = beta / 2.0 if beta_lo == -INFINITY else (beta + beta_lo) / 2.0
            for j in range(n):
                if j != i:
                    P[i, j] = row[j]
            betas[i] = beta
    free(row)
    return P_arr, betas_arr
