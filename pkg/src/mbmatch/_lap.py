"""Numba kernels for the rectangular linear assignment problem.

All solvers assign every row (the smaller side) to a distinct column and
minimise the summed cost. They are shortest augmenting path methods with
dual potentials ``u`` (rows) and ``v`` (columns). Free columns always keep
``v == 0`` and assigned columns have ``v <= 0``, which is what makes the
rectangular duals valid.
"""
import math

import numpy as np
from numba import njit

INF = np.inf


@njit(cache=True, nogil=True)
def _dist(a, b):
    s = 0.0
    for k in range(a.shape[0]):
        t = a[k] - b[k]
        s += t * t
    return np.sqrt(s)


@njit(cache=True, nogil=True)
def dense_ssp(cost):
    """Solve on a dense ``(nr, nc)`` cost matrix, ``nr <= nc``.

    Returns ``(col4row, u, v, ok)``; ``ok`` is False only if some row has no
    finite-cost column left.
    """
    nr, nc = cost.shape
    u = np.zeros(nr)
    v = np.zeros(nc)
    col4row = np.full(nr, -1, np.int64)
    row4col = np.full(nc, -1, np.int64)

    # row reduction: u_i = min_j c_ij keeps v = 0 feasible
    for i in range(nr):
        best = INF
        bj = -1
        for j in range(nc):
            if cost[i, j] < best:
                best = cost[i, j]
                bj = j
        u[i] = best
        if bj >= 0 and row4col[bj] == -1:
            row4col[bj] = i
            col4row[i] = bj

    shortest = np.empty(nc)
    path = np.empty(nc, np.int64)
    scanned = np.zeros(nc, np.bool_)
    remaining = np.empty(nc, np.int64)

    for cur in range(nr):
        if col4row[cur] != -1:
            continue
        for j in range(nc):
            shortest[j] = INF
            scanned[j] = False
            remaining[j] = nc - j - 1
        num_rem = nc
        i = cur
        min_val = 0.0
        sink = -1
        while sink == -1:
            idx = -1
            lowest = INF
            for it in range(num_rem):
                j = remaining[it]
                r = min_val + cost[i, j] - u[i] - v[j]
                if r < shortest[j]:
                    path[j] = i
                    shortest[j] = r
                if shortest[j] < lowest or (shortest[j] == lowest and row4col[j] == -1):
                    lowest = shortest[j]
                    idx = it
            if idx == -1 or lowest == INF:
                return col4row, u, v, False
            min_val = lowest
            j = remaining[idx]
            scanned[j] = True
            num_rem -= 1
            remaining[idx] = remaining[num_rem]
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]

        u[cur] += min_val
        for j in range(nc):
            if scanned[j] and j != sink:
                delta = min_val - shortest[j]
                v[j] -= delta
                u[row4col[j]] += delta

        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            prev = col4row[i]
            col4row[i] = j
            if i == cur:
                break
            j = prev
    return col4row, u, v, True


@njit(cache=True, nogil=True)
def _heap_push(keys, vals, size, key, val):
    pos = size
    keys[pos] = key
    vals[pos] = val
    while pos > 0:
        parent = (pos - 1) >> 1
        if keys[parent] <= keys[pos]:
            break
        keys[parent], keys[pos] = keys[pos], keys[parent]
        vals[parent], vals[pos] = vals[pos], vals[parent]
        pos = parent
    return size + 1


@njit(cache=True, nogil=True)
def _heap_pop(keys, vals, size):
    key = keys[0]
    val = vals[0]
    size -= 1
    keys[0] = keys[size]
    vals[0] = vals[size]
    pos = 0
    while True:
        left = 2 * pos + 1
        if left >= size:
            break
        child = left
        if left + 1 < size and keys[left + 1] < keys[left]:
            child = left + 1
        if keys[pos] <= keys[child]:
            break
        keys[child], keys[pos] = keys[pos], keys[child]
        vals[child], vals[pos] = vals[pos], vals[child]
        pos = child
    return key, val, size


@njit(cache=True, nogil=True)
def row_reduction(nr, nc, indptr, indices, costs):
    """Cold start: ``u_i = min_j c_ij``, ``v = 0``, greedy tight assignment."""
    u = np.zeros(nr)
    v = np.zeros(nc)
    col4row = np.full(nr, -1, np.int64)
    taken = np.zeros(nc, np.bool_)
    for i in range(nr):
        best = INF
        bj = -1
        for e in range(indptr[i], indptr[i + 1]):
            if costs[e] < best:
                best = costs[e]
                bj = indices[e]
        if bj == -1:
            continue
        u[i] = best
        if not taken[bj]:
            taken[bj] = True
            col4row[i] = bj
    return col4row, u, v


@njit(cache=True, nogil=True)
def repair_duals(nr, indptr, indices, costs, col4row, u, v, tol):
    """Lower row potentials until every graph edge has reduced cost >= 0.

    Rows whose matched edge stops being tight are unassigned. Returns the
    number of unassigned rows.
    """
    freed = 0
    for i in range(nr):
        m = INF
        for e in range(indptr[i], indptr[i + 1]):
            r = costs[e] - v[indices[e]]
            if r < m:
                m = r
        if m < u[i]:
            u[i] = m
        j0 = col4row[i]
        if j0 >= 0:
            for e in range(indptr[i], indptr[i + 1]):
                if indices[e] == j0:
                    if costs[e] - u[i] - v[j0] > tol:
                        col4row[i] = -1
                        freed += 1
                    break
        else:
            freed += 1
    return freed


@njit(cache=True, nogil=True)
def sparse_ssp(nr, nc, indptr, indices, costs, col4row, u, v):
    """Augment every free row on a sparse CSR graph, updating the state in
    place. Returns False when some row cannot reach a free column inside the
    graph; the state is then still dual feasible and can be resumed after
    adding edges."""
    row4col = np.full(nc, -1, np.int64)
    for i in range(nr):
        if col4row[i] >= 0:
            row4col[col4row[i]] = i

    nnz = indptr[nr]
    hkeys = np.empty(nnz + 1)
    hvals = np.empty(nnz + 1, np.int64)
    shortest = np.full(nc, INF)
    path = np.empty(nc, np.int64)
    scanned = np.zeros(nc, np.bool_)
    touched = np.empty(nc, np.int64)
    scanlist = np.empty(nc, np.int64)

    for cur in range(nr):
        if col4row[cur] != -1:
            continue
        ntouch = 0
        nscan = 0
        hsize = 0
        i = cur
        base = 0.0
        sink = -1
        min_val = 0.0
        while True:
            for e in range(indptr[i], indptr[i + 1]):
                j = indices[e]
                if scanned[j]:
                    continue
                r = base + costs[e] - u[i] - v[j]
                if r < shortest[j]:
                    if shortest[j] == INF:
                        touched[ntouch] = j
                        ntouch += 1
                    shortest[j] = r
                    path[j] = i
                    hsize = _heap_push(hkeys, hvals, hsize, r, j)
            found = -1
            d = 0.0
            while hsize > 0:
                d, j, hsize = _heap_pop(hkeys, hvals, hsize)
                if scanned[j] or d > shortest[j]:
                    continue
                found = j
                break
            if found == -1:
                break
            j = found
            scanned[j] = True
            scanlist[nscan] = j
            nscan += 1
            if row4col[j] == -1:
                sink = j
                min_val = d
                break
            i = row4col[j]
            base = d

        if sink == -1:
            for s in range(ntouch):
                j = touched[s]
                shortest[j] = INF
                scanned[j] = False
            return False

        u[cur] += min_val
        for s in range(nscan):
            j = scanlist[s]
            if j != sink:
                delta = min_val - shortest[j]
                v[j] -= delta
                u[row4col[j]] += delta

        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            prev = col4row[i]
            col4row[i] = j
            if i == cur:
                break
            j = prev

        for s in range(ntouch):
            j = touched[s]
            shortest[j] = INF
            scanned[j] = False
    return True


@njit(cache=True, nogil=True)
def _knn_into(a, b, k, out):
    """For every point of ``a`` write its ``k`` nearest points of ``b``.

    Candidates are first cut by a radius sized for ~2k uniform points and
    doubled until it holds k of them, so the selection stays cheap; the
    result is exact for any input.
    """
    na, dim = a.shape
    nb = b.shape[0]
    bt = np.ascontiguousarray(b.T)
    buf = np.empty(nb)
    cidx = np.empty(nb, np.int64)
    ball = math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)
    r2_0 = (2.0 * k / nb / ball) ** (2.0 / dim)
    bd = np.empty(k)
    bi = np.empty(k, np.int64)
    for i in range(na):
        buf[:] = 0.0
        for t in range(dim):
            at = a[i, t]
            col = bt[t]
            for j in range(nb):
                w = at - col[j]
                buf[j] += w * w
        r2 = r2_0
        while True:
            c = 0
            for j in range(nb):
                if buf[j] <= r2:
                    cidx[c] = j
                    c += 1
            if c >= k:
                break
            r2 *= 4.0
        cnt = 0
        for s in range(c):
            j = cidx[s]
            dj = buf[j]
            if cnt < k:
                pos = cnt
                cnt += 1
            elif dj < bd[k - 1]:
                pos = k - 1
            else:
                continue
            while pos > 0 and bd[pos - 1] > dj:
                bd[pos] = bd[pos - 1]
                bi[pos] = bi[pos - 1]
                pos -= 1
            bd[pos] = dj
            bi[pos] = j
        for t in range(k):
            out[i, t] = bi[t]


@njit(cache=True, nogil=True)
def knn_edges(x, y, k):
    """Edge list joining each ``x`` to its k nearest ``y`` and each ``y`` to
    its k nearest ``x``. Duplicates are left in."""
    nr = x.shape[0]
    nc = y.shape[0]
    kr = min(k, nc)
    kc = min(k, nr)
    row_nn = np.empty((nr, kr), np.int64)
    col_nn = np.empty((nc, kc), np.int64)
    _knn_into(x, y, kr, row_nn)
    _knn_into(y, x, kc, col_nn)
    ei = np.empty(nr * kr + nc * kc, np.int64)
    ej = np.empty(nr * kr + nc * kc, np.int64)
    w = 0
    for i in range(nr):
        for t in range(kr):
            ei[w] = i
            ej[w] = row_nn[i, t]
            w += 1
    for j in range(nc):
        for t in range(kc):
            ei[w] = col_nn[j, t]
            ej[w] = j
            w += 1
    return ei, ej


@njit(cache=True, nogil=True)
def build_csr(x, y, ei, ej):
    """Deduplicated CSR graph over the given edges with Euclidean costs."""
    nr = x.shape[0]
    nc = y.shape[0]
    deg = np.zeros(nr, np.int64)
    for e in range(ei.shape[0]):
        deg[ei[e]] += 1
    indptr = np.zeros(nr + 1, np.int64)
    for i in range(nr):
        indptr[i + 1] = indptr[i] + deg[i]
    fill = indptr[:-1].copy()
    raw = np.empty(indptr[nr], np.int64)
    for e in range(ei.shape[0]):
        i = ei[e]
        raw[fill[i]] = ej[e]
        fill[i] += 1
    stamp = np.full(nc, -1, np.int64)
    out_ptr = np.zeros(nr + 1, np.int64)
    out_idx = np.empty(indptr[nr], np.int64)
    out_cost = np.empty(indptr[nr])
    w = 0
    for i in range(nr):
        for e in range(indptr[i], indptr[i + 1]):
            j = raw[e]
            if stamp[j] == i:
                continue
            stamp[j] = i
            out_idx[w] = j
            out_cost[w] = _dist(x[i], y[j])
            w += 1
        out_ptr[i + 1] = w
    return out_ptr, out_idx[:w], out_cost[:w]


@njit(cache=True, nogil=True)
def dual_violations(x, y, u, v, tol, cap):
    """Pairs whose reduced cost ``|x_i - y_j| - u_i - v_j`` is below ``-tol``.

    Compares squared lengths, so no square roots are taken. Returns at most
    ``cap`` pairs and the total violation count.
    """
    nr, dim = x.shape
    nc = y.shape[0]
    yt = np.ascontiguousarray(y.T)
    vi = np.empty(cap, np.int64)
    vj = np.empty(cap, np.int64)
    buf = np.empty(nc)
    count = 0
    m = 0
    vmax = v.max()
    for i in range(nr):
        ui = u[i] - tol
        if ui + vmax <= 0.0:
            continue
        buf[:] = 0.0
        for t in range(dim):
            xt = x[i, t]
            col = yt[t]
            for j in range(nc):
                w = xt - col[j]
                buf[j] += w * w
        c = 0
        for j in range(nc):
            w = ui + v[j]
            c += (w > 0.0) & (buf[j] < w * w)
        if c == 0:
            continue
        count += c
        for j in range(nc):
            w = ui + v[j]
            if w > 0.0 and buf[j] < w * w and m < cap:
                vi[m] = i
                vj[m] = j
                m += 1
    return vi[:m], vj[:m], count


@njit(cache=True, nogil=True)
def distance_matrix(x, y):
    nr = x.shape[0]
    nc = y.shape[0]
    out = np.empty((nr, nc))
    for i in range(nr):
        for j in range(nc):
            out[i, j] = _dist(x[i], y[j])
    return out
