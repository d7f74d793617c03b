"""Scalar-loop kernels compiled with numba.

Every function here has a vectorized twin in ``_vectorized`` with the same
signature. Random draws are always made by the caller (``uniforms``,
``order``) so both backends consume the generator identically.
"""

import numpy as np

from .._jit import njit

IMPROVE_TOL = 1e-12


@njit
def _masked_softmax(row, inv_temp, visited, expv, shifted):
    """Fill ``expv``/``shifted`` for the feasible entries of one decode step.

    Returns ``(z, entropy)`` where ``z = sum(expv)`` over feasible entries and
    ``shifted[j] = row[j] * inv_temp - max``. Infeasible entries get
    ``expv[j] = 0`` and are never read from ``shifted``.
    """
    n = row.shape[0]
    mx = -np.inf
    for j in range(n):
        if not visited[j]:
            v = row[j] * inv_temp
            shifted[j] = v
            if v > mx:
                mx = v
    z = 0.0
    for j in range(n):
        if visited[j]:
            expv[j] = 0.0
        else:
            s = shifted[j] - mx
            shifted[j] = s
            e = np.exp(s)
            expv[j] = e
            z += e
    logz = np.log(z)
    acc = 0.0
    for j in range(n):
        if not visited[j]:
            acc += expv[j] * shifted[j]
    entropy = logz - acc / z
    if entropy < 0.0:
        entropy = 0.0
    return z, entropy


@njit
def sample_tours(theta, inv_temp, start, uniforms):
    n = theta.shape[0]
    n_tours = uniforms.shape[0]
    perms = np.empty((n_tours, n), np.int64)
    log_probs = np.zeros(n_tours)
    entropies = np.zeros((n_tours, n - 1))
    visited = np.zeros(n, np.bool_)
    expv = np.empty(n)
    shifted = np.empty(n)
    for i in range(n_tours):
        visited[:] = False
        cur = start
        visited[cur] = True
        perms[i, 0] = cur
        lp = 0.0
        for t in range(n - 1):
            z, h = _masked_softmax(theta[cur], inv_temp, visited, expv, shifted)
            entropies[i, t] = h
            target = uniforms[i, t] * z
            acc = 0.0
            chosen = -1
            last = -1
            for j in range(n):
                if not visited[j]:
                    last = j
                    acc += expv[j]
                    if acc > target:
                        chosen = j
                        break
            if chosen < 0:
                chosen = last
            lp += shifted[chosen] - np.log(z)
            visited[chosen] = True
            perms[i, t + 1] = chosen
            cur = chosen
        log_probs[i] = lp
    return perms, log_probs, entropies


@njit
def score_tours(theta, inv_temp, perms):
    n = theta.shape[0]
    n_tours = perms.shape[0]
    log_probs = np.zeros(n_tours)
    entropies = np.zeros((n_tours, n - 1))
    visited = np.zeros(n, np.bool_)
    expv = np.empty(n)
    shifted = np.empty(n)
    for i in range(n_tours):
        visited[:] = False
        cur = perms[i, 0]
        visited[cur] = True
        lp = 0.0
        for t in range(n - 1):
            z, h = _masked_softmax(theta[cur], inv_temp, visited, expv, shifted)
            entropies[i, t] = h
            nxt = perms[i, t + 1]
            lp += shifted[nxt] - np.log(z)
            visited[nxt] = True
            cur = nxt
        log_probs[i] = lp
    return log_probs, entropies


@njit
def grad_weighted(theta, inv_temp, perms, weights):
    """Sum over tours of ``weights[i] * d log pi(perms[i]) / d theta``.

    Reduction order is tour-major then step-major, fixed.
    """
    n = theta.shape[0]
    n_tours = perms.shape[0]
    grad = np.zeros((n, n))
    visited = np.zeros(n, np.bool_)
    expv = np.empty(n)
    shifted = np.empty(n)
    for i in range(n_tours):
        w = weights[i] * inv_temp
        visited[:] = False
        cur = perms[i, 0]
        visited[cur] = True
        for t in range(n - 1):
            nxt = perms[i, t + 1]
            if w != 0.0:
                z, _ = _masked_softmax(theta[cur], inv_temp, visited, expv, shifted)
                for j in range(n):
                    if not visited[j]:
                        grad[cur, j] -= w * (expv[j] / z)
                grad[cur, nxt] += w
            visited[nxt] = True
            cur = nxt
    return grad


@njit
def two_opt(dist, perm, max_iters, best_improvement, order):
    """2-opt on a closed tour; returns ``(tour, accepted_moves)``.

    ``order`` is the scan order over first-edge positions ``0..n-2`` for
    first-improvement; best-improvement scans positions ascending and keeps
    the first strict minimum.
    """
    n = perm.shape[0]
    tour = perm.copy()
    moves = 0
    while moves < max_iters:
        bi = -1
        bj = -1
        if best_improvement:
            best_delta = -IMPROVE_TOL
            for i in range(n - 1):
                a = tour[i]
                b = tour[i + 1]
                for j in range(i + 2, n):
                    if i == 0 and j == n - 1:
                        continue
                    c = tour[j]
                    d = tour[(j + 1) % n]
                    delta = dist[a, c] + dist[b, d] - dist[a, b] - dist[c, d]
                    if delta < best_delta:
                        best_delta = delta
                        bi = i
                        bj = j
        else:
            for ii in range(n - 1):
                i = order[ii]
                a = tour[i]
                b = tour[i + 1]
                for j in range(i + 2, n):
                    if i == 0 and j == n - 1:
                        continue
                    c = tour[j]
                    d = tour[(j + 1) % n]
                    delta = dist[a, c] + dist[b, d] - dist[a, b] - dist[c, d]
                    if delta < -IMPROVE_TOL:
                        bi = i
                        bj = j
                        break
                if bi >= 0:
                    break
        if bi < 0:
            break
        lo = bi + 1
        hi = bj
        while lo < hi:
            tmp = tour[lo]
            tour[lo] = tour[hi]
            tour[hi] = tmp
            lo += 1
            hi -= 1
        moves += 1
    return tour, moves


@njit
def held_karp(dist):
    """Exact DP over subsets of nodes ``1..n-1``; tour starts at node 0.

    Returns the optimal permutation (not yet orientation-canonical).
    """
    n = dist.shape[0]
    m = n - 1
    full = (1 << m) - 1
    dp = np.full((1 << m, m), np.inf)
    parent = np.full((1 << m, m), -1, np.int8)
    for j in range(m):
        dp[1 << j, j] = dist[0, j + 1]
    for mask in range(1, full + 1):
        for j in range(m):
            bit = 1 << j
            if not (mask & bit) or mask == bit:
                continue
            prev = mask ^ bit
            best = np.inf
            arg = -1
            for k in range(m):
                if prev & (1 << k):
                    v = dp[prev, k] + dist[k + 1, j + 1]
                    if v < best:
                        best = v
                        arg = k
            dp[mask, j] = best
            parent[mask, j] = arg
    best = np.inf
    last = -1
    for j in range(m):
        v = dp[full, j] + dist[j + 1, 0]
        if v < best:
            best = v
            last = j
    perm = np.empty(n, np.int64)
    perm[0] = 0
    mask = full
    j = last
    for pos in range(n - 1, 0, -1):
        perm[pos] = j + 1
        pj = parent[mask, j]
        mask ^= 1 << j
        j = pj
    return perm


@njit
def exhaustive(dist):
    """Lexicographic enumeration of tours with ``perm[1] < perm[-1]``.

    Strict improvement keeps the lexicographically smallest optimum.
    """
    n = dist.shape[0]
    rest = np.arange(1, n)
    m = n - 1
    best = np.inf
    best_perm = np.empty(n, np.int64)
    while True:
        if rest[0] < rest[m - 1]:
            acc = dist[0, rest[0]]
            for k in range(m - 1):
                acc += dist[rest[k], rest[k + 1]]
            acc += dist[rest[m - 1], 0]
            if acc < best:
                best = acc
                best_perm[0] = 0
                best_perm[1:] = rest
        # next lexicographic permutation
        i = m - 2
        while i >= 0 and rest[i] >= rest[i + 1]:
            i -= 1
        if i < 0:
            break
        j = m - 1
        while rest[j] <= rest[i]:
            j -= 1
        tmp = rest[i]
        rest[i] = rest[j]
        rest[j] = tmp
        lo = i + 1
        hi = m - 1
        while lo < hi:
            tmp = rest[lo]
            rest[lo] = rest[hi]
            rest[hi] = tmp
            lo += 1
            hi -= 1
    return best_perm
