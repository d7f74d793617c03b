"""Pure-numpy kernels, vectorized over tours (or over moves for 2-opt).

Signatures and tie-breaking rules mirror ``_loops`` exactly; results agree
with the numba path up to last-ulp differences in ``exp``/``log``.
"""

import itertools

import numpy as np

IMPROVE_TOL = 1e-12


def _step(theta, inv_temp, cur, visited):
    """Masked softmax for a batch of current nodes.

    Returns ``(expv, shifted, z, entropy)``; ``expv`` is zero on visited
    entries, ``z`` is the sequential (cumsum) total so that inverse-CDF
    sampling reproduces the scalar loop.
    """
    logits = theta[cur] * inv_temp
    masked = np.where(visited, -np.inf, logits)
    mx = masked.max(axis=1, keepdims=True)
    shifted = np.where(visited, 0.0, logits - mx)
    expv = np.where(visited, 0.0, np.exp(shifted))
    csum = np.cumsum(expv, axis=1)
    z = csum[:, -1]
    ent = np.log(z) - (expv * shifted).sum(axis=1) / z
    return expv, shifted, csum, z, np.maximum(ent, 0.0)


def sample_tours(theta, inv_temp, start, uniforms):
    n = theta.shape[0]
    n_tours = uniforms.shape[0]
    rows = np.arange(n_tours)
    perms = np.empty((n_tours, n), np.int64)
    log_probs = np.zeros(n_tours)
    entropies = np.zeros((n_tours, n - 1))
    visited = np.zeros((n_tours, n), bool)
    cur = np.full(n_tours, start, np.int64)
    visited[rows, cur] = True
    perms[:, 0] = cur
    for t in range(n - 1):
        expv, shifted, csum, z, ent = _step(theta, inv_temp, cur, visited)
        entropies[:, t] = ent
        target = uniforms[:, t] * z
        hit = (csum > target[:, None]) & ~visited
        # rounding fallback: last feasible node
        last = n - 1 - np.argmax(~visited[:, ::-1], axis=1)
        chosen = np.where(hit.any(axis=1), np.argmax(hit, axis=1), last)
        log_probs += shifted[rows, chosen] - np.log(z)
        visited[rows, chosen] = True
        perms[:, t + 1] = chosen
        cur = chosen
    return perms, log_probs, entropies


def score_tours(theta, inv_temp, perms):
    n = theta.shape[0]
    n_tours = perms.shape[0]
    rows = np.arange(n_tours)
    log_probs = np.zeros(n_tours)
    entropies = np.zeros((n_tours, n - 1))
    visited = np.zeros((n_tours, n), bool)
    cur = perms[:, 0].astype(np.int64)
    visited[rows, cur] = True
    for t in range(n - 1):
        _, shifted, _, z, ent = _step(theta, inv_temp, cur, visited)
        entropies[:, t] = ent
        nxt = perms[:, t + 1]
        log_probs += shifted[rows, nxt] - np.log(z)
        visited[rows, nxt] = True
        cur = nxt
    return log_probs, entropies


def grad_weighted(theta, inv_temp, perms, weights):
    n = theta.shape[0]
    n_tours = perms.shape[0]
    rows = np.arange(n_tours)
    grad = np.zeros((n, n))
    visited = np.zeros((n_tours, n), bool)
    cur = perms[:, 0].astype(np.int64)
    visited[rows, cur] = True
    w = (weights * inv_temp)[:, None]
    for t in range(n - 1):
        expv, _, _, z, _ = _step(theta, inv_temp, cur, visited)
        nxt = perms[:, t + 1]
        contrib = -w * (expv / z[:, None])
        contrib[rows, nxt] += w[:, 0]
        np.add.at(grad, cur, contrib)
        visited[rows, nxt] = True
        cur = nxt
    return grad


def _deltas(dist, tour):
    n = tour.shape[0]
    a = tour[:-1]
    b = tour[1:]
    c = tour
    d = np.roll(tour, -1)
    delta = dist[a[:, None], c[None, :]] + dist[b[:, None], d[None, :]] - dist[a, b][:, None] - dist[c, d][None, :]
    i = np.arange(n - 1)[:, None]
    j = np.arange(n)[None, :]
    valid = (j >= i + 2) & ~((i == 0) & (j == n - 1))
    return np.where(valid, delta, np.inf)


def two_opt(dist, perm, max_iters, best_improvement, order):
    tour = np.array(perm, dtype=np.int64, copy=True)
    moves = 0
    while moves < max_iters:
        delta = _deltas(dist, tour)
        if best_improvement:
            flat = int(np.argmin(delta))
            i, j = divmod(flat, delta.shape[1])
            if not delta[i, j] < -IMPROVE_TOL:
                break
        else:
            improving = delta[order] < -IMPROVE_TOL
            rows = np.flatnonzero(improving.any(axis=1))
            if rows.size == 0:
                break
            i = int(order[rows[0]])
            j = int(np.argmax(improving[rows[0]]))
        tour[i + 1 : j + 1] = tour[i + 1 : j + 1][::-1]
        moves += 1
    return tour, moves


def held_karp(dist):
    n = dist.shape[0]
    m = n - 1
    full = (1 << m) - 1
    sub = dist[1:, 1:]
    dp = np.full((1 << m, m), np.inf)
    parent = np.full((1 << m, m), -1, np.int8)
    idx = np.arange(m)
    bits = 1 << idx
    dp[bits, idx] = dist[0, 1:]
    for mask in range(1, full + 1):
        members = idx[(mask & bits) != 0]
        if members.size < 2:
            continue
        prevs = mask ^ bits[members]
        # cand[r, k] = dp[prev_r, k] + dist[k, member_r], inf where k not in prev
        cand = dp[prevs] + sub[:, members].T
        arg = np.argmin(cand, axis=1)
        dp[mask, members] = cand[np.arange(members.size), arg]
        parent[mask, members] = arg
    last = int(np.argmin(dp[full] + dist[1:, 0]))
    perm = np.empty(n, np.int64)
    perm[0] = 0
    mask = full
    j = last
    for pos in range(n - 1, 0, -1):
        perm[pos] = j + 1
        pj = parent[mask, j]
        mask ^= 1 << j
        j = int(pj)
    return perm


def exhaustive(dist):
    n = dist.shape[0]
    rest = np.array(list(itertools.permutations(range(1, n))), dtype=np.int64)
    rest = rest[rest[:, 0] < rest[:, -1]]
    acc = dist[0, rest[:, 0]].copy()
    for k in range(n - 2):
        acc += dist[rest[:, k], rest[:, k + 1]]
    acc += dist[rest[:, -1], 0]
    best = int(np.argmin(acc))
    return np.concatenate(([0], rest[best]))
