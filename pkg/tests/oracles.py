"""Slow, independent reference implementations used as test oracles."""

from __future__ import annotations

import itertools
import math
from collections import deque

import numpy as np


def reference_peg(var_target, check_target, order, var_layer=None, check_layer=None, quota=None):
    """Textbook PEG written with Python sets; ACE ties via exhaustive cycle enumeration.

    ``quota`` (n_var x n_layers) switches on the layered eligibility rule.
    """
    n_var, n_check = len(var_target), len(check_target)
    quota = None if quota is None else [list(map(int, row)) for row in quota]
    var_adj = [[] for _ in range(n_var)]
    chk_adj = [[] for _ in range(n_check)]
    for v in order:
        for _ in range(var_target[v]):
            free = [c for c in range(n_check) if len(chk_adj[c]) < check_target[c] and c not in var_adj[v]]
            if quota is not None:
                budget = [c for c in free if quota[v][check_layer[c]] > 0]
                if budget:
                    free = budget
                else:
                    layers = sorted({check_layer[c] for c in free if check_layer[c] >= var_layer[v]})
                    free = [c for c in free if layers and check_layer[c] == layers[0]]
            if not free:
                continue
            # BFS by depth over checks
            seen = set(var_adj[v])
            level = set(var_adj[v])
            seen_vars = {v}
            while True:
                unreached = [c for c in free if c not in seen]
                if not unreached:
                    cands = [c for c in free if c in level]
                    break
                nxt_vars = {w for c in level for w in chk_adj[c]} - seen_vars
                seen_vars |= nxt_vars
                nxt = {cc for w in nxt_vars for cc in var_adj[w]} - seen
                if not nxt:
                    cands = unreached
                    break
                seen |= nxt
                level = nxt
            aces = {c: brute_ace(var_adj, chk_adj, var_target, v, c) for c in cands}
            best = min(cands, key=lambda c: (len(chk_adj[c]), -aces[c], c))
            var_adj[v].append(best)
            chk_adj[best].append(v)
            if quota is not None:
                row = quota[v]
                ell = check_layer[best] if row[check_layer[best]] > 0 else next(k for k, q in enumerate(row) if q > 0)
                row[ell] -= 1
    return sorted((v, c) for v in range(n_var) for c in var_adj[v])


def brute_ace(var_adj, chk_adj, var_target, v, c):
    """Min ACE over shortest v..c paths (each closes a shortest cycle with edge (v, c)).

    Enumerates every shortest path explicitly instead of propagating minima.
    """
    # BFS distances over the bipartite graph, nodes as ('v', i) / ('c', j)
    start = ("v", v)
    goal = ("c", c)
    dist = {start: 0}
    q = deque([start])
    while q:
        node = q.popleft()
        kind, i = node
        nbrs = [("c", x) for x in var_adj[i]] if kind == "v" else [("v", x) for x in chk_adj[i]]
        for nb in nbrs:
            if nb not in dist:
                dist[nb] = dist[node] + 1
                q.append(nb)
    if goal not in dist:
        return math.inf
    best = math.inf

    def walk(node, path_vars):
        nonlocal best
        if node == goal:
            best = min(best, sum(var_target[w] - 2 for w in path_vars))
            return
        kind, i = node
        nbrs = [("c", x) for x in var_adj[i]] if kind == "v" else [("v", x) for x in chk_adj[i]]
        for nb in nbrs:
            if dist.get(nb) == dist[node] + 1 and dist[nb] <= dist[goal]:
                walk(nb, path_vars + ([nb[1]] if nb[0] == "v" else []))

    walk(start, [v])
    return best


def brute_gf2_rank(H) -> int:
    """Rank as log2 of the size of the row space, by enumerating all row combinations."""
    rows = [int("".join(map(str, r)), 2) if len(r) else 0 for r in np.asarray(H, dtype=int) & 1]
    space = {0}
    for r in rows:
        space |= {x ^ r for x in space}
    return int(round(math.log2(len(space))))


def codewords(H) -> np.ndarray:
    """Every codeword of H, via a null-space basis from plain Python elimination."""
    H = np.asarray(H, dtype=int) & 1
    m, n = H.shape
    rows = [list(r) for r in H]
    pivots = []
    r = 0
    for col in range(n):
        hit = next((i for i in range(r, m) if rows[i][col]), None)
        if hit is None:
            continue
        rows[r], rows[hit] = rows[hit], rows[r]
        for i in range(m):
            if i != r and rows[i][col]:
                rows[i] = [a ^ b for a, b in zip(rows[i], rows[r])]
        pivots.append(col)
        r += 1
    free = [c for c in range(n) if c not in pivots]
    basis = []
    for f in free:
        x = [0] * n
        x[f] = 1
        for i, pc in enumerate(pivots):
            x[pc] = rows[i][f]
        basis.append(x)
    basis = np.array(basis, dtype=np.int64).reshape(len(free), n)
    coeffs = np.array(list(itertools.product((0, 1), repeat=len(free))), dtype=np.int64).reshape(-1, len(free))
    return (coeffs @ basis) % 2


def exact_marginals(H, llr):
    """Posterior LLRs of every bit by summing over all codewords of H."""
    cw = codewords(H)
    n = cw.shape[1]
    # log-likelihood of each codeword up to a constant: -sum(x_i * llr_i)
    logw = -(cw * np.asarray(llr)).sum(axis=1)
    out = np.empty(n)
    for i in range(n):
        a = np.logaddexp.reduce(logw[cw[:, i] == 0]) if np.any(cw[:, i] == 0) else -math.inf
        b = np.logaddexp.reduce(logw[cw[:, i] == 1]) if np.any(cw[:, i] == 1) else -math.inf
        out[i] = a - b
    return out


def ml_decode(H, llr):
    """Maximum-likelihood codeword by exhaustive search over the code."""
    cw = codewords(H)
    return cw[np.argmin((cw * np.asarray(llr)).sum(axis=1))]


def tree_sampling_error(dv, dc, eps, iterations, samples=10**6, seed=0):
    """Error probability of variable messages on an unrolled (dv, dc) tree.

    Population dynamics: message samples are redrawn independently at every
    node of the computation tree, each combined exactly in floating point.
    Iteration ``l`` returns P(v_l < 0) + P(v_l = 0) / 2 with ``u_0 = 0``.
    """
    rng = np.random.default_rng(seed)
    mag = math.log((1 - eps) / eps)
    u = np.zeros(samples)
    out = []
    for _ in range(iterations):
        ch = np.where(rng.random(samples) < eps, -mag, mag)
        v = ch + sum(u[rng.integers(0, samples, samples)] for _ in range(dv - 1))
        out.append(float(np.mean(v < 0) + 0.5 * np.mean(v == 0)))
        t = np.ones(samples)
        for _ in range(dc - 1):
            t = t * np.tanh(v[rng.integers(0, samples, samples)] / 2)
        u = 2 * np.arctanh(np.clip(t, -1 + 1e-16, 1 - 1e-16))
    return out
