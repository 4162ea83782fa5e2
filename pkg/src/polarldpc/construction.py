"""PEG / IPEG Tanner graph construction with the polarized ordering.

In polarized mode variable nodes are processed in non-increasing degree
order (top layer first).  The plan splits each variable's edges into
per-layer quotas by water-filling the integer socket counts top-down, so
the realized graph follows the cross polynomials of the ensemble and no
variable connects above its own layer.  Each edge may go to any layer where
the variable still has quota; among those checks the usual PEG rule
applies: maximal distance from the variable in the current graph, then
lowest current degree, then the largest approximate cycle EMD (ACE), then
the lowest index.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from .ensemble import DegreeDistribution, LayeredEnsemble, build_layers, design_rate, node_fractions
from .graph import TannerGraph

log = logging.getLogger(__name__)

MODES = ("polarized", "random-standard")
ACE_NONE = np.iinfo(np.int64).max  # no cycle created


class ConstructionError(RuntimeError):
    """The plan cannot be balanced or the graph cannot be completed."""


@dataclass(frozen=True, eq=False)
class ConstructionPlan:
    """Per-node target degrees and processing order for one construction."""

    n_var: int
    n_check: int
    var_target: np.ndarray
    check_target: np.ndarray
    var_layer: np.ndarray
    check_layer: np.ndarray
    order: np.ndarray
    seed: int = 0
    mode: str = "polarized"
    layer_quota: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if int(self.var_target.sum()) != int(self.check_target.sum()):
            raise ConstructionError("variable and check socket totals differ")
        if sorted(self.order.tolist()) != list(range(self.n_var)):
            raise ValueError("order must be a permutation of the variable nodes")
        if self.layer_quota is None and self.mode == "polarized":
            object.__setattr__(self, "layer_quota", layer_quotas(
                self.var_target, self.var_layer, self.check_target, self.check_layer))
        for arr in (self.var_target, self.check_target, self.var_layer, self.check_layer, self.order):
            arr.setflags(write=False)
        if self.layer_quota is not None:
            self.layer_quota.setflags(write=False)

    @property
    def n_edges(self) -> int:
        return int(self.var_target.sum())

    @property
    def n_layers(self) -> int:
        return int(max(self.var_layer.max(), self.check_layer.max())) + 1


def _largest_remainder(total: int, fractions: Sequence[float]) -> np.ndarray:
    raw = np.asarray(fractions, dtype=float) * total
    counts = np.floor(raw).astype(np.int64)
    short = total - int(counts.sum())
    # ties resolved by class order
    order = sorted(range(len(raw)), key=lambda k: (-(raw[k] - counts[k]), k))
    for k in order[:short]:
        counts[k] += 1
    return counts


def layer_quotas(var_target, var_layer, check_target, check_layer) -> np.ndarray:
    """Per-variable edge budget for every check layer, shape ``(n_var, n_layers)``.

    Variable layers are served top-down; each takes free check sockets from
    its own layer first and spills into the next ones, which is water-filling
    on integer counts.  A layer's share of every check layer is then dealt
    round-robin over its variables (ascending index), so each variable gets a
    proportional split and the quotas sum exactly to its target degree.
    """
    var_target = np.asarray(var_target, dtype=np.int64)
    var_layer = np.asarray(var_layer, dtype=np.int64)
    check_layer = np.asarray(check_layer, dtype=np.int64)
    n_layers = int(max(var_layer.max(initial=0), check_layer.max(initial=0))) + 1
    free = np.bincount(check_layer, weights=np.asarray(check_target), minlength=n_layers).astype(np.int64)
    quota = np.zeros((len(var_target), n_layers), dtype=np.int64)
    for k in range(n_layers):
        members = np.flatnonzero(var_layer == k)
        need = int(var_target[members].sum())
        labels = []
        for ell in range(k, n_layers):
            take = min(need, int(free[ell]))
            labels += [ell] * take
            free[ell] -= take
            need -= take
        if need:
            raise ConstructionError(f"variable layer {k} has {need} sockets with no reachable check")
        pos = 0
        left = var_target[members].copy()
        while pos < len(labels):
            for t, v in enumerate(members):
                if left[t] > 0 and pos < len(labels):
                    quota[v, labels[pos]] += 1
                    left[t] -= 1
                    pos += 1
    return quota


def _balance(var_deg, var_counts, chk_deg, chk_counts, n_check_exact, reach=3):
    """Smallest count adjustment making the socket totals equal.

    Variable nodes may move between classes (their total is fixed); check
    class counts may shift by up to ``reach`` each, the last class being solved
    exactly.  Every class stays non-empty and the check total stays within one
    node of ``n_check_exact``.  Cost is the total number of nodes changed.
    """
    var_deg = np.asarray(var_deg, dtype=np.int64)
    chk_deg = np.asarray(chk_deg, dtype=np.int64)
    span = range(-reach, reach + 1)
    moves = [np.array(m, dtype=np.int64) for m in itertools.product(span, repeat=len(var_deg)) if sum(m) == 0]
    moves.sort(key=lambda m: (int(np.abs(m).sum()), m.tolist()))
    head = np.array(list(itertools.product(span, repeat=len(chk_deg) - 1)), dtype=np.int64).reshape(-1, len(chk_deg) - 1)
    head_counts = chk_counts[:-1] + head
    head_ok = np.all(head_counts >= 1, axis=1)
    head_sockets = head_counts @ chk_deg[:-1]
    head_cost = np.abs(head).sum(axis=1)

    best = None
    for mv in moves:
        move_cost = int(np.abs(mv).sum())
        if best is not None and move_cost >= best[0][0]:
            break
        vc = var_counts + mv
        if np.any(vc < 1):
            continue
        rest = int(vc @ var_deg) - head_sockets
        last = rest // chk_deg[-1]
        ok = head_ok & (rest % chk_deg[-1] == 0) & (last >= 1)
        ok &= np.abs(head_counts.sum(axis=1) + last - n_check_exact) <= 1.0
        for idx in np.flatnonzero(ok):
            cc = np.append(head_counts[idx], last[idx])
            cost = (move_cost + int(head_cost[idx]) + abs(int(last[idx]) - int(chk_counts[-1])),
                    abs(float(cc.sum()) - n_check_exact))
            if best is None or cost < best[0]:
                best = (cost, vc, cc)
    if best is None:
        raise ConstructionError("cannot balance sockets within the allowed degree classes")
    return best[1], best[2]


def plan(ensemble: LayeredEnsemble | DegreeDistribution, n_var: int, seed: int = 0,
         mode: str = "polarized") -> ConstructionPlan:
    """Turn an ensemble into per-node target degrees for ``n_var`` variables.

    A bare degree distribution is layered with :func:`build_layers` first.

    Node counts come from largest-remainder apportionment of the node
    fractions; a small search then moves a few nodes between classes until the
    variable and check socket totals agree.  Nodes are numbered by layer, so
    variable targets are non-increasing and check targets non-decreasing.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if isinstance(ensemble, DegreeDistribution):
        ensemble = build_layers(ensemble)
    dd = ensemble.base
    var_frac, chk_frac = node_fractions(dd)
    var_deg = np.array(ensemble.var_degrees, dtype=np.int64)
    chk_deg = np.array(ensemble.check_degrees, dtype=np.int64)
    vf = np.array([var_frac[d] for d in var_deg])
    cf = np.array([chk_frac[d] for d in chk_deg])
    if np.any(vf * n_var < 0.5):
        raise ConstructionError(f"n_var={n_var} too small: some variable class gets no node")
    n_check_exact = n_var * (1.0 - design_rate(dd))
    n_check = int(round(n_check_exact))
    if np.any(cf * n_check < 0.5):
        raise ConstructionError(f"n_var={n_var} too small: some check class gets no node")
    var_counts = _largest_remainder(n_var, vf)
    chk_counts = _largest_remainder(n_check, cf)
    if int(var_counts @ var_deg) != int(chk_counts @ chk_deg):
        var_counts, chk_counts = _balance(var_deg, var_counts, chk_deg, chk_counts, n_check_exact)
    n_check = int(chk_counts.sum())

    var_target = np.repeat(var_deg, var_counts).astype(np.int32)
    check_target = np.repeat(chk_deg, chk_counts).astype(np.int32)
    var_layer = np.repeat(np.arange(len(var_deg)), var_counts).astype(np.int32)
    check_layer = np.repeat(np.arange(len(chk_deg)), chk_counts).astype(np.int32)
    if mode == "polarized":
        order = np.arange(n_var, dtype=np.int64)
    else:
        order = np.random.default_rng(seed).permutation(n_var).astype(np.int64)
    return ConstructionPlan(n_var, n_check, var_target, check_target, var_layer, check_layer, order, seed, mode)


def plan_from_degrees(var_target, check_target, var_layer=None, check_layer=None,
                      seed: int = 0, mode: str = "polarized", order=None) -> ConstructionPlan:
    """Plan from explicit per-node degree targets."""
    vt = np.asarray(var_target, dtype=np.int32)
    ct = np.asarray(check_target, dtype=np.int32)
    vl = np.zeros(len(vt), dtype=np.int32) if var_layer is None else np.asarray(var_layer, dtype=np.int32)
    cl = np.zeros(len(ct), dtype=np.int32) if check_layer is None else np.asarray(check_layer, dtype=np.int32)
    if order is None:
        order = np.arange(len(vt)) if mode == "polarized" else np.random.default_rng(seed).permutation(len(vt))
    return ConstructionPlan(len(vt), len(ct), vt, ct, vl, cl, np.asarray(order, dtype=np.int64), seed, mode)


# --------------------------------------------------------------------------
# ACE helpers (pure Python; the kernel below mirrors them)
# --------------------------------------------------------------------------

def cycle_ace(var_adj: Sequence[Sequence[int]], check_adj: Sequence[Sequence[int]],
              var_target: Sequence[int], v: int, c: int) -> float:
    """Minimum ACE over the shortest cycles closed by adding edge ``(v, c)``.

    ACE of a cycle is the sum of ``degree - 2`` over its variable nodes
    (target degrees).  Returns ``inf`` when ``c`` is not reachable from ``v``.
    """
    dist_v = {v: 0}
    dist_c: dict[int, int] = {}
    ace_v = {v: var_target[v] - 2}
    ace_c: dict[int, float] = {}
    frontier = [v]
    depth = 0
    while frontier:
        new_checks = []
        for u in frontier:
            for cc in var_adj[u]:
                if cc not in dist_c:
                    dist_c[cc] = depth
                    ace_c[cc] = ace_v[u]
                    new_checks.append(cc)
                elif dist_c[cc] == depth:
                    ace_c[cc] = min(ace_c[cc], ace_v[u])
        if c in dist_c:
            return float(ace_c[c])
        new_vars = []
        for cc in new_checks:
            for w in check_adj[cc]:
                cand = ace_c[cc] + var_target[w] - 2
                if w not in dist_v:
                    dist_v[w] = depth + 1
                    ace_v[w] = cand
                    new_vars.append(w)
                elif dist_v[w] == depth + 1:
                    ace_v[w] = min(ace_v[w], cand)
        frontier = new_vars
        depth += 1
    return math.inf


def ace_tiebreak(candidates: Sequence[int], current_degree: Sequence[int], ace: Sequence[float]) -> int:
    """Lowest current degree, then largest ACE, then lowest index."""
    if not candidates:
        raise ValueError("no candidate checks")
    return min(candidates, key=lambda c: (current_degree[c], -ace[c], c))


# --------------------------------------------------------------------------
# PEG kernel
# --------------------------------------------------------------------------

@njit(cache=True)
def _peg_kernel(order, var_target, check_target, var_layer, check_layer, n_layers, polarized,
                quota, var_adj, var_deg, chk_adj, chk_deg, shortfall):
    n_var = len(var_target)
    n_check = len(check_target)
    var_mark = np.zeros(n_var, dtype=np.int64)
    var_level = np.zeros(n_var, dtype=np.int64)
    var_ace = np.zeros(n_var, dtype=np.int64)
    chk_mark = np.zeros(n_check, dtype=np.int64)
    chk_level = np.zeros(n_check, dtype=np.int64)
    chk_ace = np.zeros(n_check, dtype=np.int64)
    eligible = np.zeros(n_check, dtype=np.bool_)
    frontier_v = np.empty(n_var, dtype=np.int64)
    next_v = np.empty(n_var, dtype=np.int64)
    new_c = np.empty(n_check, dtype=np.int64)
    cand = np.empty(n_check, dtype=np.int64)
    big = np.iinfo(np.int64).max
    stamp = 0

    for idx in range(n_var):
        v = order[idx]
        for _ in range(var_target[v]):
            # eligible checks: free sockets, not adjacent to v and, when
            # polarized, in a layer where v still has quota.  Dead end: fall
            # back to the nearest layer >= own layer with a usable check.
            n_elig = 0
            for c in range(n_check):
                ok = chk_deg[c] < check_target[c]
                if ok and polarized:
                    ok = quota[v, check_layer[c]] > 0
                if ok:
                    for k in range(var_deg[v]):
                        if var_adj[v, k] == c:
                            ok = False
                            break
                eligible[c] = ok
                if ok:
                    n_elig += 1
            if n_elig == 0 and polarized:
                for ell in range(var_layer[v], n_layers):
                    for c in range(n_check):
                        ok = chk_deg[c] < check_target[c] and check_layer[c] == ell
                        if ok:
                            for k in range(var_deg[v]):
                                if var_adj[v, k] == c:
                                    ok = False
                                    break
                        eligible[c] = ok
                        if ok:
                            n_elig += 1
                    if n_elig > 0:
                        break
            if n_elig == 0:
                shortfall[v] += 1
                continue

            # BFS from v over the current graph, tracking path ACE
            stamp += 1
            var_mark[v] = stamp
            var_level[v] = 0
            var_ace[v] = var_target[v] - 2
            frontier_v[0] = v
            n_front = 1
            depth = 0
            reached = 0
            n_cand = 0
            while True:
                n_new = 0
                for f in range(n_front):
                    u = frontier_v[f]
                    for k in range(var_deg[u]):
                        c = var_adj[u, k]
                        if chk_mark[c] != stamp:
                            chk_mark[c] = stamp
                            chk_level[c] = depth
                            chk_ace[c] = var_ace[u]
                            new_c[n_new] = c
                            n_new += 1
                            if eligible[c]:
                                reached += 1
                        elif chk_level[c] == depth and var_ace[u] < chk_ace[c]:
                            chk_ace[c] = var_ace[u]
                if n_new == 0:
                    break
                if reached == n_elig:
                    for t in range(n_new):
                        if eligible[new_c[t]]:
                            cand[n_cand] = new_c[t]
                            n_cand += 1
                    break
                n_next = 0
                for t in range(n_new):
                    c = new_c[t]
                    for k in range(chk_deg[c]):
                        w = chk_adj[c, k]
                        val = chk_ace[c] + var_target[w] - 2
                        if var_mark[w] != stamp:
                            var_mark[w] = stamp
                            var_level[w] = depth + 1
                            var_ace[w] = val
                            next_v[n_next] = w
                            n_next += 1
                        elif var_level[w] == depth + 1 and val < var_ace[w]:
                            var_ace[w] = val
                for t in range(n_next):
                    frontier_v[t] = next_v[t]
                n_front = n_next
                depth += 1
                if n_front == 0:
                    break
            if n_cand == 0:
                # some eligible checks unreachable: no cycle is created
                for c in range(n_check):
                    if eligible[c] and chk_mark[c] != stamp:
                        cand[n_cand] = c
                        n_cand += 1

            best = -1
            best_deg = 0
            best_ace = 0
            for t in range(n_cand):
                c = cand[t]
                a = chk_ace[c] if chk_mark[c] == stamp else big
                if best < 0 or chk_deg[c] < best_deg or (chk_deg[c] == best_deg and (a > best_ace or (a == best_ace and c < best))):
                    best = c
                    best_deg = chk_deg[c]
                    best_ace = a
            var_adj[v, var_deg[v]] = best
            var_deg[v] += 1
            chk_adj[best, chk_deg[best]] = v
            chk_deg[best] += 1
            if polarized:
                ell = check_layer[best]
                if quota[v, ell] > 0:
                    quota[v, ell] -= 1
                else:
                    # fallback edge: charge the budget of the layer it replaced
                    for ell2 in range(n_layers):
                        if quota[v, ell2] > 0:
                            quota[v, ell2] -= 1
                            break
            for c in range(n_check):
                eligible[c] = False


def peg_construct(p: ConstructionPlan, strict: bool = False) -> TannerGraph:
    """Grow the graph edge by edge following ``p``.

    Nodes that end below their target degree (no eligible check left) are
    logged and recorded in ``graph.shortfall``; ``strict=True`` raises instead.
    """
    n_var, n_check = p.n_var, p.n_check
    var_adj = np.full((n_var, max(int(p.var_target.max()), 1)), -1, dtype=np.int64)
    chk_adj = np.full((n_check, max(int(p.check_target.max()), 1)), -1, dtype=np.int64)
    var_deg = np.zeros(n_var, dtype=np.int64)
    chk_deg = np.zeros(n_check, dtype=np.int64)
    shortfall = np.zeros(n_var, dtype=np.int64)
    polarized = p.mode == "polarized"
    quota = (p.layer_quota.astype(np.int64) if polarized
             else np.zeros((n_var, p.n_layers), dtype=np.int64))
    _peg_kernel(p.order, p.var_target.astype(np.int64), p.check_target.astype(np.int64),
                p.var_layer.astype(np.int64), p.check_layer.astype(np.int64), p.n_layers,
                polarized, quota, var_adj, var_deg, chk_adj, chk_deg, shortfall)
    short_vars = np.flatnonzero(shortfall)
    if short_vars.size:
        msg = f"{short_vars.size} variable nodes fell short of their target degree (first: {short_vars[:10].tolist()})"
        if strict:
            raise ConstructionError(msg)
        log.warning(msg)
    edges = [(v, int(var_adj[v, k])) for v in range(n_var) for k in range(var_deg[v])]
    g = TannerGraph(n_var, n_check, edges, p.var_layer, p.check_layer)
    g.shortfall = {int(v): int(shortfall[v]) for v in short_vars}
    return g


def construct(ensemble: LayeredEnsemble | DegreeDistribution, n_var: int, seed: int = 0, mode: str = "polarized") -> TannerGraph:
    """:func:`plan` followed by :func:`peg_construct`."""
    return peg_construct(plan(ensemble, n_var, seed, mode))
