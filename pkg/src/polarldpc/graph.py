"""Tanner graph data model shared by construction, decoding and simulation."""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np
from numba import njit

GIRTH_INF = math.inf


class TannerGraph:
    """Immutable bipartite graph of ``n_var`` variable and ``n_check`` check nodes.

    Edges are numbered check-major: the edges of check ``c`` are
    ``check_ptr[c]:check_ptr[c+1]`` with variables in ascending order, and
    ``edge_var`` / ``edge_check`` give the endpoints of each edge id.  The
    variable view ``var_edges[var_ptr[v]:var_ptr[v+1]]`` lists the edge ids of
    variable ``v`` in ascending check order.  Layer labels are stored per node.
    """

    def __init__(
        self,
        n_var: int,
        n_check: int,
        edges: Iterable[tuple[int, int]],
        var_layer=None,
        check_layer=None,
    ):
        if n_var < 0 or n_check < 0:
            raise ValueError("node counts must be non-negative")
        pairs = np.array(list(edges), dtype=np.int64).reshape(-1, 2)
        if pairs.size:
            if pairs[:, 0].min() < 0 or pairs[:, 0].max() >= n_var:
                raise ValueError("variable index out of range")
            if pairs[:, 1].min() < 0 or pairs[:, 1].max() >= n_check:
                raise ValueError("check index out of range")
        order = np.lexsort((pairs[:, 0], pairs[:, 1]))
        pairs = pairs[order]
        if len(pairs) > 1:
            dup = np.all(pairs[1:] == pairs[:-1], axis=1)
            if dup.any():
                v, c = pairs[1:][dup][0]
                raise ValueError(f"parallel edge between variable {v} and check {c}")

        self.n_var = int(n_var)
        self.n_check = int(n_check)
        self.edge_var = pairs[:, 0].astype(np.int32)
        self.edge_check = pairs[:, 1].astype(np.int32)
        self.check_degree = np.bincount(self.edge_check, minlength=n_check).astype(np.int32)
        self.var_degree = np.bincount(self.edge_var, minlength=n_var).astype(np.int32)
        self.check_ptr = np.concatenate(([0], np.cumsum(self.check_degree))).astype(np.int32)
        self.var_ptr = np.concatenate(([0], np.cumsum(self.var_degree))).astype(np.int32)
        self.var_edges = np.lexsort((self.edge_check, self.edge_var)).astype(np.int32)

        self.shortfall: dict[int, int] = {}
        self.var_layer = self._layers(var_layer, n_var, "var_layer")
        self.check_layer = self._layers(check_layer, n_check, "check_layer")
        for arr in (self.edge_var, self.edge_check, self.check_degree, self.var_degree,
                    self.check_ptr, self.var_ptr, self.var_edges, self.var_layer, self.check_layer):
            arr.setflags(write=False)

    @staticmethod
    def _layers(labels, n, name):
        if labels is None:
            return np.zeros(n, dtype=np.int32)
        arr = np.asarray(labels, dtype=np.int32).copy()
        if arr.shape != (n,):
            raise ValueError(f"{name} must have length {n}")
        if n and arr.min() < 0:
            raise ValueError(f"{name} entries must be non-negative")
        return arr

    @classmethod
    def from_dense(cls, H, var_layer=None, check_layer=None) -> "TannerGraph":
        H = np.asarray(H)
        rows, cols = np.nonzero(H)
        return cls(H.shape[1], H.shape[0], zip(cols.tolist(), rows.tolist()), var_layer, check_layer)

    @property
    def n_edges(self) -> int:
        return len(self.edge_var)

    @property
    def n_layers(self) -> int:
        top = 0
        if self.n_var:
            top = max(top, int(self.var_layer.max()) + 1)
        if self.n_check:
            top = max(top, int(self.check_layer.max()) + 1)
        return top

    @property
    def design_rate(self) -> float:
        return 1.0 - self.n_check / self.n_var if self.n_var else 0.0

    def edges(self) -> list[tuple[int, int]]:
        """``(variable, check)`` pairs in edge-id order."""
        return list(zip(self.edge_var.tolist(), self.edge_check.tolist()))

    def var_neighbors(self, v: int) -> np.ndarray:
        """Checks adjacent to variable ``v`` (the set U_v), ascending."""
        return self.edge_check[self.var_edges[self.var_ptr[v]:self.var_ptr[v + 1]]]

    def check_neighbors(self, c: int) -> np.ndarray:
        """Variables adjacent to check ``c`` (the set V_c), ascending."""
        return self.edge_var[self.check_ptr[c]:self.check_ptr[c + 1]]

    def to_dense(self) -> np.ndarray:
        H = np.zeros((self.n_check, self.n_var), dtype=np.uint8)
        H[self.edge_check, self.edge_var] = 1
        return H

    def with_layers(self, var_layer, check_layer) -> "TannerGraph":
        return TannerGraph(self.n_var, self.n_check, self.edges(), var_layer, check_layer)

    def __eq__(self, other):
        if not isinstance(other, TannerGraph):
            return NotImplemented
        return (
            self.n_var == other.n_var
            and self.n_check == other.n_check
            and np.array_equal(self.edge_var, other.edge_var)
            and np.array_equal(self.edge_check, other.edge_check)
            and np.array_equal(self.var_layer, other.var_layer)
            and np.array_equal(self.check_layer, other.check_layer)
        )

    __hash__ = None

    def __repr__(self):
        return f"TannerGraph(n_var={self.n_var}, n_check={self.n_check}, n_edges={self.n_edges})"


def syndrome(g: TannerGraph, word) -> np.ndarray:
    """Parity of ``word`` over each check's neighborhood."""
    w = np.asarray(word)
    if w.shape != (g.n_var,):
        raise ValueError(f"word has length {w.size}, graph has {g.n_var} variables")
    bits = (w & 1).astype(np.int64)
    return (np.bincount(g.edge_check, weights=bits[g.edge_var], minlength=g.n_check).astype(np.int64) & 1).astype(np.uint8)


@njit(cache=True)
def _girth_kernel(n_var, var_ptr, var_edges, check_ptr, edge_var, edge_check):
    n_check = len(check_ptr) - 1
    n_nodes = n_var + n_check
    dist = np.full(n_nodes, -1, dtype=np.int64)
    parent = np.full(n_nodes, -1, dtype=np.int64)
    queue = np.empty(n_nodes, dtype=np.int64)
    touched = np.empty(n_nodes, dtype=np.int64)
    best = np.iinfo(np.int64).max
    for root in range(n_var):
        n_touched = 0
        head = 0
        tail = 0
        queue[tail] = root
        tail += 1
        dist[root] = 0
        touched[n_touched] = root
        n_touched += 1
        while head < tail:
            u = queue[head]
            head += 1
            if 2 * dist[u] + 1 >= best:
                break
            if u < n_var:
                lo = var_ptr[u]
                hi = var_ptr[u + 1]
            else:
                lo = check_ptr[u - n_var]
                hi = check_ptr[u - n_var + 1]
            for k in range(lo, hi):
                if u < n_var:
                    w = n_var + edge_check[var_edges[k]]
                else:
                    w = edge_var[k]
                if w == parent[u]:
                    continue
                if dist[w] < 0:
                    dist[w] = dist[u] + 1
                    parent[w] = u
                    queue[tail] = w
                    tail += 1
                    touched[n_touched] = w
                    n_touched += 1
                else:
                    length = dist[u] + dist[w] + 1
                    if length < best:
                        best = length
        for t in range(n_touched):
            dist[touched[t]] = -1
            parent[touched[t]] = -1
    return best


def girth(g: TannerGraph):
    """Length of the shortest cycle, or :data:`GIRTH_INF` for a forest."""
    if g.n_edges == 0:
        return GIRTH_INF
    best = _girth_kernel(g.n_var, g.var_ptr, g.var_edges, g.check_ptr, g.edge_var, g.edge_check)
    if best == np.iinfo(np.int64).max:
        return GIRTH_INF
    return int(best)


def empirical_cross_rho(g: TannerGraph) -> tuple[list[int], list[int], np.ndarray]:
    """Realized edge-type fractions by node degree.

    Returns ``(var_degrees, check_degrees, matrix)`` with variable degrees
    descending and check degrees ascending; row ``i`` gives the fraction of the
    edges of degree-``var_degrees[i]`` variables landing on each check degree.
    """
    if g.n_edges == 0:
        raise ValueError("graph has no edges")
    vdeg = g.var_degree[g.edge_var]
    cdeg = g.check_degree[g.edge_check]
    var_degrees = sorted(set(vdeg.tolist()), reverse=True)
    check_degrees = sorted(set(cdeg.tolist()))
    vi = {d: k for k, d in enumerate(var_degrees)}
    ci = {d: k for k, d in enumerate(check_degrees)}
    counts = np.zeros((len(var_degrees), len(check_degrees)))
    np.add.at(counts, ([vi[d] for d in vdeg.tolist()], [ci[d] for d in cdeg.tolist()]), 1)
    return var_degrees, check_degrees, counts / counts.sum(axis=1, keepdims=True)
