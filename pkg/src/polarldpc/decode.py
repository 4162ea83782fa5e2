"""Sum-product (BP) decoding on a Tanner graph with an optional layer-freezing schedule.

The check update works in the log-tanh domain with forward/backward partial
sums, so the leave-one-out combination needs no division or subtraction and
stays exact for large LLRs.  Messages are saturated at ``L_SAT``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from .graph import TannerGraph

L_SAT = 30.0


def r_pair(a: float, b: float) -> float:
    """``2 atanh(tanh(a/2) tanh(b/2))`` via sign and magnitude; ``R(a, +-inf) = +-a``."""
    sign = math.copysign(1.0, a) * math.copysign(1.0, b)
    if a == 0.0 or b == 0.0:
        return 0.0
    ma, mb = abs(a), abs(b)
    if math.isinf(ma):
        return sign * mb
    if math.isinf(mb):
        return sign * ma
    mag = min(ma, mb) + math.log1p(math.exp(-(ma + mb))) - math.log1p(math.exp(-abs(ma - mb)))
    return sign * max(mag, 0.0)


def check_msg(inputs: Sequence[float]) -> float:
    """Fold of :func:`r_pair` over ``inputs``; the empty fold is ``+inf``."""
    out = math.inf
    for x in inputs:
        out = r_pair(out, x)
    return out


def var_msg(channel: float, others: Sequence[float], l_sat: float = L_SAT) -> float:
    """``channel + sum(others)`` clamped to ``[-l_sat, l_sat]``."""
    total = channel + math.fsum(others)
    return min(max(total, -l_sat), l_sat)


@njit(cache=True)
def _log_tanh_half(x):
    # log(tanh(|x|/2)) <= 0, -inf at x = 0
    t = math.exp(-abs(x))
    return math.log1p(-t) - math.log1p(t)


@njit(cache=True)
def _from_log_tanh_half(s):
    # 2 atanh(exp(s)) for s <= 0
    em1 = math.expm1(s)
    if em1 == 0.0:
        return math.inf
    return math.log(2.0 + em1) - math.log(-em1)


@njit(cache=True)
def _bp_core(check_ptr, edge_var, var_ptr, var_edges, var_layer, n_layers,
             llr, max_iter, l_sat, early_exit, freeze_tau,
             v2c, c2v, post, hard, scratch, frozen, freeze_iter, streak):
    n_var = len(var_ptr) - 1
    n_check = len(check_ptr) - 1
    for v in range(n_var):
        x = min(max(llr[v], -l_sat), l_sat)
        post[v] = llr[v]
        hard[v] = 1 if llr[v] < 0 else 0
        for k in range(var_ptr[v], var_ptr[v + 1]):
            v2c[var_edges[k]] = x
    for ell in range(n_layers):
        frozen[ell] = False
        freeze_iter[ell] = -1
        streak[ell] = 0
    use_freeze = freeze_tau < math.inf

    iters = 0
    converged = False
    for it in range(1, max_iter + 1):
        iters = it
        # check nodes
        for c in range(n_check):
            lo = check_ptr[c]
            hi = check_ptr[c + 1]
            d = hi - lo
            parity = 0
            for k in range(d):
                x = v2c[lo + k]
                if x < 0:
                    parity ^= 1
                scratch[k] = _log_tanh_half(x)
            # forward partial sums in c2v, backward running sum in acc
            acc = 0.0
            for k in range(d):
                c2v[lo + k] = acc
                acc += scratch[k]
            acc = 0.0
            for k in range(d - 1, -1, -1):
                s = c2v[lo + k] + acc
                acc += scratch[k]
                mag = _from_log_tanh_half(s)
                if mag > l_sat:
                    mag = l_sat
                own = 1 if v2c[lo + k] < 0 else 0
                c2v[lo + k] = -mag if (parity ^ own) else mag
        # variable nodes
        for v in range(n_var):
            ell = var_layer[v]
            if use_freeze and frozen[ell]:
                continue
            total = llr[v]
            for k in range(var_ptr[v], var_ptr[v + 1]):
                total += c2v[var_edges[k]]
            post[v] = total
            hard[v] = 1 if total < 0 else 0
            for k in range(var_ptr[v], var_ptr[v + 1]):
                e = var_edges[k]
                x = total - c2v[e]
                v2c[e] = min(max(x, -l_sat), l_sat)
        if use_freeze:
            for ell in range(n_layers):
                if frozen[ell]:
                    continue
                ok = True
                seen = False
                for v in range(n_var):
                    if var_layer[v] == ell:
                        seen = True
                        if abs(post[v]) < freeze_tau:
                            ok = False
                            break
                if ok and seen:
                    streak[ell] += 1
                else:
                    streak[ell] = 0
                if streak[ell] >= 2:
                    frozen[ell] = True
                    freeze_iter[ell] = it
                    for v in range(n_var):
                        if var_layer[v] == ell:
                            clamp = -l_sat if post[v] < 0 else l_sat
                            for k in range(var_ptr[v], var_ptr[v + 1]):
                                v2c[var_edges[k]] = clamp
        # syndrome
        ok = True
        for c in range(n_check):
            parity = 0
            for k in range(check_ptr[c], check_ptr[c + 1]):
                parity ^= hard[edge_var[k]]
            if parity:
                ok = False
                break
        converged = ok
        if ok and early_exit:
            break
    return iters, converged


@njit(cache=True)
def _bp_batch(check_ptr, edge_var, var_ptr, var_edges, var_layer, n_layers,
              llrs, max_iter, l_sat, early_exit, freeze_tau, hard_out, iters_out, conv_out):
    n_edges = len(edge_var)
    n_var = len(var_ptr) - 1
    v2c = np.empty(n_edges)
    c2v = np.empty(n_edges)
    post = np.empty(n_var)
    hard = np.empty(n_var, dtype=np.uint8)
    max_dc = 1
    for c in range(len(check_ptr) - 1):
        max_dc = max(max_dc, check_ptr[c + 1] - check_ptr[c])
    scratch = np.empty(max_dc)
    frozen = np.zeros(max(n_layers, 1), dtype=np.bool_)
    freeze_iter = np.zeros(max(n_layers, 1), dtype=np.int64)
    streak = np.zeros(max(n_layers, 1), dtype=np.int64)
    for f in range(llrs.shape[0]):
        it, ok = _bp_core(check_ptr, edge_var, var_ptr, var_edges, var_layer, n_layers,
                          llrs[f], max_iter, l_sat, early_exit, freeze_tau,
                          v2c, c2v, post, hard, scratch, frozen, freeze_iter, streak)
        hard_out[f] = hard
        iters_out[f] = it
        conv_out[f] = ok


@dataclass
class DecodeResult:
    """Outcome of one :func:`bp_decode` call."""

    bits: np.ndarray
    converged: bool
    iterations: int
    posterior: np.ndarray
    frozen_layers: np.ndarray
    freeze_iteration: np.ndarray
    v2c: np.ndarray
    c2v: np.ndarray


def _freeze_tau(schedule: str, tau_llr: float) -> float:
    if schedule == "plain":
        return math.inf
    if schedule == "layer_freeze":
        return float(tau_llr)
    raise ValueError(f"unknown schedule {schedule!r}")


def bp_decode(
    g: TannerGraph,
    channel_llr,
    max_iter: int = 50,
    schedule: str = "plain",
    tau_llr: float = math.inf,
    early_exit: bool = True,
    l_sat: float = L_SAT,
) -> DecodeResult:
    """Flooding sum-product decoding of one frame.

    Each iteration updates every check, then every variable, takes hard
    decisions from the posteriors and stops once the syndrome is zero (unless
    ``early_exit`` is off).  With ``schedule="layer_freeze"`` a layer whose
    posteriors all reach ``|LLR| >= tau_llr`` on two consecutive iterations is
    frozen: its outgoing messages are clamped to ``sign * l_sat`` and it is no
    longer updated.
    """
    llr = np.asarray(channel_llr, dtype=np.float64)
    if llr.shape != (g.n_var,):
        raise ValueError(f"expected {g.n_var} channel LLRs, got {llr.size}")
    if not np.all(np.isfinite(llr)):
        raise ValueError("channel LLRs must be finite")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    n_layers = max(g.n_layers, 1)
    v2c = np.empty(g.n_edges)
    c2v = np.empty(g.n_edges)
    post = np.empty(g.n_var)
    hard = np.empty(g.n_var, dtype=np.uint8)
    max_dc = int(g.check_degree.max()) if g.n_check else 1
    scratch = np.empty(max(max_dc, 1))
    frozen = np.zeros(n_layers, dtype=np.bool_)
    freeze_iter = np.zeros(n_layers, dtype=np.int64)
    streak = np.zeros(n_layers, dtype=np.int64)
    iters, ok = _bp_core(g.check_ptr, g.edge_var, g.var_ptr, g.var_edges, g.var_layer, n_layers,
                         llr, max_iter, l_sat, early_exit, _freeze_tau(schedule, tau_llr),
                         v2c, c2v, post, hard, scratch, frozen, freeze_iter, streak)
    return DecodeResult(hard.copy(), bool(ok), int(iters), post, frozen, freeze_iter, v2c, c2v)


def bp_decode_batch(
    g: TannerGraph,
    llrs: np.ndarray,
    max_iter: int = 50,
    schedule: str = "plain",
    tau_llr: float = math.inf,
    l_sat: float = L_SAT,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Decode a ``(frames, n_var)`` block; returns ``(bits, iterations, converged)``."""
    llrs = np.ascontiguousarray(llrs, dtype=np.float64)
    if llrs.ndim != 2 or llrs.shape[1] != g.n_var:
        raise ValueError("llrs must have shape (frames, n_var)")
    if not np.all(np.isfinite(llrs)):
        raise ValueError("channel LLRs must be finite")
    frames = llrs.shape[0]
    hard = np.empty((frames, g.n_var), dtype=np.uint8)
    iters = np.empty(frames, dtype=np.int64)
    conv = np.empty(frames, dtype=np.bool_)
    _bp_batch(g.check_ptr, g.edge_var, g.var_ptr, g.var_edges, g.var_layer, max(g.n_layers, 1),
              llrs, max_iter, l_sat, True, _freeze_tau(schedule, tau_llr), hard, iters, conv)
    return hard, iters, conv
