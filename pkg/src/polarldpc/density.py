"""Quantized density evolution for the BSC: standard and polarized.

Message densities live on a symmetric LLR lattice ``k * step`` for
``k = -N..N``.  The two end bins are saturation bins: variable nodes add
them as the clamp values ``+-limit`` (as the decoder does), check nodes treat
them as ``+-inf``.  A density whose mass sits in the top bin is the "point
mass at infinity".
Variable nodes convolve densities, check nodes combine them pairwise through
a precomputed table of the quantized R-function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

from . import codec
from .ensemble import DegreeDistribution, LayeredEnsemble, build_layers

DEFAULT_STEP = 0.01
DEFAULT_LIMIT = 30.0
DEFAULT_TAU = 1e-9


@dataclass(frozen=True)
class Grid:
    """Uniform LLR lattice; the end bins ``+-limit`` are saturation bins."""

    step: float = DEFAULT_STEP
    limit: float = DEFAULT_LIMIT

    def __post_init__(self):
        if self.step <= 0 or self.limit <= self.step:
            raise ValueError("grid needs 0 < step < limit")
        n = self.limit / self.step
        if abs(n - round(n)) > 1e-9:
            raise ValueError("limit must be a whole number of steps")

    @property
    def half(self) -> int:
        return int(round(self.limit / self.step))

    @property
    def size(self) -> int:
        return 2 * self.half + 1

    @property
    def values(self) -> np.ndarray:
        return np.arange(-self.half, self.half + 1) * self.step

    def index(self, llr: float) -> int:
        """Bin index of the lattice point nearest to ``llr`` (clipped into the saturation bins)."""
        if math.isinf(llr):
            return self.size - 1 if llr > 0 else 0
        k = int(np.rint(llr / self.step))
        return min(max(k, -self.half), self.half) + self.half


@dataclass(frozen=True, eq=False)
class QuantizedDensity:
    """PMF over the bins of ``grid`` (index 0 is ``-inf``, index ``size-1`` is ``+inf``)."""

    grid: Grid
    mass: np.ndarray

    def __post_init__(self):
        if self.mass.shape != (self.grid.size,):
            raise ValueError("mass array does not match the grid")
        self.mass.setflags(write=False)

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    def mean(self) -> float:
        """Mean LLR with the saturation bins read at ``+-limit``."""
        return float(self.mass @ self.grid.values)


def _make(grid: Grid, mass: np.ndarray) -> QuantizedDensity:
    np.maximum(mass, 0.0, out=mass)
    total = mass.sum()
    if total <= 0:
        raise ValueError("density has no mass")
    mass /= total
    return QuantizedDensity(grid, mass)


def _same_grid(*densities: QuantizedDensity) -> Grid:
    grid = densities[0].grid
    for d in densities[1:]:
        if d.grid != grid:
            raise ValueError(f"grid mismatch: {d.grid} vs {grid}")
    return grid


def point_mass(llr: float, grid: Grid) -> QuantizedDensity:
    mass = np.zeros(grid.size)
    mass[grid.index(llr)] = 1.0
    return QuantizedDensity(grid, mass)


def infinity(grid: Grid) -> QuantizedDensity:
    return point_mass(math.inf, grid)


def bsc_initial_density(eps: float, grid: Grid | None = None) -> QuantizedDensity:
    """Channel LLR density of the BSC under the all-zero codeword.

    Mass ``1 - eps`` at ``+log((1 - eps) / eps)`` and ``eps`` at its negative.
    """
    grid = grid or Grid()
    if not 0.0 <= eps <= 0.5:
        raise ValueError(f"crossover probability {eps} outside [0, 1/2]")
    if eps == 0.0:
        return infinity(grid)
    llr = math.log((1.0 - eps) / eps)
    mass = np.zeros(grid.size)
    mass[grid.index(llr)] += 1.0 - eps
    mass[grid.index(-llr)] += eps
    return QuantizedDensity(grid, mass)


def error_prob(d: QuantizedDensity) -> float:
    """Mass on negative LLRs plus half the mass at zero."""
    h = d.grid.half
    return float(d.mass[:h].sum() + 0.5 * d.mass[h])


def symmetry_defect(d: QuantizedDensity) -> float:
    """``sum_{x>0} |p(-x) - exp(-x) p(x)|`` over finite bins."""
    h = d.grid.half
    pos = d.mass[h + 1:-1]
    neg = d.mass[1:h][::-1]
    x = np.arange(1, h) * d.grid.step
    return float(np.abs(neg - np.exp(-x) * pos).sum())


def mixture(weights: Sequence[float], densities: Sequence[QuantizedDensity]) -> QuantizedDensity:
    """Convex combination, summed in the given order."""
    grid = _same_grid(*densities)
    mass = np.zeros(grid.size)
    for w, d in zip(weights, densities):
        if w:
            mass += w * d.mass
    return _make(grid, mass)


# --------------------------------------------------------------------------
# variable side: convolution with saturation absorption
# --------------------------------------------------------------------------

def _support(a: np.ndarray) -> tuple[int, int]:
    nz = np.flatnonzero(a)
    if nz.size == 0:
        return 0, 0
    return int(nz[0]), int(nz[-1]) + 1


def convolve(a: QuantizedDensity, b: QuantizedDensity) -> QuantizedDensity:
    """Density of the sum of two independent LLRs, clamped to ``[-limit, limit]``.

    The end bins take part as the values ``+-limit`` and sums beyond the
    range pile up in them, which is exactly what a saturating decoder does.
    An absorbing "infinite" end bin would let an early ``-limit`` message
    veto every later correction and leaves a spurious error floor.
    """
    grid = _same_grid(a, b)
    h = grid.half
    out = np.zeros(grid.size)
    lo_a, hi_a = _support(a.mass)
    lo_b, hi_b = _support(b.mass)
    conv = np.convolve(a.mass[lo_a:hi_a], b.mass[lo_b:hi_b])
    ks = np.arange(conv.size) + (lo_a + lo_b - 2 * h)
    inside = (ks > -h) & (ks < h)
    out[ks[inside] + h] = conv[inside]
    out[-1] += conv[ks >= h].sum()
    out[0] += conv[ks <= -h].sum()
    return _make(grid, out)


def var_update_density(channel: QuantizedDensity, incoming: QuantizedDensity, degree: int) -> QuantizedDensity:
    """Outgoing variable message density: ``channel * incoming^(degree - 1)``."""
    _same_grid(channel, incoming)
    if degree < 1:
        raise ValueError("variable degree must be at least 1")
    out = channel
    for _ in range(degree - 1):
        out = convolve(out, incoming)
    return out


# --------------------------------------------------------------------------
# check side: pairwise R over the lattice
# --------------------------------------------------------------------------

def r_function(a, b):
    """``2 atanh(tanh(a/2) tanh(b/2))`` in a form that does not overflow."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(invalid="ignore"):
        sign = np.sign(a) * np.sign(b)
        ma, mb = np.abs(a), np.abs(b)
        mag = np.minimum(ma, mb) + np.log1p(np.exp(-(ma + mb))) - np.log1p(np.exp(-np.abs(ma - mb)))
        mag = np.where(np.isinf(ma), mb, np.where(np.isinf(mb), ma, mag))
    return sign * np.maximum(mag, 0.0)


@lru_cache(maxsize=4)
def _r_table(half: int, step: float) -> np.ndarray:
    """Magnitude bin of ``R(a*step, b*step)``; index ``half`` stands for infinity."""
    k = np.arange(half + 1)
    x = k * step
    mag = r_function(x[:, None], x[None, :])
    table = np.rint(mag / step).astype(np.int64)
    table[half, :] = k
    table[:, half] = k
    np.minimum(table, half, out=table)
    dtype = np.int16 if half < np.iinfo(np.int16).max else np.int32
    out = table.astype(dtype)
    out.setflags(write=False)
    return out


@njit(cache=True)
def _boxplus_kernel(pp, pn, qp, qn, sp, sq, table, out_p, out_n):
    for a in sp:
        pa = pp[a]
        na = pn[a]
        row = table[a]
        for b in sq:
            k = row[b]
            out_p[k] += pa * qp[b] + na * qn[b]
            out_n[k] += pa * qn[b] + na * qp[b]


def _split(d: QuantizedDensity):
    h = d.grid.half
    pos = d.mass[h:].copy()
    neg = np.zeros(h + 1)
    neg[1:] = d.mass[:h][::-1]
    return pos, neg


def boxplus(a: QuantizedDensity, b: QuantizedDensity) -> QuantizedDensity:
    """Density of ``R(X, Y)`` for independent ``X ~ a``, ``Y ~ b``, snapped to the lattice."""
    grid = _same_grid(a, b)
    h = grid.half
    table = _r_table(h, grid.step)
    pp, pn = _split(a)
    qp, qn = _split(b)
    sp = np.flatnonzero(pp + pn)
    sq = np.flatnonzero(qp + qn)
    out_p = np.zeros(h + 1)
    out_n = np.zeros(h + 1)
    _boxplus_kernel(pp, pn, qp, qn, sp, sq, table, out_p, out_n)
    mass = np.zeros(grid.size)
    mass[h:] += out_p
    mass[:h] += out_n[1:][::-1]
    mass[h] += out_n[0]
    return _make(grid, mass)


def _check_powers(incoming: QuantizedDensity, exponents: Sequence[int], approx: bool) -> dict[int, QuantizedDensity]:
    """``R``-fold powers by repeated squaring; bits are combined low to high."""
    op = boxplus_maxlog if approx else boxplus
    top = max(exponents)
    squares = [incoming]
    while (1 << len(squares)) <= top:
        squares.append(op(squares[-1], squares[-1]))
    out = {}
    for e in exponents:
        acc = None
        for bit, sq in enumerate(squares):
            if e >> bit & 1:
                acc = sq if acc is None else op(acc, sq)
        out[e] = acc
    return out


def check_update_density(incoming: QuantizedDensity, degree: int, approx: bool = False) -> QuantizedDensity:
    """Outgoing check message density: the ``(degree - 1)``-fold R-combination of ``incoming``.

    ``approx=True`` swaps in the max-log combiner.
    """
    if degree < 2:
        raise ValueError("check degree must be at least 2")
    return _check_powers(incoming, [degree - 1], approx)[degree - 1]


def check_update_many(incoming: QuantizedDensity, degrees: Sequence[int], approx: bool = False) -> list[QuantizedDensity]:
    """:func:`check_update_density` for several degrees sharing the squarings."""
    if min(degrees) < 2:
        raise ValueError("check degree must be at least 2")
    powers = _check_powers(incoming, [d - 1 for d in degrees], approx)
    return [powers[d - 1] for d in degrees]


def boxplus_maxlog(a: QuantizedDensity, b: QuantizedDensity) -> QuantizedDensity:
    """Max-log (min-sum) stand-in for :func:`boxplus`: sign product, smaller magnitude.

    Linear in the bin count instead of quadratic, but it overestimates
    magnitudes, so DE results using it are optimistic.
    """
    grid = _same_grid(a, b)
    h = grid.half
    pp, pn = _split(a)
    qp, qn = _split(b)

    def tail_ge(x):
        return np.cumsum(x[::-1])[::-1]

    def tail_gt(x):
        return np.append(tail_ge(x)[1:], 0.0)

    qp_ge, qn_ge = tail_ge(qp), tail_ge(qn)
    pp_gt, pn_gt = tail_gt(pp), tail_gt(pn)
    same = pp * qp_ge + pn * qn_ge + qp * pp_gt + qn * pn_gt
    diff = pp * qn_ge + pn * qp_ge + qn * pp_gt + qp * pn_gt
    mass = np.zeros(grid.size)
    mass[h:] += same
    mass[:h] += diff[1:][::-1]
    mass[h] += diff[0]
    return _make(grid, mass)


# --------------------------------------------------------------------------
# DE drivers
# --------------------------------------------------------------------------

@dataclass
class DeTrace:
    """Per-iteration error probabilities of a DE run.

    ``var_error[l][i]`` is the error probability of the outgoing message of
    variable class ``var_degrees[i]`` at iteration ``l + 1``; ``check_error``
    likewise per check class.  ``layer_converged`` holds, per variable class,
    the iteration at which it reached the point mass at infinity (or ``None``).
    """

    mode: str
    eps: float
    var_degrees: tuple[int, ...]
    check_degrees: tuple[int, ...]
    var_error: list[np.ndarray] = field(default_factory=list)
    check_error: list[np.ndarray] = field(default_factory=list)
    var_mix_error: list[float] = field(default_factory=list)
    check_mix_error: list[float] = field(default_factory=list)
    layer_converged: list[int | None] = field(default_factory=list)
    converged: bool = False
    stalled: bool = False
    var_densities: list[QuantizedDensity] = field(default_factory=list, repr=False)
    check_densities: list[QuantizedDensity] = field(default_factory=list, repr=False)
    active_cross_rho: np.ndarray | None = field(default=None, repr=False)

    @property
    def iterations(self) -> int:
        return len(self.var_mix_error)

    @property
    def check_correct(self) -> np.ndarray:
        """``1 - check_error`` as an (iterations x check classes) array."""
        return 1.0 - np.array(self.check_error)

    @property
    def final_error(self) -> float:
        return self.var_mix_error[-1] if self.var_mix_error else 1.0

    def csv_header(self) -> list[str]:
        return (["iter", "error_prob", "check_error_prob"]
                + [f"error_prob_v{d}" for d in self.var_degrees]
                + [f"check_correct_prob_c{d}" for d in self.check_degrees])

    def csv_rows(self) -> list[list]:
        rows = []
        for it in range(self.iterations):
            rows.append([it + 1, self.var_mix_error[it], self.check_mix_error[it]]
                        + [float(x) for x in self.var_error[it]]
                        + [float(1.0 - x) for x in self.check_error[it]])
        return rows

    def to_csv(self, path: str | Path) -> None:
        codec.write_csv(path, self.csv_header(), self.csv_rows())


def _fixed_point(prev: QuantizedDensity | None, cur: QuantizedDensity, tol: float | None) -> bool:
    return tol is not None and prev is not None and float(np.max(np.abs(prev.mass - cur.mass))) <= tol


def standard_de(
    dd: DegreeDistribution,
    eps: float,
    max_iter: int = 50,
    tau: float = DEFAULT_TAU,
    grid: Grid | None = None,
    keep_densities: bool = False,
    fixed_point_tol: float | None = None,
) -> DeTrace:
    """Classic DE with degree-independent mixtures ``v = sum lambda_i v_i``, ``u = sum rho_j u_j``.

    Stops when the variable or the check mixture reaches error probability
    below ``tau``, or (with ``fixed_point_tol``) when the variable mixture
    stops moving.
    """
    grid = grid or Grid()
    var_deg = tuple(int(d) for d in dd.variable_degrees[::-1])
    lam = dd.variable_fractions[::-1]
    chk_deg = tuple(int(d) for d in dd.check_degrees)
    rho = dd.check_fractions
    trace = DeTrace("standard", eps, var_deg, chk_deg, layer_converged=[None] * len(var_deg))

    channel = bsc_initial_density(eps, grid)
    u_mix = point_mass(0.0, grid)
    prev_v = None
    for it in range(1, max_iter + 1):
        v_by_deg = {}
        acc = channel
        for k in range(1, max(var_deg) + 1):
            if k in var_deg:
                v_by_deg[k] = acc
            if k < max(var_deg):
                acc = convolve(acc, u_mix)
        v_list = [v_by_deg[d] for d in var_deg]
        v_err = np.array([error_prob(v) for v in v_list])
        for i, e in enumerate(v_err):
            if trace.layer_converged[i] is None and e < tau:
                trace.layer_converged[i] = it
        v_mix = mixture(lam, v_list)
        u_list = check_update_many(v_mix, chk_deg)
        u_mix = mixture(rho, u_list)

        trace.var_error.append(v_err)
        trace.check_error.append(np.array([error_prob(u) for u in u_list]))
        trace.var_mix_error.append(error_prob(v_mix))
        trace.check_mix_error.append(error_prob(u_mix))
        if keep_densities:
            trace.var_densities.append(v_mix)
            trace.check_densities.append(u_mix)
        if trace.var_mix_error[-1] < tau or trace.check_mix_error[-1] < tau:
            trace.converged = True
            break
        if _fixed_point(prev_v, v_mix, fixed_point_tol):
            trace.stalled = True
            break
        prev_v = v_mix
    return trace


def polarized_de(
    ensemble: LayeredEnsemble,
    eps: float,
    max_iter: int = 50,
    tau: float = DEFAULT_TAU,
    grid: Grid | None = None,
    freeze: bool = True,
    keep_densities: bool = False,
    fixed_point_tol: float | None = None,
) -> DeTrace:
    """Polarized DE: per-degree densities with per-degree input mixtures.

    Variable class ``i`` reads ``sum_j cross_rho[i, j] u_j`` and check class
    ``j`` reads ``sum_i cross_lambda[j, i] v_i``.  Once class ``i`` reaches
    error probability below ``tau`` it is converged: from the next iteration
    on it sends the point mass at infinity into every check mixture and stops
    receiving, its row of ``cross_rho`` being cut back to the unconverged
    check classes at or below its own layer.  ``freeze=False`` keeps updating
    converged classes normally.
    """
    grid = grid or Grid()
    var_deg, chk_deg = ensemble.var_degrees, ensemble.check_degrees
    nv, nc = len(var_deg), len(chk_deg)
    lam, rho = ensemble.lam, ensemble.rho
    cross_lambda = ensemble.cross_lambda
    active_rho = np.array(ensemble.cross_rho, dtype=float)
    trace = DeTrace("polarized", eps, var_deg, chk_deg, layer_converged=[None] * nv)

    channel = bsc_initial_density(eps, grid)
    inf = infinity(grid)
    u_list = [point_mass(0.0, grid)] * nc
    u_err = np.full(nc, 0.5)
    frozen = np.zeros(nv, dtype=bool)
    prev_v = None
    for it in range(1, max_iter + 1):
        v_list, v_err = [], np.zeros(nv)
        for i in range(nv):
            if frozen[i]:
                v_list.append(inf)
                continue
            incoming = mixture(active_rho[i], u_list)
            v = var_update_density(channel, incoming, var_deg[i])
            v_list.append(v)
            v_err[i] = error_prob(v)
        v_mix = mixture(lam, v_list)

        for i in range(nv):
            if trace.layer_converged[i] is None and v_err[i] < tau:
                trace.layer_converged[i] = it
                if freeze:
                    frozen[i] = True
                    _cut_edges(active_rho, i, u_err, tau, ensemble.layered)

        u_list = []
        for j in range(nc):
            incoming = mixture(cross_lambda[j], v_list)
            u_list.append(check_update_density(incoming, chk_deg[j]))
        u_err = np.array([error_prob(u) for u in u_list])
        u_mix = mixture(rho, u_list)

        trace.var_error.append(v_err)
        trace.check_error.append(u_err)
        trace.var_mix_error.append(error_prob(v_mix))
        trace.check_mix_error.append(error_prob(u_mix))
        if keep_densities:
            trace.var_densities.append(v_mix)
            trace.check_densities.append(u_mix)
        if trace.var_mix_error[-1] < tau or trace.check_mix_error[-1] < tau:
            trace.converged = True
            break
        if _fixed_point(prev_v, v_mix, fixed_point_tol):
            trace.stalled = True
            break
        prev_v = v_mix
    trace.active_cross_rho = active_rho
    return trace


def _cut_edges(active_rho: np.ndarray, i: int, u_err: np.ndarray, tau: float, layered: bool) -> None:
    """Restrict row ``i`` to unconverged check classes at or below layer ``i``."""
    row = active_rho[i].copy()
    keep = np.ones(len(row), dtype=bool)
    if layered:
        keep[:i] = False
    keep &= u_err >= tau
    if not np.any(row[keep] > 0):
        return
    row[~keep] = 0.0
    active_rho[i] = row / row.sum()


# --------------------------------------------------------------------------
# threshold search
# --------------------------------------------------------------------------

class BracketError(RuntimeError):
    """No success/failure bracket for the threshold inside (0, 1/2)."""


def run_de(
    analyzer: str,
    dd: DegreeDistribution,
    eps: float,
    max_iter: int,
    tau: float = DEFAULT_TAU,
    grid: Grid | None = None,
    ensemble: LayeredEnsemble | None = None,
) -> DeTrace:
    if analyzer == "standard":
        return standard_de(dd, eps, max_iter, tau, grid, fixed_point_tol=1e-15)
    if analyzer == "polarized":
        return polarized_de(ensemble or build_layers(dd), eps, max_iter, tau, grid, fixed_point_tol=1e-15)
    raise ValueError(f"unknown analyzer {analyzer!r}")


def find_threshold(
    analyzer: str,
    dd: DegreeDistribution,
    tol: float = 1e-4,
    max_iter: int = 200,
    tau: float = DEFAULT_TAU,
    grid: Grid | None = None,
    lo: float = 1e-4,
    hi: float = 0.5,
) -> float:
    """Largest crossover probability for which DE converges, by bisection to ``tol``.

    DE is assumed monotone in ``eps``.  Returns the midpoint of the final
    bracket, so DE succeeds at ``result - tol`` and fails at ``result + tol``.
    """
    ensemble = build_layers(dd) if analyzer == "polarized" else None

    def ok(eps):
        return run_de(analyzer, dd, eps, max_iter, tau, grid, ensemble).converged

    if not ok(lo):
        raise BracketError(f"DE fails already at eps={lo}")
    if ok(hi):
        raise BracketError(f"DE succeeds at eps={hi}")
    while hi - lo >= tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
