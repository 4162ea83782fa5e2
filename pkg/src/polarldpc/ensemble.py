"""Degree distributions and layered (polarized) ensembles.

A :class:`DegreeDistribution` holds the edge-perspective polynomials
lambda(x) and rho(x).  :func:`build_layers` pairs the k-th highest variable
degree with the k-th lowest check degree and splits the edge mass between
layers by top-down water-filling, producing the per-degree cross
polynomials consumed by polarized density evolution.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

SUM_TOL = 1e-9
INPUT_TOL = 1e-3
_MASS_EPS = 1e-12

BUNDLED = ("codeA", "codeB", "codeC", "codeD", "layers3", "layers4", "regular36")


class InfeasibleEnsembleError(ValueError):
    """Raised when an ensemble cannot be realized (rate <= 0, unreachable sockets, ...)."""

    def __init__(self, message: str, layer: int | None = None):
        super().__init__(message)
        self.layer = layer


def _normalize_terms(terms, side: str, tol: float) -> tuple[tuple[int, float], ...]:
    pairs = sorted((int(d), float(f)) for d, f in terms)
    if not pairs:
        raise ValueError(f"{side} side has no terms")
    degrees = [d for d, _ in pairs]
    if len(set(degrees)) != len(degrees):
        raise ValueError(f"{side} degrees are not distinct: {degrees}")
    if any(d < 2 for d in degrees):
        raise ValueError(f"{side} degrees must be at least 2: {degrees}")
    if any(f <= 0 for _, f in pairs):
        raise ValueError(f"{side} edge fractions must be strictly positive")
    total = sum(f for _, f in pairs)
    if abs(total - 1.0) > tol:
        raise ValueError(f"{side} edge fractions sum to {total:.6g}, expected 1 within {tol:g}")
    return tuple((d, f / total) for d, f in pairs)


@dataclass(frozen=True)
class DegreeDistribution:
    """Edge-perspective degree polynomials.

    ``variable_terms`` and ``check_terms`` are tuples of ``(degree, edge_fraction)``
    sorted by degree.  Use :meth:`from_terms` to build one from rounded table
    values; the constructor itself insists on exact normalization.
    """

    variable_terms: tuple[tuple[int, float], ...]
    check_terms: tuple[tuple[int, float], ...]

    def __post_init__(self):
        for side, terms in (("variable", self.variable_terms), ("check", self.check_terms)):
            degrees = [d for d, _ in terms]
            if not terms:
                raise ValueError(f"{side} side has no terms")
            if any(d < 2 for d, _ in terms):
                raise ValueError(f"{side} degrees must be at least 2")
            if degrees != sorted(set(degrees)):
                raise ValueError(f"{side} degrees must be distinct and sorted: {degrees}")
            if any(f <= 0 for _, f in terms):
                raise ValueError(f"{side} edge fractions must be strictly positive")
            total = sum(f for _, f in terms)
            if abs(total - 1.0) > SUM_TOL:
                raise ValueError(f"{side} edge fractions sum to {total!r}")

    @classmethod
    def from_terms(cls, variable, check, tol: float = INPUT_TOL) -> "DegreeDistribution":
        """Build from ``[(degree, fraction), ...]`` lists, renormalizing each side."""
        return cls(_normalize_terms(variable, "variable", tol), _normalize_terms(check, "check", tol))

    @classmethod
    def regular(cls, dv: int, dc: int) -> "DegreeDistribution":
        return cls(((dv, 1.0),), ((dc, 1.0),))

    @classmethod
    def from_dict(cls, data: dict) -> "DegreeDistribution":
        try:
            return cls.from_terms(data["variable"], data["check"])
        except KeyError as exc:
            raise ValueError(f"ensemble spec is missing the {exc.args[0]!r} key") from None

    def to_dict(self) -> dict:
        return {
            "variable": [[d, f] for d, f in self.variable_terms],
            "check": [[d, f] for d, f in self.check_terms],
        }

    @property
    def variable_degrees(self) -> np.ndarray:
        return np.array([d for d, _ in self.variable_terms], dtype=np.int64)

    @property
    def variable_fractions(self) -> np.ndarray:
        return np.array([f for _, f in self.variable_terms])

    @property
    def check_degrees(self) -> np.ndarray:
        return np.array([d for d, _ in self.check_terms], dtype=np.int64)

    @property
    def check_fractions(self) -> np.ndarray:
        return np.array([f for _, f in self.check_terms])

    @property
    def max_variable_degree(self) -> int:
        return self.variable_terms[-1][0]

    @property
    def max_check_degree(self) -> int:
        return self.check_terms[-1][0]


def ensemble_source_bytes(source: str | Path) -> bytes:
    """Raw bytes of an ensemble spec file or of the bundled spec with that name."""
    path = Path(source)
    if path.is_file():
        return path.read_bytes()
    name = path.name[:-5] if path.name.endswith(".json") else path.name
    if name not in BUNDLED:
        raise FileNotFoundError(f"no ensemble file {str(source)!r} and no bundled ensemble {name!r}")
    return resources.files("polarldpc.data").joinpath(f"{name}.json").read_bytes()


def load_ensemble(source: str | Path) -> DegreeDistribution:
    """Load an ensemble spec JSON file, or a bundled one by name (``codeA``, ``codeA.json``...)."""
    try:
        data = json.loads(ensemble_source_bytes(source).decode("ascii"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ValueError(f"{source}: invalid ensemble JSON ({exc})") from None
    return DegreeDistribution.from_dict(data)


def design_rate(dd: DegreeDistribution) -> float:
    """Design rate ``1 - (sum rho_j / j) / (sum lambda_i / i)``.

    Raises :class:`InfeasibleEnsembleError` for a negative rate.  A rate that is
    zero up to rounding is returned as ``0.0``.
    """
    var_side = sum(f / d for d, f in dd.variable_terms)
    chk_side = sum(f / d for d, f in dd.check_terms)
    rate = 1.0 - chk_side / var_side
    if abs(rate) < 1e-12:
        return 0.0
    if rate < 0:
        raise InfeasibleEnsembleError(f"design rate {rate:.6g} is not positive")
    return rate


def node_fractions(dd: DegreeDistribution) -> tuple[dict[int, float], dict[int, float]]:
    """Node-perspective fractions ``(lambda_i / i) / sum_k (lambda_k / k)`` for both sides."""

    def convert(terms):
        raw = {d: f / d for d, f in terms}
        total = sum(raw.values())
        return {d: v / total for d, v in raw.items()}

    return convert(dd.variable_terms), convert(dd.check_terms)


@dataclass(frozen=True, eq=False)
class LayeredEnsemble:
    """Layers plus the cross polynomials of a polarized ensemble.

    Rows and columns follow layer order: ``var_degrees`` descends and
    ``check_degrees`` ascends, so index ``k`` on either axis is layer ``k``.
    ``cross_rho[i, j]`` is the probability that an edge of variable class ``i``
    lands on check class ``j``; ``cross_lambda[j, i]`` is the probability that an
    edge of check class ``j`` comes from variable class ``i``.
    """

    var_degrees: tuple[int, ...]
    check_degrees: tuple[int, ...]
    lam: np.ndarray
    rho: np.ndarray
    cross_rho: np.ndarray
    cross_lambda: np.ndarray
    base: DegreeDistribution
    layered: bool = True

    def __post_init__(self):
        for arr in (self.lam, self.rho, self.cross_rho, self.cross_lambda):
            arr.setflags(write=False)
        nv, nc = len(self.var_degrees), len(self.check_degrees)
        if self.cross_rho.shape != (nv, nc) or self.cross_lambda.shape != (nc, nv):
            raise ValueError("cross matrix shapes do not match the degree lists")
        if np.any(self.cross_rho < 0) or np.any(self.cross_lambda < 0):
            raise ValueError("cross matrices must be non-negative")
        if not np.allclose(self.cross_rho.sum(axis=1), 1.0, atol=SUM_TOL, rtol=0):
            raise ValueError("cross_rho rows must sum to 1")
        if not np.allclose(self.cross_lambda.sum(axis=1), 1.0, atol=SUM_TOL, rtol=0):
            raise ValueError("cross_lambda rows must sum to 1")
        balance = self.lam[:, None] * self.cross_rho - (self.rho[:, None] * self.cross_lambda).T
        if np.max(np.abs(balance)) > SUM_TOL:
            raise ValueError("edge balance lambda_i rho_ij = rho_j lambda_ji violated")
        if self.layered:
            if nv != nc:
                raise ValueError("a layered ensemble needs as many variable as check classes")
            if list(self.var_degrees) != sorted(self.var_degrees, reverse=True) or len(set(self.var_degrees)) != nv:
                raise ValueError("layer variable degrees must strictly descend")
            if list(self.check_degrees) != sorted(self.check_degrees) or len(set(self.check_degrees)) != nc:
                raise ValueError("layer check degrees must strictly ascend")
            upper = np.tril(self.cross_rho, k=-1)
            if np.any(upper > 0):
                raise ValueError("an edge reaches a check layer above its variable layer")

    @property
    def layers(self) -> list[tuple[int, int]]:
        return list(zip(self.var_degrees, self.check_degrees))

    @property
    def n_layers(self) -> int:
        return len(self.var_degrees)

    def edge_mass(self) -> np.ndarray:
        """Edge-type fractions ``lambda_i * rho_ij`` (rows: variable classes)."""
        return self.lam[:, None] * self.cross_rho

    def rho_of(self, var_degree: int, check_degree: int) -> float:
        return float(self.cross_rho[self.var_degrees.index(var_degree), self.check_degrees.index(check_degree)])

    def lambda_of(self, check_degree: int, var_degree: int) -> float:
        return float(self.cross_lambda[self.check_degrees.index(check_degree), self.var_degrees.index(var_degree)])

    @classmethod
    def random_mixture(cls, dd: DegreeDistribution) -> "LayeredEnsemble":
        """Degree-independent cross matrices (``rho_ij = rho_j``), i.e. a standard ensemble."""
        var_deg = tuple(int(d) for d in dd.variable_degrees[::-1])
        lam = dd.variable_fractions[::-1].copy()
        rho = dd.check_fractions.copy()
        cross_rho = np.tile(rho, (len(lam), 1))
        cross_lambda = np.tile(lam, (len(rho), 1))
        return cls(var_deg, tuple(int(d) for d in dd.check_degrees), lam, rho, cross_rho, cross_lambda, dd, layered=False)


def build_layers(dd: DegreeDistribution) -> LayeredEnsemble:
    """Pair degrees into layers and water-fill the inter-layer edge mass.

    Variable layer ``k`` pours its edge mass into check layer ``k`` first and
    spills the overflow into the layers below, in order.  Check sockets of
    layer ``k`` left empty once variable layer ``k`` is poured are unreachable.
    """
    if len(dd.variable_terms) != len(dd.check_terms):
        raise InfeasibleEnsembleError(
            f"{len(dd.variable_terms)} variable degrees cannot be paired with {len(dd.check_terms)} check degrees"
        )
    var_deg = tuple(int(d) for d in dd.variable_degrees[::-1])
    lam = dd.variable_fractions[::-1].copy()
    chk_deg = tuple(int(d) for d in dd.check_degrees)
    rho = dd.check_fractions.copy()
    n = len(var_deg)

    capacity = rho.copy()
    mass = np.zeros((n, n))
    for k in range(n):
        budget = lam[k]
        for j in range(k, n):
            if budget <= _MASS_EPS:
                break
            take = min(budget, capacity[j])
            mass[k, j] += take
            capacity[j] -= take
            budget -= take
        if budget > _MASS_EPS:
            raise InfeasibleEnsembleError(f"layer {k}: variable edge mass {budget:.3g} has no check socket left", layer=k)
        if capacity[k] > _MASS_EPS:
            raise InfeasibleEnsembleError(
                f"layer {k}: check sockets {capacity[k]:.3g} unreachable from layers at or above it", layer=k
            )
    cross_rho = mass / lam[:, None]
    cross_lambda = mass.T / rho[:, None]
    cross_rho /= cross_rho.sum(axis=1, keepdims=True)
    cross_lambda /= cross_lambda.sum(axis=1, keepdims=True)
    return LayeredEnsemble(var_deg, chk_deg, lam, rho, cross_rho, cross_lambda, dd)


def layer_of_degrees(ensemble: LayeredEnsemble) -> tuple[dict[int, int], dict[int, int]]:
    """Maps variable degree -> layer and check degree -> layer."""
    return (
        {d: k for k, d in enumerate(ensemble.var_degrees)},
        {d: k for k, d in enumerate(ensemble.check_degrees)},
    )


def from_cross_matrix(
    dd: DegreeDistribution, cross_rho: Sequence[Sequence[float]], layered: bool = True
) -> LayeredEnsemble:
    """Build an ensemble from an explicit ``cross_rho`` in layer order (edge balance fills ``cross_lambda``)."""
    var_deg = tuple(int(d) for d in dd.variable_degrees[::-1])
    lam = dd.variable_fractions[::-1].copy()
    rho = dd.check_fractions.copy()
    cr = np.array(cross_rho, dtype=float)
    mass = lam[:, None] * cr
    cl = mass.T / rho[:, None]
    return LayeredEnsemble(var_deg, tuple(int(d) for d in dd.check_degrees), lam, rho, cr, cl, dd, layered=layered)
