"""Non-asymptotic error bounds for the A and B estimators.

lower_bound is the best error any E-dimensional estimator can reach. bnd_A and bnd_B hold
with probability at least 1 - alpha when epsilon satisfies the feasibility condition
1 - eps + eps log eps >= (E k / M) log(c E / alpha), c = 1 for A and 2 for B.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Literal

import numpy as np
import pandas as pd
from scipy.optimize import brentq
from scipy.special import xlogy

from distgp.errors import InfeasibleConfiguration, InfeasibleEpsilon, InvalidParameter
from distgp.kernel.eigen import EigenSystem
from distgp.util.log import get_logger
from distgp.util.parallel import ordered_map

log = get_logger("distgp.bounds")

Which = Literal["A", "B"]

EPS_GRID_SIZE = 1000
EPS_GRID_FLOOR = 1e-8

CURVE_COLUMNS = ["E", "bnd_raw", "bnd_normalized", "lower_bound_normalized", "epsilon", "feasible"]


@dataclass(frozen=True)
class BoundQuery:
    E: int
    M: int
    alpha: float
    noise_variance: float
    eigen: EigenSystem = field(repr=False)

    def __post_init__(self) -> None:
        if not 0 < self.alpha < 1:
            raise InvalidParameter(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.E < 1 or self.M < 1:
            raise InvalidParameter("E and M must be >= 1")
        if self.noise_variance <= 0:
            raise InvalidParameter("noise variance must be > 0")

    @property
    def k(self) -> float:
        return self.eigen.k_bound

    def lambdas(self) -> np.ndarray:
        return self.eigen.lambdas_upto(self.E)


@dataclass(frozen=True)
class BoundReport:
    which: str
    value: float
    epsilon_used: float
    feasible: bool
    E: int
    M: int
    alpha: float
    components: Dict[str, float]
    tail_exact: bool = True

    def to_dict(self) -> Dict[str, object]:
        return {
            "which": self.which,
            "value": self.value,
            "epsilon": self.epsilon_used,
            "feasible": self.feasible,
            "E": self.E,
            "M": self.M,
            "alpha": self.alpha,
            "tail_exact": self.tail_exact,
            **self.components,
        }


def lower_bound(eigen: EigenSystem, E: int) -> float:
    """sum_{e > E} lambda_e: the error floor of any E-dimensional estimator."""
    return eigen.tail_sum(E)


def feasibility_lhs(eps: np.ndarray | float) -> np.ndarray:
    eps = np.asarray(eps, dtype=float)
    return 1.0 - eps + xlogy(eps, eps)


def feasibility_rhs(query: BoundQuery, which: Which) -> float:
    c = 1.0 if which == "A" else 2.0
    return query.E * query.k / query.M * np.log(c * query.E / query.alpha)


def epsilon_feasible(query: BoundQuery, eps: float, which: Which) -> bool:
    _check_which(which)
    if not 0 < eps <= 1:
        raise InvalidParameter(f"epsilon must lie in (0, 1], got {eps}")
    return bool(feasibility_lhs(eps) >= feasibility_rhs(query, which))


def epsilon_grid(n: int = EPS_GRID_SIZE, floor: float = EPS_GRID_FLOOR) -> np.ndarray:
    """n points log-spaced in 1 - eps over [floor, 1), plus eps = 1; ascending in eps."""
    one_minus = np.logspace(np.log10(floor), 0.0, n + 1)[:-1]
    return np.append(np.sort(1.0 - one_minus), 1.0)


def _components(query: BoundQuery, eps: np.ndarray, which: Which) -> Dict[str, np.ndarray]:
    lam = query.lambdas()
    M, s2, a, k = query.M, query.noise_variance, query.alpha, query.k
    tail = query.eigen.tail_sum(query.E)
    e = np.asarray(eps, dtype=float)[:, None]

    denom_var = e * M * lam + s2
    variance = s2 / (1 - a) * np.sum(lam / denom_var, axis=1)
    if which == "A":
        bias = k * M / (1 - a) * np.sum(lam**2 / denom_var**2, axis=1) * tail
        kappa_term = np.zeros_like(variance)
    else:
        bias = np.full_like(variance, k * M / (1 - a) * np.sum(lam**2 / (M * lam + s2) ** 2) * tail)
        e1 = e[:, 0]
        kappa = (e1 + s2 / (lam[0] * M)) ** -4 * (1 - e1) ** 2 * (2 - e1) ** 2 / (1 - a)
        kappa_term = kappa * (query.E * s2 / M + lam.sum())
    return {
        "bias_tail": bias,
        "variance": variance,
        "tail": np.full_like(variance, tail),
        "kappa": kappa_term,
    }


def _report(query: BoundQuery, eps: float, which: Which, comps: Dict[str, np.ndarray], i: int) -> BoundReport:
    parts = {name: float(v[i]) for name, v in comps.items()}
    if which == "A":
        parts.pop("kappa")
    value = sum(parts.values())
    return BoundReport(
        which=which,
        value=value,
        epsilon_used=float(eps),
        feasible=True,
        E=query.E,
        M=query.M,
        alpha=query.alpha,
        components=parts,
        tail_exact=query.eigen.tail_is_exact(query.E),
    )


def _bound(query: BoundQuery, eps: float, which: Which) -> BoundReport:
    if not epsilon_feasible(query, eps, which):
        raise InfeasibleEpsilon(
            f"epsilon={eps} violates the {which} feasibility condition at E={query.E}, M={query.M}",
            epsilon=eps,
            E=query.E,
            M=query.M,
        )
    if not query.eigen.tail_is_exact(query.E):
        log.warning("tail sum at E=%d is truncated; Bnd_%s is an under-estimate", query.E, which)
    comps = _components(query, np.array([eps]), which)
    return _report(query, eps, which, comps, 0)


def bnd_A(query: BoundQuery, eps: float) -> BoundReport:
    return _bound(query, eps, "A")


def bnd_B(query: BoundQuery, eps: float) -> BoundReport:
    return _bound(query, eps, "B")


def epsilon_boundary(query: BoundQuery, which: Which) -> float | None:
    """Largest feasible epsilon, or None when no epsilon in (0, 1] is feasible.

    feasibility_lhs falls from 1 at eps=0 to 0 at eps=1, so the feasible set is (0, boundary].
    """
    _check_which(which)
    rhs = feasibility_rhs(query, which)
    if rhs <= 0:
        return 1.0
    if rhs >= 1:
        return None
    root = float(brentq(lambda e: float(feasibility_lhs(e)) - rhs, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps))
    while root > 0 and feasibility_lhs(root) < rhs:
        root = float(np.nextafter(root, 0.0))
    return root if root > 0 else None


def optimize_epsilon(query: BoundQuery, which: Which, grid: np.ndarray | None = None) -> BoundReport:
    """Smallest bound over the feasible epsilons (ties go to the larger epsilon).

    Candidates are the feasible part of the grid plus the exact feasibility boundary, so the
    result does not move with the grid resolution when the optimum sits on the boundary.
    """
    _check_which(which)
    grid = epsilon_grid() if grid is None else np.asarray(grid, dtype=float)
    boundary = epsilon_boundary(query, which)
    if boundary is None:
        raise InfeasibleConfiguration(
            f"no feasible epsilon for Bnd_{which} at E={query.E}, M={query.M}, k={query.k}",
            E=query.E,
            M=query.M,
        )
    ok = (grid > 0) & (grid <= boundary)
    feasible_eps = np.unique(np.append(grid[ok], boundary))
    comps = _components(query, feasible_eps, which)
    total = sum(v for name, v in comps.items() if which == "B" or name != "kappa")
    best = int(np.flatnonzero(total == total.min())[-1])
    log.debug(
        "Bnd_%s at E=%d: %d/%d feasible grid epsilons, boundary %.9g, best %.9g",
        which, query.E, int(ok.sum()), grid.size, boundary, feasible_eps[best],
    )
    return _report(query, feasible_eps[best], which, comps, best)


def _row(query: BoundQuery, which: Which, norm: float, on_infeasible: str) -> Dict[str, object]:
    lb = lower_bound(query.eigen, query.E) / norm
    try:
        rep = optimize_epsilon(query, which)
    except InfeasibleConfiguration:
        if on_infeasible == "raise":
            raise
        return {"E": query.E, "bnd_raw": np.nan, "bnd_normalized": np.nan,
                "lower_bound_normalized": lb, "epsilon": np.nan, "feasible": False}
    return {
        "E": query.E,
        "bnd_raw": rep.value,
        "bnd_normalized": rep.value / norm,
        "lower_bound_normalized": lb,
        "epsilon": rep.epsilon_used,
        "feasible": True,
    }


def bound_curve(
    eigen: EigenSystem,
    E_values: Iterable[int],
    M: int,
    alpha: float,
    noise_variance: float,
    which: Which,
    on_infeasible: Literal["raise", "mark"] = "raise",
    workers: int = 1,
) -> pd.DataFrame:
    """Optimized bound and lower bound over a range of E, normalized by the prior variance."""
    _check_which(which)
    E_values = [int(e) for e in E_values]
    eigen = eigen.extended(max(E_values))
    norm = eigen.tail_sum(0)
    queries = [BoundQuery(E, M, alpha, noise_variance, eigen) for E in E_values]
    rows = ordered_map(lambda q: _row(q, which, norm, on_infeasible), queries, workers)
    return pd.DataFrame(rows, columns=CURVE_COLUMNS)


def bound_vs_M(
    eigen: EigenSystem,
    E: int,
    M_values: Iterable[int],
    alpha: float,
    noise_variance: float,
    eps: float,
    which: Which,
) -> pd.DataFrame:
    """Bound at a fixed epsilon over a range of M; infeasible rows are marked, not raised."""
    rows: List[Dict[str, object]] = []
    for M in M_values:
        q = BoundQuery(E, int(M), alpha, noise_variance, eigen)
        try:
            rep = _bound(q, eps, which)
            rows.append({"M": int(M), "bnd_raw": rep.value, "epsilon": eps, "feasible": True})
        except InfeasibleEpsilon:
            rows.append({"M": int(M), "bnd_raw": np.nan, "epsilon": eps, "feasible": False})
    return pd.DataFrame(rows, columns=["M", "bnd_raw", "epsilon", "feasible"])


def _check_which(which: str) -> None:
    if which not in ("A", "B"):
        raise InvalidParameter(f"which must be 'A' or 'B', got {which!r}")
