"""Stein unbiased risk estimates for the A and B estimators.

Both objectives are computed on the projected model z = G^T y / M, whose noise covariance
is (sigma^2 / M) V. J = ||z - z_hat||^2 + dof, where dof is twice the trace of the smoother
times the noise covariance (A) or its expectation with V replaced by E[V] (B).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from distgp.errors import InvalidParameter, SingularNormalEquations, TuningFailed
from distgp.kernel.basis import BasisSpec, kl_basis, leading
from distgp.kernel.eigen import EigenSystem
from distgp.regression.estimators import shrink_B, spd_solve
from distgp.regression.stats import SufficientStatistics
from distgp.util.log import get_logger

log = get_logger("distgp.tuning")

GridKey = Tuple[float, int]

TRACE_COLUMNS = ["gamma", "E_prime", "residual", "dof", "J"]


@dataclass(frozen=True)
class TuningGrid:
    """Candidate scale factors Gamma and truncation levels Omega."""

    gammas: Tuple[float, ...]
    truncations: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        g = tuple(float(v) for v in self.gammas)
        if not g:
            raise InvalidParameter("gamma grid must be nonempty")
        if any(v < 0 or not np.isfinite(v) for v in g):
            raise InvalidParameter("gamma grid values must be finite and >= 0")
        object.__setattr__(self, "gammas", g)
        object.__setattr__(self, "truncations", tuple(int(e) for e in self.truncations))

    @classmethod
    def log_spaced(cls, lo: float, hi: float, n: int, truncations: Iterable[int] = ()) -> "TuningGrid":
        return cls(tuple(np.logspace(np.log10(lo), np.log10(hi), n)), tuple(truncations))

    def check_truncations(self, E: int) -> None:
        if not self.truncations:
            raise InvalidParameter("truncation grid must be nonempty for the B estimator")
        bad = [e for e in self.truncations if not 1 <= e <= E]
        if bad:
            raise InvalidParameter(f"truncation levels outside [1, {E}]: {bad}")

    def pairs(self) -> List[GridKey]:
        return [(g, e) for e in self.truncations for g in self.gammas]

    @property
    def size(self) -> int:
        return len(self.gammas) * max(1, len(self.truncations))


@dataclass(frozen=True)
class SureEvaluation:
    J: float
    residual: float
    dof: float
    gamma: float
    E_prime: Optional[int] = None

    def to_row(self) -> Dict[str, float]:
        return {"gamma": self.gamma, "E_prime": self.E_prime, "residual": self.residual, "dof": self.dof, "J": self.J}


def _prior_matrix(prior: np.ndarray | BasisSpec) -> np.ndarray:
    return prior.prior if isinstance(prior, BasisSpec) else np.asarray(prior, dtype=float)


def sure_risk_A(
    stats: SufficientStatistics,
    prior: np.ndarray | BasisSpec,
    noise_variance: float,
    gamma: float,
) -> SureEvaluation:
    """J_A(gamma) with smoother S = V (V + gamma sigma^2 / M P)^-1."""
    P = _prior_matrix(prior)
    V, z, M = stats.V, stats.z, stats.M
    A = V + (gamma * noise_variance / M) * P
    # A^-1 V is S^T since A and V are symmetric
    St = spd_solve(A, V)
    z_hat = St.T @ z
    residual = float(np.sum((z - z_hat) ** 2))
    dof = float(2.0 * noise_variance / M * np.trace(V @ St))
    return SureEvaluation(J=residual + dof, residual=residual, dof=dof, gamma=float(gamma), E_prime=stats.E)


def sure_trace_A(
    stats: SufficientStatistics,
    prior: np.ndarray | BasisSpec,
    noise_variance: float,
    gammas: Sequence[float],
) -> List[SureEvaluation]:
    out: List[SureEvaluation] = []
    for g in gammas:
        try:
            out.append(sure_risk_A(stats, prior, noise_variance, g))
        except SingularNormalEquations as e:
            log.warning("J_A skipped at gamma=%g: %s", g, e.message)
    return out


def select_A(evals: Sequence[SureEvaluation]) -> SureEvaluation:
    """Smallest J; ties go to the larger gamma."""
    if not evals:
        raise TuningFailed("no grid point could be evaluated")
    return min(evals, key=lambda ev: (ev.J, -ev.gamma))


def select_B(evals: Sequence[SureEvaluation]) -> SureEvaluation:
    """Smallest J; ties go to the smaller E', then the larger gamma."""
    if not evals:
        raise TuningFailed("no grid point could be evaluated")
    return min(evals, key=lambda ev: (ev.J, ev.E_prime, -ev.gamma))


def tune_A(
    stats: SufficientStatistics,
    prior: np.ndarray | BasisSpec,
    noise_variance: float,
    gammas: Sequence[float] | TuningGrid,
) -> Tuple[float, SureEvaluation]:
    if isinstance(gammas, TuningGrid):
        gammas = gammas.gammas
    if len(gammas) == 0:
        raise InvalidParameter("gamma grid must be nonempty")
    best = select_A(sure_trace_A(stats, prior, noise_variance, gammas))
    log.debug("tune_A picked gamma=%g (J=%.6g)", best.gamma, best.J)
    return best.gamma, best


def coefficient_family_B(
    z: np.ndarray,
    M: int,
    basis: BasisSpec,
    noise_variance: float,
    grid: TuningGrid,
) -> Dict[GridKey, np.ndarray]:
    """a_hat(gamma, E') for every grid pair, computed from z only."""
    grid.check_truncations(basis.E)
    return {
        (g, e): shrink_B(z, M, basis, noise_variance, g, e)
        for g, e in grid.pairs()
    }


def predicted_z(V: np.ndarray, family: Mapping[GridKey, np.ndarray]) -> Dict[GridKey, np.ndarray]:
    """z_hat(gamma, E') = V a_hat(gamma, E')."""
    return {key: V @ a for key, a in family.items()}


def _lambdas(eigen: EigenSystem | BasisSpec, E: int) -> np.ndarray:
    if isinstance(eigen, BasisSpec):
        if eigen.kind != "kl_eigen":
            raise InvalidParameter("sure_risk_B needs an eigenfunction basis")
        eigen = eigen.eigen
    return eigen.lambdas_upto(E)


def sure_risk_B(
    z: np.ndarray,
    z_hat: np.ndarray,
    eigen: EigenSystem | BasisSpec,
    noise_variance: float,
    M: int,
    gamma: float,
    E_prime: int,
) -> SureEvaluation:
    """J_B with the expected dof 2 sigma^2 / M sum_{e <= E'} lambda_e / (lambda_e + gamma sigma^2 / M)."""
    z = np.asarray(z, dtype=float)
    if not 0 <= E_prime <= z.size:
        raise InvalidParameter(f"E' must lie in [0, {z.size}], got {E_prime}")
    lam = _lambdas(eigen, max(E_prime, 1))[:E_prime]
    c = gamma * noise_variance / M
    residual = float(np.sum((z - np.asarray(z_hat, dtype=float)) ** 2))
    dof = float(2.0 * noise_variance / M * np.sum(lam / (lam + c)))
    return SureEvaluation(J=residual + dof, residual=residual, dof=dof, gamma=float(gamma), E_prime=int(E_prime))


def sure_trace_B(
    z: np.ndarray,
    V: Optional[np.ndarray],
    eigen: EigenSystem | BasisSpec,
    noise_variance: float,
    M: int,
    grid: TuningGrid,
    z_hat: Optional[Mapping[GridKey, np.ndarray]] = None,
) -> List[SureEvaluation]:
    """J_B over the grid. z_hat, when given (e.g. from a consensus run), replaces V a_hat."""
    z = np.asarray(z, dtype=float)
    basis = kl_basis(eigen, z.size) if isinstance(eigen, EigenSystem) else eigen
    if basis.kind != "kl_eigen":
        return sure_sections_trace(
            z, V, basis.expected_gram, basis.prior, noise_variance, M, grid, z_hat
        )
    if z_hat is None:
        if V is None:
            raise InvalidParameter("sure_trace_B needs V or a z_hat family")
        z_hat = predicted_z(V, coefficient_family_B(z, M, basis, noise_variance, grid))
    else:
        grid.check_truncations(basis.E)
    return [
        sure_risk_B(z, z_hat[(g, e)], basis, noise_variance, M, g, e)
        for g, e in grid.pairs()
    ]


def tune_B(
    z: np.ndarray,
    V: Optional[np.ndarray],
    eigen: EigenSystem | BasisSpec,
    noise_variance: float,
    M: int,
    grid: TuningGrid,
    z_hat: Optional[Mapping[GridKey, np.ndarray]] = None,
) -> Tuple[float, int, SureEvaluation]:
    best = select_B(sure_trace_B(z, V, eigen, noise_variance, M, grid, z_hat))
    log.debug("tune_B picked gamma=%g, E'=%d (J=%.6g)", best.gamma, best.E_prime, best.J)
    return best.gamma, int(best.E_prime), best


def _sections_system(gram: np.ndarray, prior: np.ndarray, c: float, E_prime: int) -> np.ndarray:
    return leading(gram, E_prime) + c * leading(prior, E_prime)


def sections_family_B(
    z: np.ndarray,
    gram: np.ndarray,
    prior: np.ndarray,
    noise_variance: float,
    M: int,
    grid: TuningGrid,
) -> Dict[GridKey, np.ndarray]:
    """a_hat(gamma, E') = [I; 0] ([E_bar]_E' + gamma sigma^2 / M [P]_E')^-1 [z]_E'."""
    E = int(np.size(z))
    grid.check_truncations(E)
    out: Dict[GridKey, np.ndarray] = {}
    for g, e in grid.pairs():
        a = np.zeros(E)
        A = _sections_system(gram, prior, g * noise_variance / M, e)
        a[:e] = spd_solve(A, z[:e], what=f"leading {e}x{e} block")
        out[(g, e)] = a
    return out


def sure_sections_trace(
    z: np.ndarray,
    V: Optional[np.ndarray],
    gram: Optional[np.ndarray],
    prior: np.ndarray,
    noise_variance: float,
    M: int,
    grid: TuningGrid,
    z_hat: Optional[Mapping[GridKey, np.ndarray]] = None,
) -> List[SureEvaluation]:
    if gram is None:
        raise InvalidParameter("kernel-section SURE needs the expected gram")
    z = np.asarray(z, dtype=float)
    if z_hat is None:
        if V is None:
            raise InvalidParameter("kernel-section SURE needs V or a z_hat family")
        z_hat = predicted_z(V, sections_family_B(z, gram, prior, noise_variance, M, grid))
    else:
        grid.check_truncations(z.size)
    out: List[SureEvaluation] = []
    for g, e in grid.pairs():
        A = _sections_system(gram, prior, g * noise_variance / M, e)
        S = spd_solve(A, leading(gram, e), what=f"leading {e}x{e} block").T
        residual = float(np.sum((z - z_hat[(g, e)]) ** 2))
        dof = float(2.0 * noise_variance / M * np.trace(S))
        out.append(SureEvaluation(J=residual + dof, residual=residual, dof=dof, gamma=g, E_prime=e))
    return out


def sure_kernel_sections_B(
    z: np.ndarray,
    V: Optional[np.ndarray],
    gram: np.ndarray,
    prior: np.ndarray,
    noise_variance: float,
    M: int,
    grid: TuningGrid,
    z_hat: Optional[Mapping[GridKey, np.ndarray]] = None,
) -> Tuple[float, int, SureEvaluation]:
    """Joint (gamma, E') selection for kernel-section bases; Nystrom bases pass D_E as the prior."""
    best = select_B(sure_sections_trace(z, V, gram, prior, noise_variance, M, grid, z_hat))
    return best.gamma, int(best.E_prime), best


def trace_frame(evals: Iterable[SureEvaluation]) -> pd.DataFrame:
    return pd.DataFrame([ev.to_row() for ev in evals], columns=TRACE_COLUMNS)


def write_trace(evals: Iterable[SureEvaluation], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    df = trace_frame(evals)
    df.to_csv(path, index=False)
    log.info("wrote SURE trace (%d rows) to %s", len(df), path)
    return path
