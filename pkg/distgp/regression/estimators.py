from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Dict

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from distgp.errors import InvalidParameter, NumericalFailure, SingularNormalEquations
from distgp.kernel.basis import BasisSpec, kl_basis, leading
from distgp.kernel.eigen import EigenSystem
from distgp.kernel.kernels import KernelSpec, as_points
from distgp.regression.data import Dataset
from distgp.regression.stats import SufficientStatistics
from distgp.util.log import get_logger

log = get_logger("distgp.regression")

# smallest squared Cholesky pivot, relative to the largest diagonal entry
TOL_PIVOT = 1e-12


def spd_solve(A: np.ndarray, b: np.ndarray, what: str = "normal equations") -> np.ndarray:
    """Solve A x = b for symmetric positive definite A via Cholesky, never forming A^-1."""
    A = 0.5 * (A + A.T)
    scale = float(np.max(np.abs(np.diag(A)))) if A.size else 0.0
    if scale <= 0 or not np.all(np.isfinite(A)):
        raise SingularNormalEquations(f"{what} are singular")
    try:
        c, lower = cho_factor(A, lower=True, check_finite=False)
    except LinAlgError as e:
        raise SingularNormalEquations(f"{what} are not positive definite: {e}") from e
    pivots = np.diag(c) ** 2
    if np.min(pivots) < TOL_PIVOT * scale:
        raise SingularNormalEquations(
            f"{what} are singular within tolerance",
            min_pivot=float(np.min(pivots)),
        )
    return cho_solve((c, lower), b, check_finite=False)


@dataclass(frozen=True, eq=False)
class CoefficientEstimate:
    a_hat: np.ndarray
    basis: BasisSpec = field(repr=False)
    gamma: float
    E_prime: int
    estimator: str = "A"

    @property
    def E(self) -> int:
        return int(self.a_hat.size)

    def scaled(self, factor: float) -> "CoefficientEstimate":
        return replace(self, a_hat=factor * self.a_hat)

    def to_json(self) -> Dict[str, Any]:
        return {
            "basis_id": self.basis.basis_id,
            "estimator": self.estimator,
            "gamma": self.gamma,
            "E_prime": self.E_prime,
            "a_hat": self.a_hat.tolist(),
        }


def _check_gamma(gamma: float, noise_variance: float) -> None:
    if gamma < 0 or not np.isfinite(gamma):
        raise InvalidParameter(f"gamma must be a finite value >= 0, got {gamma}")
    if noise_variance < 0:
        raise InvalidParameter("noise variance must be >= 0")


def estimate_A(
    stats: SufficientStatistics,
    basis: BasisSpec,
    noise_variance: float,
    gamma: float,
) -> CoefficientEstimate:
    """a_hat = (V + gamma sigma^2 / M P)^-1 z with P the basis prior precision."""
    _check_gamma(gamma, noise_variance)
    if basis.E != stats.E:
        raise InvalidParameter(f"basis has E={basis.E}, statistics have E={stats.E}")
    A = stats.V + (gamma * noise_variance / stats.M) * basis.prior
    a_hat = spd_solve(A, stats.z)
    return CoefficientEstimate(a_hat=a_hat, basis=basis, gamma=gamma, E_prime=stats.E, estimator="A")


def estimate_B(
    stats: SufficientStatistics,
    eigen: EigenSystem | BasisSpec,
    noise_variance: float,
    gamma: float,
    E_prime: int | None = None,
) -> CoefficientEstimate:
    """Estimator that replaces V by its expectation; only z is used.

    For eigenfunction bases a_hat_e = z_e / (1 + gamma sigma^2 / (M lambda_e)) for e <= E'.
    For kernel-section and Nystrom bases the leading E' block of
    (E_bar + gamma sigma^2 / M P) is solved against the first E' entries of z.
    """
    E = stats.E
    E_prime = E if E_prime is None else int(E_prime)
    basis = kl_basis(eigen, E) if isinstance(eigen, EigenSystem) else eigen
    a_hat = shrink_B(stats.z, stats.M, basis, noise_variance, gamma, E_prime)
    return CoefficientEstimate(a_hat=a_hat, basis=basis, gamma=gamma, E_prime=E_prime, estimator="B")


def shrink_B(
    z: np.ndarray,
    M: int,
    basis: BasisSpec,
    noise_variance: float,
    gamma: float,
    E_prime: int,
) -> np.ndarray:
    """Coefficients of the B estimator from z alone; entries past E' are zero."""
    _check_gamma(gamma, noise_variance)
    E = int(np.size(z))
    if basis.E != E:
        raise InvalidParameter(f"basis has E={basis.E}, statistics have E={E}")
    if not 0 <= E_prime <= E:
        raise InvalidParameter(f"E' must lie in [0, {E}], got {E_prime}")
    a_hat = np.zeros(E)
    c = gamma * noise_variance / M
    if basis.kind == "kl_eigen":
        lam = basis.eigen.lambdas_upto(E)[:E_prime]
        a_hat[:E_prime] = z[:E_prime] / (1.0 + c / lam)
    elif E_prime > 0:
        if basis.expected_gram is None:
            raise InvalidParameter(f"{basis.kind} basis needs an expected gram for estimate_B")
        A = leading(basis.expected_gram, E_prime) + c * leading(basis.prior, E_prime)
        a_hat[:E_prime] = spd_solve(A, z[:E_prime], what="leading block")
    return a_hat


@dataclass(frozen=True, eq=False)
class MapPredictor:
    """x -> K(x, X) (K + gamma sigma^2 I)^-1 y."""

    kernel: KernelSpec
    inputs: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def __call__(self, X: Any) -> np.ndarray:
        return self.kernel(as_points(X, self.kernel.dim), self.inputs) @ self.weights


def estimate_MAP(data: Dataset, kernel: KernelSpec, gamma: float) -> MapPredictor:
    """Full posterior mean under the prior f ~ GP(0, K / gamma); O(M^3)."""
    _check_gamma(gamma, data.noise_variance)
    K = kernel(data.inputs, data.inputs)
    A = K + gamma * data.noise_variance * np.eye(data.M)
    try:
        w = spd_solve(A, data.outputs, what="kernel matrix plus noise")
    except SingularNormalEquations as e:
        raise NumericalFailure(e.message, **e.details) from e
    log.debug("MAP predictor fitted on M=%d samples", data.M)
    return MapPredictor(kernel=kernel, inputs=data.inputs, weights=w)


def predict(est: CoefficientEstimate, x: Any) -> float | np.ndarray:
    """sum_e a_hat_e phi_e(x); a float for a single point, an array for a batch."""
    values = est.basis.features(x) @ est.a_hat
    if np.ndim(x) == 0 or (est.basis.dim > 1 and np.ndim(x) == 1):
        return float(values[0])
    return values
