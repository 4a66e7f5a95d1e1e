from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Literal

import numpy as np

from distgp.errors import InvalidParameter
from distgp.kernel.eigen import EigenSystem
from distgp.kernel.measures import InputMeasure, Seed, as_rng
from distgp.regression.data import Dataset
from distgp.util.log import get_logger

log = get_logger("distgp.harness.truth")

Predictor = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class SyntheticTruth:
    """f(x) = sum_{e <= E_truth} a_e phi_e(x) with a_e ~ N(0, lambda_e)."""

    eigen: EigenSystem = field(repr=False)
    coefficients: np.ndarray = field(repr=False)

    @property
    def E_truth(self) -> int:
        return int(self.coefficients.size)

    def __call__(self, X: Any) -> np.ndarray:
        return self.eigen.features(X, self.E_truth) @ self.coefficients

    def energy(self) -> float:
        """||f||^2 under mu, exact by orthonormality."""
        return float(self.coefficients @ self.coefficients)


def sample_truth(eigen: EigenSystem, E_truth: int, seed: Seed = None) -> SyntheticTruth:
    if E_truth < 1:
        raise InvalidParameter("E_truth must be >= 1")
    eigen = eigen.extended(E_truth)
    rng = as_rng(seed)
    a = np.sqrt(eigen.lambdas[:E_truth]) * rng.standard_normal(E_truth)
    return SyntheticTruth(eigen=eigen, coefficients=a)


def generate_dataset(
    truth: SyntheticTruth | Predictor,
    measure: InputMeasure,
    M: int,
    noise_variance: float,
    seed: Seed = None,
) -> Dataset:
    """M i.i.d. inputs from mu and outputs f(x) plus N(0, noise_variance) noise.

    Inputs are drawn before the noise from the same generator.
    """
    if M < 1:
        raise InvalidParameter("M must be >= 1")
    if noise_variance < 0:
        raise InvalidParameter("noise variance must be >= 0")
    rng = as_rng(seed)
    X = measure.sample(M, rng)
    y = np.asarray(truth(X), dtype=float).reshape(-1)
    if noise_variance > 0:
        y = y + np.sqrt(noise_variance) * rng.standard_normal(M)
    return Dataset(X, y, noise_variance)


def mse_under_mu(
    predictor: Predictor,
    truth: SyntheticTruth | Predictor,
    measure: InputMeasure,
    method: Literal["quadrature", "mc"] = "quadrature",
    n: int = 10_000,
    seed: Seed = None,
) -> float:
    """Estimate of the integral of (f - f_hat)^2 under mu.

    Quadrature grids beyond the node cap fall back to Monte Carlo with the same n.
    """
    if n < 1:
        raise InvalidParameter("n must be >= 1")
    if method == "quadrature":
        try:
            nodes, weights = measure.quadrature(n)
        except InvalidParameter as e:
            log.warning("quadrature unavailable (%s); using Monte Carlo", e.message)
            return mse_under_mu(predictor, truth, measure, "mc", n, seed)
        diff = np.asarray(truth(nodes)) - np.asarray(predictor(nodes))
        return float(weights @ diff**2)
    if method == "mc":
        X = measure.sample(n, seed)
        diff = np.asarray(truth(X)) - np.asarray(predictor(X))
        return float(np.mean(diff**2))
    raise InvalidParameter(f"unknown integration method: {method}")
