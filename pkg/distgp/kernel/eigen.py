from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Literal, Optional

import numpy as np
from scipy.linalg import eigh
from scipy.special import polygamma

from distgp.errors import DegenerateKernel, InvalidParameter
from distgp.kernel.kernels import TOL_PSD, KernelSpec, as_points, sinusoids
from distgp.kernel.measures import InputMeasure, Seed, as_rng
from distgp.util.log import get_logger

log = get_logger("distgp.kernel.eigen")

FeatureFn = Callable[[np.ndarray, int], np.ndarray]


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Sorted eigenpairs (lambda_e, phi_e) of a kernel under an input measure.

    `features(X, E)` returns the (n, E) matrix [phi_1(x) ... phi_E(x)]. `k_bound` bounds
    phi_e(x)^2 uniformly. `tail_sum(E)` is sum_{e > E} lambda_e; it is exact when an
    analytic tail is known and a truncated lower estimate otherwise.
    """

    family: str
    lambdas: np.ndarray
    k_bound: float
    feature_fn: FeatureFn = field(repr=False)
    dim: int = 1
    params: Dict[str, Any] = field(default_factory=dict)
    analytic_tail: Optional[Callable[[int], float]] = field(default=None, repr=False)
    finite_rank: bool = False
    points: Optional[np.ndarray] = field(default=None, repr=False)
    extend: Optional[Callable[[int], "EigenSystem"]] = field(default=None, repr=False)

    @property
    def E_max(self) -> int:
        return int(self.lambdas.size)

    def features(self, X: Any, E: int | None = None) -> np.ndarray:
        E = self.E_max if E is None else E
        if E > self.E_max:
            raise InvalidParameter(f"requested {E} eigenfunctions, only {self.E_max} available")
        return self.feature_fn(as_points(X, self.dim), E)

    def phi(self, e: int, x: Any) -> np.ndarray:
        """Evaluate the e-th eigenfunction (1-based) at x."""
        return self.features(x, e)[:, e - 1]

    def tail_is_exact(self, E: int) -> bool:
        return self.analytic_tail is not None or self.finite_rank

    def tail_sum(self, E: int) -> float:
        if E < 0:
            raise InvalidParameter("tail_sum needs E >= 0")
        if self.analytic_tail is not None:
            return float(self.analytic_tail(E))
        if not self.finite_rank:
            log.debug("tail_sum(%d) truncated at E_max=%d (lower estimate)", E, self.E_max)
        return float(self.lambdas[E:].sum())

    def extended(self, E_max: int) -> "EigenSystem":
        """Same system with at least E_max eigenpairs, for closed-form families."""
        if E_max <= self.E_max:
            return self
        if self.extend is None:
            raise InvalidParameter(f"{self.family} eigensystem has only {self.E_max} eigenpairs")
        return self.extend(E_max)

    def lambdas_upto(self, E: int) -> np.ndarray:
        return self.extended(E).lambdas[:E]


def _spline_lambdas(E_max: int) -> np.ndarray:
    return 1.0 / ((np.arange(1, E_max + 1) - 0.5) * np.pi) ** 2


def _spline_tail(E: int) -> float:
    # sum_{e > E} ((e - 1/2) pi)^-2 = trigamma(E + 1/2) / pi^2
    return float(polygamma(1, E + 0.5)) / np.pi**2


def spline_eigensystem(E_max: int) -> EigenSystem:
    """First-order spline (Brownian motion) kernel min(x, x') under uniform mu on [0, 1]."""
    if E_max < 1:
        raise InvalidParameter("E_max must be >= 1")
    return EigenSystem(
        family="spline_first_order",
        lambdas=_spline_lambdas(E_max),
        k_bound=2.0,
        feature_fn=sinusoids,
        params={"E_max": E_max},
        analytic_tail=_spline_tail,
        extend=spline_eigensystem,
    )


def exponential_eigensystem(E_max: int, rate: float = 0.1) -> EigenSystem:
    """lambda_e = exp(-rate e) on the spline sinusoids (only the spectrum changes)."""
    if rate <= 0:
        raise InvalidParameter("rate must be > 0")
    if E_max < 1:
        raise InvalidParameter("E_max must be >= 1")

    def tail(E: int) -> float:
        return float(np.exp(-rate * (E + 1)) / -np.expm1(-rate))

    return EigenSystem(
        family="exponential",
        lambdas=np.exp(-rate * np.arange(1, E_max + 1)),
        k_bound=2.0,
        feature_fn=sinusoids,
        params={"E_max": E_max, "rate": rate},
        analytic_tail=tail,
        extend=lambda n: exponential_eigensystem(n, rate),
    )


def custom_eigensystem(lambdas: Any, finite_rank: bool = True) -> EigenSystem:
    """Arbitrary non-increasing spectrum on the spline sinusoids.

    With finite_rank the spectrum is the whole expansion and tail sums are exact.
    """
    lam = np.asarray(lambdas, dtype=float)
    if lam.ndim != 1 or lam.size == 0 or np.any(lam <= 0) or np.any(np.diff(lam) > 0):
        raise InvalidParameter("custom spectrum must be positive and non-increasing")
    return EigenSystem(
        family="custom",
        lambdas=lam,
        k_bound=2.0,
        feature_fn=sinusoids,
        params={"finite_rank": finite_rank},
        finite_rank=finite_rank,
    )


def kernel_from_spectrum(eigen: EigenSystem, E: int | None = None) -> KernelSpec:
    """K(x, x') = sum_{e <= E} lambda_e phi_e(x) phi_e(x') for sinusoid-based systems."""
    if eigen.feature_fn is not sinusoids:
        raise InvalidParameter("kernel_from_spectrum needs a sinusoid eigensystem")
    E = eigen.E_max if E is None else E
    return KernelSpec(family="custom", lambdas=tuple(float(v) for v in eigen.lambdas_upto(E)))


def numerical_eigensystem(
    kernel: KernelSpec,
    measure: InputMeasure,
    q: int,
    E: int,
    seed: Seed = None,
    sampling: Literal["iid", "stratified"] = "iid",
    grid_size: int = 4096,
) -> EigenSystem:
    """Numerical KL expansion from the eigendecomposition of a q x q kernel matrix on draws from mu."""
    if not (q >= E >= 1):
        raise InvalidParameter(f"need q >= E >= 1, got q={q}, E={E}")
    if kernel.dim != measure.dim:
        raise InvalidParameter("kernel and measure dimensions differ")
    rng = as_rng(seed)
    if sampling == "stratified":
        pts = measure.sample_stratified(q, rng)
    else:
        pts = measure.sample(q, rng)
    grid = _dense_grid(measure, grid_size, rng)
    return eigensystem_from_points(
        kernel, pts, E, grid=grid, extra_params={"measure": measure.to_dict(), "sampling": sampling}
    )


def eigensystem_from_points(
    kernel: KernelSpec,
    points: np.ndarray,
    E: int,
    grid: np.ndarray | None = None,
    extra_params: Dict[str, Any] | None = None,
) -> EigenSystem:
    pts = as_points(points, kernel.dim)
    q = pts.shape[0]
    Kq = kernel(pts, pts)
    ell, V = eigh(0.5 * (Kq + Kq.T))
    ell, V = ell[::-1], V[:, ::-1]
    top = float(ell[0])
    if top <= 0:
        raise DegenerateKernel("kernel matrix has no positive eigenvalue")
    tol = TOL_PSD * top
    if ell[-1] < -tol:
        raise DegenerateKernel(
            f"kernel matrix indefinite: min eigenvalue {ell[-1]:.3e} below -{tol:.3e}",
            min_eigenvalue=float(ell[-1]),
        )
    clipped = int(np.sum((ell < tol) & (ell != 0)))
    if clipped:
        log.debug("clipped %d kernel-matrix eigenvalues below %.3e to zero", clipped, tol)
    ell = np.where(ell < tol, 0.0, ell)
    rank = int(np.sum(ell > 0))
    if rank < E:
        raise DegenerateKernel(
            f"only {rank} kernel-matrix eigenvalues above tolerance, {E} requested",
            rank=rank,
        )

    ell_E = ell[:E]
    V_E = V[:, :E]
    scale = np.sqrt(q) / ell_E

    def features(X: np.ndarray, n: int) -> np.ndarray:
        return kernel(X, pts) @ V_E[:, :n] * scale[:n]

    if grid is None:
        grid = pts
    k_bound = float(np.max(features(as_points(grid, kernel.dim), E) ** 2))

    return EigenSystem(
        family="numerical",
        lambdas=ell_E / q,
        k_bound=k_bound,
        feature_fn=features,
        dim=kernel.dim,
        params={"kernel": kernel.to_dict(), "q": q, "E": E, **(extra_params or {})},
        points=pts,
    )


def _dense_grid(measure: InputMeasure, n: int, rng: np.random.Generator) -> np.ndarray:
    if measure.kind == "uniform":
        nodes, _ = measure.quadrature(n)
        return nodes
    return measure.sample(n, rng)
