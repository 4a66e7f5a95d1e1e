from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, Tuple

import numpy as np
from scipy.linalg import eigvalsh
from scipy.spatial.distance import cdist

from distgp.errors import InvalidParameter

# eigenvalues below TOL_PSD * (largest eigenvalue) are treated as zero
TOL_PSD = 1e-10

FAMILIES = ("spline_first_order", "gaussian", "custom")


def as_points(x: Any, dim: int = 1) -> np.ndarray:
    """Coerce a scalar, a single point or a batch of points to an (n, dim) array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dim == 1 else arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise InvalidParameter(f"expected points of dimension {dim}, got shape {np.shape(x)}")
    return arr


def sinusoids(X: np.ndarray, E: int) -> np.ndarray:
    """First E first-order spline eigenfunctions sqrt(2) sin(x (e pi - pi/2)) on [0, 1]."""
    x = as_points(X, 1)[:, 0]
    freq = (np.arange(1, E + 1) - 0.5) * np.pi
    return np.sqrt(2.0) * np.sin(np.outer(x, freq))


@dataclass(frozen=True)
class KernelSpec:
    """Symmetric positive semidefinite kernel on the box [lower, upper]^dim.

    gaussian uses K(x, x') = exp(-||x - x'||^2 / eta) with eta = length_scale.
    spline_first_order is min(x, x') (tensor product of mins when dim > 1).
    custom is sum_e lambda_e phi_e(x) phi_e(x') over the spline sinusoids (dim 1).
    """

    family: str
    dim: int = 1
    length_scale: float | None = None
    lambdas: Tuple[float, ...] = field(default_factory=tuple)
    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise InvalidParameter(f"unknown kernel family: {self.family}")
        if self.dim < 1:
            raise InvalidParameter("kernel dimension must be >= 1")
        if self.family == "gaussian" and (self.length_scale is None or self.length_scale <= 0):
            raise InvalidParameter("gaussian kernel needs length_scale eta > 0")
        if self.family == "custom":
            if self.dim != 1:
                raise InvalidParameter("custom spectra are defined on one-dimensional domains")
            lam = np.asarray(self.lambdas, dtype=float)
            if lam.size == 0 or np.any(lam < 0):
                raise InvalidParameter("custom kernel needs a nonempty nonnegative spectrum")
        if self.upper <= self.lower:
            raise InvalidParameter("kernel domain needs lower < upper")

    def __call__(self, X: Any, Y: Any) -> np.ndarray:
        A = as_points(X, self.dim)
        B = as_points(Y, self.dim)
        if self.family == "gaussian":
            return np.exp(-cdist(A, B, "sqeuclidean") / self.length_scale)
        if self.family == "spline_first_order":
            out = np.ones((A.shape[0], B.shape[0]))
            for j in range(self.dim):
                out *= np.minimum.outer(A[:, j], B[:, j])
            return out
        lam = np.asarray(self.lambdas, dtype=float)
        FA = sinusoids(A, lam.size)
        FB = sinusoids(B, lam.size)
        return (FA * lam) @ FB.T

    def diag(self, X: Any) -> np.ndarray:
        A = as_points(X, self.dim)
        if self.family == "gaussian":
            return np.ones(A.shape[0])
        if self.family == "spline_first_order":
            return np.prod(A, axis=1)
        lam = np.asarray(self.lambdas, dtype=float)
        return (sinusoids(A, lam.size) ** 2) @ lam

    def to_dict(self) -> Dict[str, Any]:
        return {
            "family": self.family,
            "dim": self.dim,
            "length_scale": self.length_scale,
            "lambdas": list(self.lambdas),
            "lower": self.lower,
            "upper": self.upper,
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "KernelSpec":
        return cls(
            family=d["family"],
            dim=int(d.get("dim", 1)),
            length_scale=d.get("length_scale"),
            lambdas=tuple(d.get("lambdas") or ()),
            lower=float(d.get("lower", 0.0)),
            upper=float(d.get("upper", 1.0)),
        )


def spline_kernel(dim: int = 1) -> KernelSpec:
    return KernelSpec(family="spline_first_order", dim=dim)


def gaussian_kernel(eta: float, dim: int = 1, lower: float = 0.0, upper: float = 1.0) -> KernelSpec:
    return KernelSpec(family="gaussian", dim=dim, length_scale=eta, lower=lower, upper=upper)


def min_relative_eigenvalue(K: np.ndarray) -> float:
    """Smallest eigenvalue of a kernel matrix divided by its largest (0 for the zero matrix)."""
    w = eigvalsh(0.5 * (K + K.T))
    top = float(np.max(np.abs(w))) if w.size else 0.0
    if top == 0.0:
        return 0.0
    return float(w[0]) / top


def is_psd(K: np.ndarray, tol: float = TOL_PSD) -> bool:
    return min_relative_eigenvalue(K) >= -tol
