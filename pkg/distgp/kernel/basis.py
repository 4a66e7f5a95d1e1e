from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional

import numpy as np
from scipy.linalg import eigh

from distgp.errors import DegenerateAnchors, InvalidParameter, RankDeficient
from distgp.kernel.eigen import EigenSystem
from distgp.kernel.kernels import TOL_PSD, KernelSpec, as_points, min_relative_eigenvalue

BASIS_KINDS = ("kl_eigen", "kernel_sections", "nystrom")


@dataclass(frozen=True, eq=False)
class BasisSpec:
    """E basis functions together with their prior precision matrix.

    `prior` is the matrix P entering (V + gamma sigma^2 / M P): Lambda_E^-1 for kl_eigen,
    the anchor kernel matrix for kernel sections, D_E for Nystrom. `expected_gram` is
    E[G^T G / M] under the input measure (identity for kl_eigen, None until computed).
    """

    kind: str
    E: int
    prior: np.ndarray
    feature_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    dim: int = 1
    expected_gram: Optional[np.ndarray] = field(default=None, repr=False)
    anchors: Optional[np.ndarray] = field(default=None, repr=False)
    kernel: Optional[KernelSpec] = None
    eigen: Optional[EigenSystem] = field(default=None, repr=False)
    vectors: Optional[np.ndarray] = field(default=None, repr=False)

    def features(self, X: Any) -> np.ndarray:
        return self.feature_fn(as_points(X, self.dim))

    def phi(self, e: int, x: Any) -> np.ndarray:
        return self.features(x)[:, e - 1]

    @property
    def prior_is_diagonal(self) -> bool:
        return bool(np.all(self.prior == np.diag(np.diag(self.prior))))

    @property
    def basis_id(self) -> str:
        h = hashlib.sha256()
        h.update(self.kind.encode())
        h.update(np.ascontiguousarray(self.prior).tobytes())
        if self.anchors is not None:
            h.update(np.ascontiguousarray(self.anchors).tobytes())
        return f"{self.kind}-{self.E}-{h.hexdigest()[:12]}"

    def with_expected_gram(self, gram: np.ndarray) -> "BasisSpec":
        gram = np.asarray(gram, dtype=float)
        if gram.shape != (self.E, self.E):
            raise InvalidParameter(f"expected gram must be {self.E}x{self.E}")
        return replace(self, expected_gram=0.5 * (gram + gram.T))


def kl_basis(eigen: EigenSystem, E: int | None = None) -> BasisSpec:
    E = eigen.E_max if E is None else E
    if E < 1:
        raise InvalidParameter("basis dimension E must be >= 1")
    eigen = eigen.extended(E)
    lam = eigen.lambdas[:E]
    return BasisSpec(
        kind="kl_eigen",
        E=E,
        prior=np.diag(1.0 / lam),
        feature_fn=lambda X: eigen.features(X, E),
        dim=eigen.dim,
        expected_gram=np.eye(E),
        eigen=eigen,
    )


def kernel_sections_basis(kernel: KernelSpec, anchors: Any) -> BasisSpec:
    """phi_e(x) = K(anchor_e, x); the prior precision is the anchor kernel matrix."""
    pts = as_points(anchors, kernel.dim)
    if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
        raise DegenerateAnchors("kernel-section anchors must be distinct")
    Kmat = kernel(pts, pts)
    Kmat = 0.5 * (Kmat + Kmat.T)
    if min_relative_eigenvalue(Kmat) <= TOL_PSD:
        raise DegenerateAnchors("anchor kernel matrix is singular within tolerance")
    return BasisSpec(
        kind="kernel_sections",
        E=pts.shape[0],
        prior=Kmat,
        feature_fn=lambda X: kernel(pts, X).T,
        dim=kernel.dim,
        anchors=pts,
        kernel=kernel,
    )


def nystrom_basis(kernel: KernelSpec, anchors: Any, E: int) -> BasisSpec:
    """phi_e(x) = sum_n v_e(n) K(anchor_n, x) from the top-E eigenvectors of the anchor kernel matrix."""
    pts = as_points(anchors, kernel.dim)
    q = pts.shape[0]
    if not 1 <= E <= q:
        raise InvalidParameter(f"need 1 <= E <= q, got E={E}, q={q}")
    Kq = kernel(pts, pts)
    d, V = eigh(0.5 * (Kq + Kq.T))
    d, V = d[::-1], V[:, ::-1]
    top = float(d[0])
    above = int(np.sum(d > TOL_PSD * top)) if top > 0 else 0
    if above < E:
        raise RankDeficient(f"only {above} kernel-matrix eigenvalues above tolerance, {E} requested", rank=above)
    d_E = d[:E].copy()
    V_E = V[:, :E].copy()
    return BasisSpec(
        kind="nystrom",
        E=E,
        prior=np.diag(d_E),
        feature_fn=lambda X: kernel(X, pts) @ V_E,
        dim=kernel.dim,
        anchors=pts,
        kernel=kernel,
        vectors=V_E,
    )


def leading(A: np.ndarray, n: int) -> np.ndarray:
    """[A]_n: first n rows and columns (first n entries for vectors)."""
    if A.ndim == 1:
        return A[:n]
    return A[:n, :n]
