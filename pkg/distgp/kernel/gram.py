from __future__ import annotations

from typing import Any, Literal

import numpy as np

from distgp.errors import InvalidParameter, UnsupportedClosedForm
from distgp.kernel.basis import BasisSpec
from distgp.kernel.kernels import as_points
from distgp.kernel.measures import InputMeasure, Seed
from distgp.util.log import get_logger

log = get_logger("distgp.kernel.gram")

GramMethod = Literal["closed_form", "empirical", "quadrature", "anchors"]


def gaussian_section_gram(anchors: Any, eta: float, measure: InputMeasure) -> np.ndarray:
    """E[K(a_i, x) K(a_j, x)] for K = exp(-||x - x'||^2 / eta) and x ~ Gaussian mixture.

    Per axis and component the entry is
    sqrt(eta / (eta + 4 s2)) exp(-star / (eta^2 + 4 eta s2)) with
    star = eta (xi^2 - 2 m xi + xj^2 - 2 m xj + 2 m^2) + 2 s2 (xi - xj)^2,
    where (m, s2) are the component mean and variance on that axis. Axes multiply
    (Hadamard product), components are mixed by their weights.
    """
    if measure.kind != "gaussian_mixture":
        raise UnsupportedClosedForm("closed-form gram needs a Gaussian-mixture measure")
    pts = as_points(anchors, measure.dim)
    E = pts.shape[0]
    out = np.zeros((E, E))
    for w, means, variances in zip(measure.weights, measure.means, measure.variances):
        block = np.ones((E, E))
        for j in range(measure.dim):
            m, s2 = means[j], variances[j]
            xi = pts[:, j][:, None]
            xj = pts[:, j][None, :]
            star = eta * (xi**2 - 2 * m * xi + xj**2 - 2 * m * xj + 2 * m**2) + 2 * s2 * (xi - xj) ** 2
            block *= np.sqrt(eta / (eta + 4 * s2)) * np.exp(-star / (eta**2 + 4 * eta * s2))
        out += w * block
    return 0.5 * (out + out.T)


def _closed_form(basis: BasisSpec, measure: InputMeasure) -> np.ndarray:
    kernel = basis.kernel
    if kernel is None or kernel.family != "gaussian" or measure.kind != "gaussian_mixture":
        raise UnsupportedClosedForm(
            f"no closed form for {basis.kind} basis with "
            f"{kernel.family if kernel else 'no'} kernel under {measure.kind} measure"
        )
    sections = gaussian_section_gram(basis.anchors, kernel.length_scale, measure)
    if basis.kind == "kernel_sections":
        return sections
    if basis.kind == "nystrom":
        V = basis.vectors
        G = V.T @ sections @ V
        return 0.5 * (G + G.T)
    raise UnsupportedClosedForm(f"no closed form for basis kind {basis.kind}")


def expected_gram(
    basis: BasisSpec,
    measure: InputMeasure,
    method: GramMethod = "closed_form",
    n: int = 100_000,
    seed: Seed = None,
) -> np.ndarray:
    """E[G^T G / M] for inputs drawn from `measure`.

    `n` is the sample count for the empirical method and the node count for quadrature.
    `anchors` averages over the basis anchors themselves, the sampled version used when
    mu is only known through the input locations.
    """
    if basis.kind == "kl_eigen":
        return np.eye(basis.E)
    if measure.dim != basis.dim:
        raise InvalidParameter("basis and measure dimensions differ")

    if method == "closed_form":
        return _closed_form(basis, measure)
    if method == "anchors":
        if basis.anchors is None:
            raise InvalidParameter(f"{basis.kind} basis has no anchors")
        G = basis.features(basis.anchors)
        out = G.T @ G / G.shape[0]
        return 0.5 * (out + out.T)
    if n < 1:
        raise InvalidParameter("n must be >= 1")
    if method == "empirical":
        X = measure.sample(n, seed)
        G = basis.features(X)
        out = G.T @ G / n
    elif method == "quadrature":
        nodes, weights = measure.quadrature(n)
        G = basis.features(nodes)
        out = G.T @ (weights[:, None] * G)
    else:
        raise InvalidParameter(f"unknown gram method: {method}")
    log.debug("expected gram via %s with n=%d (E=%d)", method, n, basis.E)
    return 0.5 * (out + out.T)
