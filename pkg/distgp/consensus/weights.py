from __future__ import annotations

import numpy as np

from distgp.consensus.topology import NetworkTopology
from distgp.errors import InvalidParameter, InvalidTopology


def metropolis_weights(topology: NetworkTopology) -> np.ndarray:
    """w_ij = 1 / (1 + max(d_i, d_j)) on edges, w_ii = 1 - sum_j w_ij."""
    deg = topology.degrees()
    W = np.zeros((topology.N, topology.N))
    for i, j in topology.edges:
        W[i, j] = W[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    W[np.diag_indices_from(W)] = 1.0 - W.sum(axis=1)
    return W


def uniform_weights(topology: NetworkTopology, eps_w: float | None = None) -> np.ndarray:
    """W = I - eps_w L with L the graph Laplacian; eps_w defaults to 1 / N."""
    N = topology.N
    eps_w = 1.0 / N if eps_w is None else float(eps_w)
    max_deg = int(topology.degrees().max(initial=0))
    if eps_w <= 0 or (max_deg > 0 and eps_w > 1.0 / max_deg):
        raise InvalidParameter(f"uniform weight step must lie in (0, 1/max_degree], got {eps_w}")
    L = np.diag(topology.degrees().astype(float)) - topology.adjacency()
    return np.eye(N) - eps_w * L


def spectral_gap(W: np.ndarray) -> float:
    """1 - second largest eigenvalue modulus of a symmetric weight matrix."""
    if W.shape[0] == 1:
        return 1.0
    mod = np.sort(np.abs(np.linalg.eigvalsh(0.5 * (W + W.T))))[::-1]
    return float(1.0 - mod[1])


def check_weights(W: np.ndarray, tol: float = 1e-12) -> None:
    if not np.allclose(W, W.T, atol=tol, rtol=0):
        raise InvalidTopology("weight matrix is not symmetric")
    if not np.allclose(W.sum(axis=1), 1.0, atol=tol, rtol=0):
        raise InvalidTopology("weight matrix rows do not sum to one")
    if spectral_gap(W) <= 0:
        raise InvalidTopology("weight matrix has no spectral gap; consensus would not converge")


def build_weights(topology: NetworkTopology, rule: str, eps_w: float | None = None) -> np.ndarray:
    if rule == "metropolis":
        W = metropolis_weights(topology)
    elif rule == "uniform":
        W = uniform_weights(topology, eps_w)
    else:
        raise InvalidParameter(f"unknown weight rule: {rule}")
    check_weights(W)
    return W
