from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, Tuple

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.stats import qmc

from distgp.errors import InvalidParameter

MAX_QUADRATURE_NODES = 1_000_000

Seed = int | np.random.Generator | np.random.SeedSequence | None


def as_rng(seed: Seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True, eq=False)
class InputMeasure:
    """Probability measure mu on the input space.

    uniform: independent uniform coordinates on [lower_j, upper_j].
    gaussian_mixture: sum_c w_c N(mean_c, diag(variances_c)), a tensor product per component.
    """

    kind: str
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    weights: np.ndarray | None = None
    means: np.ndarray | None = None
    variances: np.ndarray | None = None

    @classmethod
    def uniform(cls, lower: Any = 0.0, upper: Any = 1.0, dim: int = 1) -> "InputMeasure":
        lo = np.broadcast_to(np.asarray(lower, dtype=float), (dim,)).copy()
        hi = np.broadcast_to(np.asarray(upper, dtype=float), (dim,)).copy()
        if np.any(hi <= lo):
            raise InvalidParameter("uniform measure needs lower < upper on every axis")
        return cls(kind="uniform", lower=lo, upper=hi)

    @classmethod
    def gaussian_mixture(cls, weights: Any, means: Any, variances: Any) -> "InputMeasure":
        w = np.atleast_1d(np.asarray(weights, dtype=float))
        mu = np.asarray(means, dtype=float).reshape(w.size, -1)
        var = np.asarray(variances, dtype=float).reshape(w.size, -1)
        if mu.shape != var.shape:
            raise InvalidParameter("mixture means and variances must have the same shape")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InvalidParameter("mixture weights must be nonnegative and sum to 1")
        if np.any(var < 0):
            raise InvalidParameter("mixture variances must be nonnegative")
        return cls(kind="gaussian_mixture", weights=w, means=mu, variances=var)

    @classmethod
    def gaussian(cls, mean: Any, variance: Any) -> "InputMeasure":
        mu = np.atleast_1d(np.asarray(mean, dtype=float))
        var = np.broadcast_to(np.asarray(variance, dtype=float), mu.shape)
        return cls.gaussian_mixture([1.0], mu.reshape(1, -1), var.reshape(1, -1))

    @property
    def dim(self) -> int:
        if self.kind == "uniform":
            return int(self.lower.size)
        return int(self.means.shape[1])

    def sample(self, n: int, seed: Seed = None) -> np.ndarray:
        rng = as_rng(seed)
        if self.kind == "uniform":
            return rng.uniform(self.lower, self.upper, size=(n, self.dim))
        comp = rng.choice(self.weights.size, size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        return self.means[comp] + np.sqrt(self.variances[comp]) * z

    def sample_stratified(self, n: int, seed: Seed = None) -> np.ndarray:
        """Latin-hypercube draw; each point is still marginally distributed as mu (uniform only)."""
        if self.kind != "uniform":
            raise InvalidParameter("stratified sampling is available for uniform measures only")
        sampler = qmc.LatinHypercube(d=self.dim, seed=as_rng(seed))
        return qmc.scale(sampler.random(n), self.lower, self.upper)

    def contains(self, X: np.ndarray) -> np.ndarray:
        if self.kind != "uniform":
            return np.ones(X.shape[0], dtype=bool)
        return np.all((X >= self.lower) & (X <= self.upper), axis=1)

    def density(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        if self.kind == "uniform":
            vol = float(np.prod(self.upper - self.lower))
            return np.where(self.contains(X), 1.0 / vol, 0.0)
        if np.any(self.variances <= 0):
            raise InvalidParameter("density of a degenerate mixture component is undefined")
        out = np.zeros(X.shape[0])
        for w, mu, var in zip(self.weights, self.means, self.variances):
            z = (X - mu) ** 2 / var
            out += w * np.exp(-0.5 * z.sum(axis=1)) / np.sqrt(np.prod(2 * np.pi * var))
        return out

    def quadrature(self, n_nodes: int) -> Tuple[np.ndarray, np.ndarray]:
        """Tensor quadrature (nodes, probability weights) with about n_nodes nodes.

        Composite midpoint for uniform measures, Gauss-Hermite per mixture component otherwise.
        """
        d = self.dim
        m = max(1, int(round(n_nodes ** (1.0 / d))))
        if self.kind == "uniform":
            total = m**d
        else:
            total = m**d * self.weights.size
        if total > MAX_QUADRATURE_NODES:
            raise InvalidParameter(f"quadrature grid of {total} nodes exceeds {MAX_QUADRATURE_NODES}")

        if self.kind == "uniform":
            axes = [lo + (np.arange(m) + 0.5) * (hi - lo) / m for lo, hi in zip(self.lower, self.upper)]
            nodes = _tensor(axes)
            return nodes, np.full(nodes.shape[0], 1.0 / nodes.shape[0])

        t, w = hermegauss(m)
        w = w / np.sqrt(2 * np.pi)
        all_nodes, all_weights = [], []
        for cw, mu, var in zip(self.weights, self.means, self.variances):
            axes = [mu[j] + np.sqrt(var[j]) * t for j in range(d)]
            wts = _tensor([w] * d).prod(axis=1)
            all_nodes.append(_tensor(axes))
            all_weights.append(cw * wts)
        return np.vstack(all_nodes), np.concatenate(all_weights)

    def to_dict(self) -> Dict[str, Any]:
        if self.kind == "uniform":
            return {"kind": "uniform", "lower": self.lower.tolist(), "upper": self.upper.tolist()}
        return {
            "kind": "gaussian_mixture",
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "InputMeasure":
        if d["kind"] == "uniform":
            lo = np.atleast_1d(np.asarray(d.get("lower", 0.0), dtype=float))
            hi = np.atleast_1d(np.asarray(d.get("upper", 1.0), dtype=float))
            dim = int(d.get("dim", max(lo.size, hi.size)))
            return cls.uniform(lo, hi, dim=dim)
        if d["kind"] == "gaussian_mixture":
            return cls.gaussian_mixture(d["weights"], d["means"], d["variances"])
        raise InvalidParameter(f"unknown measure kind: {d['kind']}")


def _tensor(axes: list) -> np.ndarray:
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)
