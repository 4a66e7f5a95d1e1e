from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Sequence, Tuple

import numpy as np

from distgp.errors import InvalidInput
from distgp.kernel.basis import BasisSpec
from distgp.regression.data import Dataset

LocalPair = Tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True, eq=False)
class SufficientStatistics:
    """V = G^T G / M and z = G^T y / M over M samples."""

    V: np.ndarray
    z: np.ndarray
    M: int

    @property
    def E(self) -> int:
        return int(self.z.size)

    def stacked(self) -> np.ndarray:
        """Flat payload of E^2 + E scalars exchanged by the A protocol."""
        return np.concatenate([self.V.ravel(), self.z])

    @classmethod
    def from_stacked(cls, payload: np.ndarray, E: int, M: int) -> "SufficientStatistics":
        payload = np.asarray(payload, dtype=float)
        if payload.size != E * E + E:
            raise InvalidInput(f"payload of {payload.size} scalars does not match E={E}")
        V = payload[: E * E].reshape(E, E)
        return cls(V=0.5 * (V + V.T), z=payload[E * E :].copy(), M=M)


def local_statistics(x_m: Any, y_m: float, basis: BasisSpec) -> LocalPair:
    """(G_m^T G_m, G_m^T y_m) for one sample; the matrix has rank at most one."""
    g = basis.features(x_m)[0]
    return np.outer(g, g), g * float(y_m)


def local_statistics_batch(data: Dataset, basis: BasisSpec) -> Tuple[np.ndarray, np.ndarray]:
    """All per-sample pairs at once: (M, E, E) matrices and (M, E) vectors."""
    G = basis.features(data.inputs)
    return G[:, :, None] * G[:, None, :], G * data.outputs[:, None]


def aggregate_statistics(locals_: Sequence[LocalPair] | Iterable[LocalPair]) -> SufficientStatistics:
    pairs = list(locals_)
    if not pairs:
        raise InvalidInput("aggregate_statistics needs at least one local pair")
    E = np.asarray(pairs[0][1]).size
    for i, (mat, vec) in enumerate(pairs):
        if np.shape(mat) != (E, E) or np.size(vec) != E:
            raise InvalidInput(f"local pair {i} does not match basis dimension {E}", index=i)
    mats = np.stack([np.asarray(m, dtype=float) for m, _ in pairs])
    vecs = np.stack([np.asarray(v, dtype=float).reshape(E) for _, v in pairs])
    return SufficientStatistics(V=mats.mean(axis=0), z=vecs.mean(axis=0), M=len(pairs))


def statistics_from_data(data: Dataset, basis: BasisSpec) -> SufficientStatistics:
    G = basis.features(data.inputs)
    V = G.T @ G / data.M
    return SufficientStatistics(V=0.5 * (V + V.T), z=G.T @ data.outputs / data.M, M=data.M)
