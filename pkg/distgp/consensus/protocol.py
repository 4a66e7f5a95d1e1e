"""Synchronous average consensus and the two distributed fitting protocols.

Every agent holds a flat payload. One round replaces each agent's value by the weighted
average of its own and its neighbours' values from the previous round (x <- W x).
The simulator stops once every coordinate of every agent lies within `tolerance` of the
true network average, which only the simulator knows; `max_rounds` is the deployable stop.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from distgp.consensus.topology import NetworkTopology
from distgp.consensus.weights import build_weights
from distgp.errors import InvalidInput, InvalidParameter, InvalidTopology
from distgp.kernel.basis import BasisSpec
from distgp.regression.data import Dataset
from distgp.regression.estimators import CoefficientEstimate, estimate_A
from distgp.regression.stats import SufficientStatistics, local_statistics_batch
from distgp.tuning.sure import (
    GridKey,
    SureEvaluation,
    TuningGrid,
    coefficient_family_B,
    select_B,
    sure_trace_B,
    tune_A,
)
from distgp.util.log import get_logger

log = get_logger("distgp.consensus")


@dataclass(frozen=True)
class ConsensusConfig:
    weight_rule: str = "metropolis"
    eps_w: float | None = None
    tolerance: float = 1e-9
    max_rounds: int = 100_000
    # replace the iteration by the exact network average (oracle for tests and baselines)
    exact: bool = False

    def __post_init__(self) -> None:
        if self.weight_rule not in ("metropolis", "uniform"):
            raise InvalidParameter(f"unknown weight rule: {self.weight_rule}")
        if self.tolerance < 0:
            raise InvalidParameter("tolerance must be >= 0")
        if self.max_rounds < 0:
            raise InvalidParameter("max_rounds must be >= 0")


@dataclass(frozen=True, eq=False)
class AgentState:
    """Local payload of one agent and its current consensus estimate."""

    payload: np.ndarray
    estimate: np.ndarray


@dataclass(frozen=True, eq=False)
class ConsensusResult:
    initial: np.ndarray
    values: np.ndarray
    rounds: int
    converged: bool
    max_deviation: float
    deviations: Tuple[float, ...] = field(default=(), repr=False)

    @property
    def payload_size(self) -> int:
        return int(self.values.shape[1])

    def agents(self) -> List[AgentState]:
        return [AgentState(payload=p, estimate=v) for p, v in zip(self.initial, self.values)]


def run_average_consensus(
    states: np.ndarray | Sequence[np.ndarray],
    topology: NetworkTopology,
    config: ConsensusConfig = ConsensusConfig(),
) -> ConsensusResult:
    X = np.array([np.asarray(s, dtype=float).ravel() for s in states])
    if X.ndim != 2 or X.shape[0] != topology.N:
        raise InvalidInput(f"expected one payload per agent ({topology.N}), got {len(X)}")
    X0 = X
    target = X.mean(axis=0)
    if config.exact:
        values = np.broadcast_to(target, X.shape).copy()
        return ConsensusResult(initial=X, values=values, rounds=0, converged=True, max_deviation=0.0)

    W = build_weights(topology, config.weight_rule, config.eps_w)
    deviations = []
    rounds = 0
    dev = float(np.max(np.abs(X - target))) if X.size else 0.0
    deviations.append(dev)
    while dev > config.tolerance and rounds < config.max_rounds:
        X = W @ X
        rounds += 1
        dev = float(np.max(np.abs(X - target)))
        deviations.append(dev)
    converged = dev <= config.tolerance
    if not converged:
        log.warning(
            "consensus did not converge in %d rounds (max deviation %.3e > %.3e)",
            rounds, dev, config.tolerance,
        )
    else:
        log.debug("consensus converged in %d rounds over %d agents, payload %d", rounds, topology.N, X.shape[1])
    return ConsensusResult(
        initial=X0,
        values=X,
        rounds=rounds,
        converged=converged,
        max_deviation=dev,
        deviations=tuple(deviations),
    )


@dataclass(frozen=True)
class PhaseSummary:
    name: str
    payload: int
    rounds: int
    converged: bool


@dataclass(frozen=True, eq=False)
class ProtocolSummary:
    protocol: str
    phases: Tuple[PhaseSummary, ...]
    max_disagreement: float

    @property
    def rounds(self) -> int:
        return sum(p.rounds for p in self.phases)

    @property
    def payload_scalars_per_round(self) -> int:
        return sum(p.payload for p in self.phases)

    @property
    def converged(self) -> bool:
        return all(p.converged for p in self.phases)

    @property
    def messages_per_agent(self) -> int:
        """Scalars each agent broadcasts over the whole run."""
        return sum(p.payload * p.rounds for p in self.phases)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "protocol": self.protocol,
            "rounds": self.rounds,
            "payload_scalars_per_round": self.payload_scalars_per_round,
            "max_disagreement": self.max_disagreement,
            "converged": self.converged,
            "messages_per_agent": self.messages_per_agent,
            "phases": [p.__dict__ for p in self.phases],
        }


@dataclass(frozen=True, eq=False)
class AgentFit:
    gamma: float
    estimate: CoefficientEstimate
    sure: SureEvaluation
    E_prime: int | None = None


@dataclass(frozen=True, eq=False)
class DistributedFit:
    agents: List[AgentFit]
    summary: ProtocolSummary


def _check_agents(agent_data: Sequence[Dataset], topology: NetworkTopology) -> int:
    if len(agent_data) != topology.N:
        raise InvalidTopology(f"{len(agent_data)} local datasets for {topology.N} agents")
    return sum(d.M for d in agent_data)


def _local_sums(agent_data: Sequence[Dataset], basis: BasisSpec, scale: float) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """Per-agent sums of G_m^T G_m and G_m^T y_m, scaled so the network average is the M-average."""
    mats, vecs = [], []
    for d in agent_data:
        gg, gy = local_statistics_batch(d, basis)
        mats.append(gg.sum(axis=0) * scale)
        vecs.append(gy.sum(axis=0) * scale)
    return mats, vecs


def _disagreement(coefs: np.ndarray) -> float:
    if coefs.shape[0] < 2:
        return 0.0
    return float(np.max(coefs.max(axis=0) - coefs.min(axis=0)))


def distributed_fit_A(
    agent_data: Sequence[Dataset],
    basis: BasisSpec,
    noise_variance: float,
    gammas: Sequence[float] | TuningGrid,
    topology: NetworkTopology,
    config: ConsensusConfig = ConsensusConfig(),
) -> DistributedFit:
    """One consensus on the stacked (V, z) payload of E^2 + E scalars, then local SURE tuning."""
    M = _check_agents(agent_data, topology)
    E = basis.E
    scale = topology.N / M
    mats, vecs = _local_sums(agent_data, basis, scale)
    payloads = np.stack([np.concatenate([m.ravel(), v]) for m, v in zip(mats, vecs)])
    res = run_average_consensus(payloads, topology, config)

    fits: List[AgentFit] = []
    for i in range(topology.N):
        stats = SufficientStatistics.from_stacked(res.values[i], E, M)
        gamma, ev = tune_A(stats, basis, noise_variance, gammas)
        fits.append(AgentFit(gamma=gamma, estimate=estimate_A(stats, basis, noise_variance, gamma), sure=ev))

    summary = ProtocolSummary(
        protocol="A",
        phases=(PhaseSummary("stats", E * E + E, res.rounds, res.converged),),
        max_disagreement=_disagreement(np.stack([f.estimate.a_hat for f in fits])),
    )
    log.info("protocol A: %s", summary.to_dict())
    return DistributedFit(agents=fits, summary=summary)


def distributed_fit_B(
    agent_data: Sequence[Dataset],
    basis: BasisSpec,
    noise_variance: float,
    grid: TuningGrid,
    topology: NetworkTopology,
    config: ConsensusConfig = ConsensusConfig(),
) -> DistributedFit:
    """Consensus on z (E scalars), local a_hat family, then consensus on the V a_hat products."""
    M = _check_agents(agent_data, topology)
    E = basis.E
    grid.check_truncations(E)
    pairs = grid.pairs()
    scale = topology.N / M
    mats, vecs = _local_sums(agent_data, basis, scale)

    z_res = run_average_consensus(np.stack(vecs), topology, config)
    families = [coefficient_family_B(z_res.values[i], M, basis, noise_variance, grid) for i in range(topology.N)]

    products = np.stack([
        np.concatenate([mats[i] @ families[i][key] for key in pairs])
        for i in range(topology.N)
    ])
    zh_res = run_average_consensus(products, topology, config)

    fits: List[AgentFit] = []
    for i in range(topology.N):
        block = zh_res.values[i].reshape(len(pairs), E)
        z_hat: Dict[GridKey, np.ndarray] = {key: block[k] for k, key in enumerate(pairs)}
        best = select_B(sure_trace_B(z_res.values[i], None, basis, noise_variance, M, grid, z_hat=z_hat))
        key = (best.gamma, int(best.E_prime))
        est = CoefficientEstimate(
            a_hat=families[i][key], basis=basis, gamma=best.gamma, E_prime=key[1], estimator="B"
        )
        fits.append(AgentFit(gamma=best.gamma, estimate=est, sure=best, E_prime=key[1]))

    summary = ProtocolSummary(
        protocol="B",
        phases=(
            PhaseSummary("z", E, z_res.rounds, z_res.converged),
            PhaseSummary("z_hat", len(pairs) * E, zh_res.rounds, zh_res.converged),
        ),
        max_disagreement=_disagreement(np.stack([f.estimate.a_hat for f in fits])),
    )
    log.info("protocol B: %s", summary.to_dict())
    return DistributedFit(agents=fits, summary=summary)
