from distgp.consensus.protocol import (
    AgentFit,
    AgentState,
    ConsensusConfig,
    ConsensusResult,
    DistributedFit,
    ProtocolSummary,
    distributed_fit_A,
    distributed_fit_B,
    run_average_consensus,
)
from distgp.consensus.topology import NetworkTopology, random_connected_topology
from distgp.consensus.weights import build_weights, check_weights, metropolis_weights, spectral_gap, uniform_weights

__all__ = [
    "AgentFit",
    "AgentState",
    "ConsensusConfig",
    "ConsensusResult",
    "DistributedFit",
    "NetworkTopology",
    "ProtocolSummary",
    "build_weights",
    "check_weights",
    "distributed_fit_A",
    "distributed_fit_B",
    "metropolis_weights",
    "random_connected_topology",
    "run_average_consensus",
    "spectral_gap",
    "uniform_weights",
]
