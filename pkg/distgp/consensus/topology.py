from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple

import networkx as nx
import numpy as np
import pandas as pd

from distgp.errors import InvalidTopology, ParseError
from distgp.kernel.measures import Seed, as_rng
from distgp.util.log import get_logger

log = get_logger("distgp.consensus.topology")


@dataclass(frozen=True, eq=False)
class NetworkTopology:
    """Undirected connected agent graph with nodes labelled 0..N-1."""

    graph: nx.Graph = field(repr=False)

    def __post_init__(self) -> None:
        g = self.graph
        if g.number_of_nodes() == 0:
            raise InvalidTopology("topology needs at least one agent")
        if g.is_directed():
            raise InvalidTopology("topology must be undirected")
        loops = list(nx.selfloop_edges(g))
        if loops:
            raise InvalidTopology(f"self-loops are not allowed: {loops[:3]}")
        if not nx.is_connected(g):
            parts = nx.number_connected_components(g)
            raise InvalidTopology(f"topology is disconnected ({parts} components)", components=parts)
        relabeled = nx.convert_node_labels_to_integers(g, ordering="sorted")
        object.__setattr__(self, "graph", nx.freeze(relabeled))

    @property
    def N(self) -> int:
        return self.graph.number_of_nodes()

    @property
    def edges(self) -> List[Tuple[int, int]]:
        return sorted((min(u, v), max(u, v)) for u, v in self.graph.edges())

    def neighbors(self, i: int) -> List[int]:
        return sorted(self.graph.neighbors(i))

    def degrees(self) -> np.ndarray:
        return np.array([self.graph.degree(i) for i in range(self.N)], dtype=int)

    def adjacency(self) -> np.ndarray:
        return nx.to_numpy_array(self.graph, nodelist=list(range(self.N)))

    def relabeled(self, perm: Sequence[int]) -> "NetworkTopology":
        """Topology with node i renamed perm[i]."""
        mapping = {i: int(perm[i]) for i in range(self.N)}
        return NetworkTopology(nx.relabel_nodes(nx.Graph(self.graph), mapping))

    @classmethod
    def from_edges(cls, edges: Iterable[Tuple[int, int]], n_nodes: int | None = None) -> "NetworkTopology":
        g = nx.Graph()
        if n_nodes is not None:
            g.add_nodes_from(range(n_nodes))
        g.add_edges_from((int(u), int(v)) for u, v in edges)
        return cls(g)

    @classmethod
    def path(cls, n: int) -> "NetworkTopology":
        return cls(nx.path_graph(n))

    @classmethod
    def complete(cls, n: int) -> "NetworkTopology":
        return cls(nx.complete_graph(n))

    @classmethod
    def ring(cls, n: int) -> "NetworkTopology":
        return cls(nx.cycle_graph(n))

    @classmethod
    def from_csv(cls, path: Path, n_nodes: int | None = None) -> "NetworkTopology":
        """Edge list with one `u,v` pair per row; a non-numeric first row is taken as a header."""
        try:
            df = pd.read_csv(path, header=None, comment="#", dtype=str)
        except FileNotFoundError as e:
            raise InvalidTopology(f"topology file not found: {path}") from e
        except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise ParseError(f"{path}: {e}") from e
        if df.shape[1] != 2:
            raise ParseError(f"{path}: expected two columns u,v; got {df.shape[1]}", row=1)
        values = df.apply(lambda s: pd.to_numeric(s.str.strip(), errors="coerce"))
        first_row = 1
        if values.iloc[0].isna().any():
            values = values.iloc[1:]
            first_row = 2
        bad = values.isna().any(axis=1).to_numpy()
        if bad.any():
            raise ParseError(f"{path}: non-numeric node id", row=int(np.flatnonzero(bad)[0]) + first_row)
        edges = [(int(u), int(v)) for u, v in values.to_numpy()]
        return cls.from_edges(edges, n_nodes)

    def to_csv(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(self.edges, columns=["u", "v"]).to_csv(path, index=False)
        return path


def random_connected_topology(
    N: int,
    p: float | None = None,
    seed: Seed = None,
    max_tries: int = 1000,
) -> NetworkTopology:
    """Erdos-Renyi graph rejection-sampled until connected; p defaults to 2 log(N) / N."""
    if N < 1:
        raise InvalidTopology("N must be >= 1")
    if N == 1:
        return NetworkTopology.from_edges([], n_nodes=1)
    if p is None:
        p = min(1.0, 2.0 * np.log(N) / N)
    if not 0 < p <= 1:
        raise InvalidTopology(f"edge probability must lie in (0, 1], got {p}")
    rng = as_rng(seed)
    for attempt in range(1, max_tries + 1):
        g = nx.erdos_renyi_graph(N, p, seed=int(rng.integers(2**31 - 1)))
        if nx.is_connected(g):
            log.debug("connected G(%d, %.3f) after %d draws", N, p, attempt)
            return NetworkTopology(g)
    raise InvalidTopology(f"no connected G({N}, {p}) in {max_tries} draws", N=N, p=p)
