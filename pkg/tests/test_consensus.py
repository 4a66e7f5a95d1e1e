import numpy as np
import pytest

from distgp.consensus.protocol import (
    ConsensusConfig,
    distributed_fit_A,
    distributed_fit_B,
    run_average_consensus,
)
from distgp.consensus.topology import NetworkTopology, random_connected_topology
from distgp.consensus.weights import build_weights, check_weights, metropolis_weights, spectral_gap, uniform_weights
from distgp.errors import InvalidInput, InvalidParameter, InvalidTopology, ParseError
from distgp.regression.estimators import estimate_A, shrink_B
from distgp.regression.stats import aggregate_statistics, local_statistics_batch, statistics_from_data
from distgp.tuning.sure import TuningGrid, tune_A, tune_B

GAMMAS = tuple(np.logspace(-2, 2, 9))


class TestTopology:
    def test_disconnected(self):
        with pytest.raises(InvalidTopology) as err:
            NetworkTopology.from_edges([(0, 1), (2, 3)])
        assert err.value.details["components"] == 2

    def test_self_loop(self):
        with pytest.raises(InvalidTopology):
            NetworkTopology.from_edges([(0, 0), (0, 1)])

    def test_isolated_node(self):
        with pytest.raises(InvalidTopology):
            NetworkTopology.from_edges([(0, 1)], n_nodes=3)

    def test_random_topology_is_reproducible(self):
        a = random_connected_topology(20, seed=3)
        b = random_connected_topology(20, seed=3)
        assert a.N == 20
        assert a.edges == b.edges

    def test_invalid_edge_probability(self):
        with pytest.raises(InvalidTopology):
            random_connected_topology(5, p=1.5)

    def test_edge_list_file(self, write_csv):
        path = write_csv("net.csv", ["u", "v"], [[0, 1], [1, 2], [2, 0]])
        topo = NetworkTopology.from_csv(path)
        assert topo.N == 3
        assert topo.edges == [(0, 1), (0, 2), (1, 2)]

    def test_edge_list_bad_row(self, write_csv):
        path = write_csv("net.csv", ["u", "v"], [[0, 1], [1, "b"]])
        with pytest.raises(ParseError) as err:
            NetworkTopology.from_csv(path)
        assert err.value.row == 3

    def test_missing_file(self, tmp_path):
        with pytest.raises(InvalidTopology):
            NetworkTopology.from_csv(tmp_path / "absent.csv")


class TestWeights:
    @pytest.mark.parametrize("topo", [NetworkTopology.path(5), NetworkTopology.ring(6), NetworkTopology.complete(4)])
    def test_metropolis_is_doubly_stochastic(self, topo):
        W = metropolis_weights(topo)
        np.testing.assert_allclose(W, W.T)
        np.testing.assert_allclose(W.sum(axis=1), 1.0)
        assert np.all(W >= 0)
        assert spectral_gap(W) > 0
        check_weights(W)

    def test_zero_off_graph(self):
        W = metropolis_weights(NetworkTopology.path(4))
        assert W[0, 2] == 0.0 and W[0, 3] == 0.0

    def test_uniform_step_default_and_limit(self):
        topo = NetworkTopology.path(4)
        W = uniform_weights(topo)
        assert W[0, 1] == pytest.approx(0.25)
        with pytest.raises(InvalidParameter):
            uniform_weights(topo, eps_w=0.9)

    def test_bipartite_uniform_step_has_no_gap(self):
        # eps_w = 1/max_degree on a two-node graph gives W = [[0, 1], [1, 0]]
        with pytest.raises(InvalidTopology):
            build_weights(NetworkTopology.path(2), "uniform", eps_w=1.0)

    def test_unknown_rule(self):
        with pytest.raises(InvalidParameter):
            build_weights(NetworkTopology.path(3), "max-degree")


class TestAverageConsensus:
    def test_path_of_three_converges(self):
        res = run_average_consensus([[1.0], [2.0], [6.0]], NetworkTopology.path(3))
        assert res.converged
        np.testing.assert_allclose(res.values, 3.0, atol=1e-9)
        assert res.deviations[0] == pytest.approx(3.0)

    def test_path_example_matches_matrix_powers(self):
        x0 = np.array([0.0, 3.0, 6.0])
        res = run_average_consensus(x0[:, None], NetworkTopology.path(3))
        W = np.array([[2, 1, 0], [1, 1, 1], [0, 1, 2]]) / 3.0
        np.testing.assert_allclose(metropolis_weights(NetworkTopology.path(3)), W, atol=1e-15)
        k = 0
        while np.max(np.abs(np.linalg.matrix_power(W, k) @ x0 - 3.0)) > 1e-9:
            k += 1
        assert res.rounds == k == 54
        assert res.converged
        np.testing.assert_allclose(res.values[:, 0], 3.0, atol=1e-9)
        # x0 - mean is an eigenvector of W with eigenvalue 2/3
        np.testing.assert_allclose(res.deviations, 3.0 * (2.0 / 3.0) ** np.arange(k + 1), atol=1e-12)

    def test_identical_values_need_no_rounds(self):
        res = run_average_consensus(np.full((4, 2), 1.5), NetworkTopology.ring(4))
        assert res.rounds == 0 and res.converged
        assert res.deviations == (0.0,)
        np.testing.assert_array_equal(res.values, 1.5)

    def test_relabeling_permutes_the_outcome(self, rng):
        topo = random_connected_topology(9, seed=6)
        perm = rng.permutation(9)
        X = rng.standard_normal((9, 3))
        X_perm = np.empty_like(X)
        X_perm[perm] = X
        base = run_average_consensus(X, topo)
        moved = run_average_consensus(X_perm, topo.relabeled(perm))
        assert moved.rounds == base.rounds
        assert moved.payload_size == base.payload_size
        np.testing.assert_allclose(moved.values[perm], base.values, atol=1e-12)

    def test_average_is_preserved_every_round(self, rng):
        topo = random_connected_topology(12, seed=1)
        X = rng.standard_normal((12, 4))
        for rounds in range(1, 6):
            res = run_average_consensus(X, topo, ConsensusConfig(tolerance=0.0, max_rounds=rounds))
            assert res.rounds == rounds
            np.testing.assert_allclose(res.values.mean(axis=0), X.mean(axis=0), atol=1e-10)

    def test_round_cap_reports_non_convergence(self):
        res = run_average_consensus(np.arange(5.0)[:, None], NetworkTopology.path(5), ConsensusConfig(max_rounds=1))
        assert not res.converged
        assert res.rounds == 1
        assert res.max_deviation > 1e-9

    def test_exact_mode(self):
        res = run_average_consensus([[1.0], [3.0]], NetworkTopology.path(2), ConsensusConfig(exact=True))
        assert res.rounds == 0 and res.converged
        np.testing.assert_array_equal(res.values, [[2.0], [2.0]])

    def test_uniform_rule_converges(self):
        res = run_average_consensus(
            np.eye(6), NetworkTopology.ring(6), ConsensusConfig(weight_rule="uniform", eps_w=0.3)
        )
        assert res.converged
        np.testing.assert_allclose(res.values, 1.0 / 6, atol=1e-9)

    def test_payload_count_must_match_agents(self):
        with pytest.raises(InvalidInput):
            run_average_consensus([[1.0], [2.0]], NetworkTopology.path(3))

    def test_agent_states(self):
        res = run_average_consensus([[1.0, 0.0], [3.0, 2.0]], NetworkTopology.path(2))
        states = res.agents()
        assert len(states) == 2
        np.testing.assert_array_equal(states[1].payload, [3.0, 2.0])
        assert res.payload_size == 2


class TestDistributedFits:
    def test_exact_A_with_one_sample_per_agent_is_centralized(self, small_problem):
        _, data, basis = small_problem
        data = data.subset(np.arange(30))
        agents = data.split(data.M)
        topo = random_connected_topology(data.M, seed=2)
        fit = distributed_fit_A(agents, basis, 0.01, GAMMAS, topo, ConsensusConfig(exact=True))

        stats = aggregate_statistics(zip(*local_statistics_batch(data, basis)))
        gamma, _ = tune_A(stats, basis, 0.01, GAMMAS)
        central = estimate_A(stats, basis, 0.01, gamma)
        for agent in fit.agents:
            assert agent.gamma == gamma
            assert np.array_equal(agent.estimate.a_hat, central.a_hat)
        assert fit.summary.rounds == 0

    def test_iterative_A_matches_centralized(self, small_problem):
        _, data, basis = small_problem
        topo = random_connected_topology(10, seed=4)
        fit = distributed_fit_A(data.split(10), basis, 0.01, GAMMAS, topo)
        stats = statistics_from_data(data, basis)
        gamma, _ = tune_A(stats, basis, 0.01, GAMMAS)
        central = estimate_A(stats, basis, 0.01, gamma)
        assert fit.summary.converged
        for agent in fit.agents:
            np.testing.assert_allclose(agent.estimate.a_hat, central.a_hat, atol=1e-5)
        assert fit.summary.max_disagreement < 1e-5

    def test_B_matches_centralized(self, small_problem):
        _, data, basis = small_problem
        grid = TuningGrid((1e-3, 1.0, 1e3), (2, 4, 8))
        topo = random_connected_topology(10, seed=5)
        fit = distributed_fit_B(data.split(10), basis, 0.01, grid, topo)

        stats = statistics_from_data(data, basis)
        gamma, E_prime, _ = tune_B(stats.z, stats.V, basis, 0.01, stats.M, grid)
        central = shrink_B(stats.z, stats.M, basis, 0.01, gamma, E_prime)
        for agent in fit.agents:
            assert (agent.gamma, agent.E_prime) == (gamma, E_prime)
            np.testing.assert_allclose(agent.estimate.a_hat, central, atol=1e-6)

    def test_payload_accounting(self, small_problem):
        _, data, basis = small_problem
        topo = NetworkTopology.ring(4)
        grid = TuningGrid((0.1, 1.0, 10.0), (2, 8))
        fit_A = distributed_fit_A(data.split(4), basis, 0.01, GAMMAS, topo)
        fit_B = distributed_fit_B(data.split(4), basis, 0.01, grid, topo)
        assert fit_A.summary.payload_scalars_per_round == 8 * 8 + 8
        assert fit_B.summary.payload_scalars_per_round == 8 + 3 * 2 * 8
        assert [p.name for p in fit_B.summary.phases] == ["z", "z_hat"]
        doc = fit_B.summary.to_dict()
        assert doc["messages_per_agent"] == sum(p["payload"] * p["rounds"] for p in doc["phases"])

    def test_relabeled_network_gives_permuted_fits(self, small_problem, rng):
        _, data, basis = small_problem
        topo = random_connected_topology(6, seed=7)
        perm = rng.permutation(6)
        agents = data.split(6)
        moved_agents = [None] * 6
        for i, p in enumerate(perm):
            moved_agents[p] = agents[i]
        base = distributed_fit_A(agents, basis, 0.01, GAMMAS, topo)
        moved = distributed_fit_A(moved_agents, basis, 0.01, GAMMAS, topo.relabeled(perm))
        assert moved.summary.rounds == base.summary.rounds
        assert moved.summary.payload_scalars_per_round == base.summary.payload_scalars_per_round
        for i, p in enumerate(perm):
            assert moved.agents[p].gamma == base.agents[i].gamma
            np.testing.assert_allclose(moved.agents[p].estimate.a_hat, base.agents[i].estimate.a_hat, atol=1e-10)

    def test_agent_count_must_match(self, small_problem):
        _, data, basis = small_problem
        with pytest.raises(InvalidTopology):
            distributed_fit_A(data.split(3), basis, 0.01, GAMMAS, NetworkTopology.path(4))
