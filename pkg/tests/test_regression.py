import numpy as np
import pytest

from distgp.errors import (
    InvalidInput,
    InvalidParameter,
    NumericalFailure,
    ParseError,
    SingularNormalEquations,
)
from distgp.harness.truth import generate_dataset, sample_truth
from distgp.kernel.basis import kl_basis
from distgp.kernel.kernels import spline_kernel
from distgp.regression.data import Dataset, read_table
from distgp.regression.estimators import (
    estimate_A,
    estimate_B,
    estimate_MAP,
    predict,
    shrink_B,
    spd_solve,
)
from distgp.regression.stats import (
    SufficientStatistics,
    aggregate_statistics,
    local_statistics,
    local_statistics_batch,
    statistics_from_data,
)


class TestSufficientStatistics:
    def test_aggregate_of_locals_is_the_centralized_pair(self, small_problem):
        _, data, basis = small_problem
        pairs = [local_statistics(x, y, basis) for x, y in zip(data.inputs, data.outputs)]
        agg = aggregate_statistics(pairs)
        ref = statistics_from_data(data, basis)
        assert agg.M == data.M
        np.testing.assert_allclose(agg.V, ref.V, atol=1e-12)
        np.testing.assert_allclose(agg.z, ref.z, atol=1e-12)

    def test_batch_matches_single_sample(self, small_problem):
        _, data, basis = small_problem
        mats, vecs = local_statistics_batch(data, basis)
        G_m, g_m = local_statistics(data.inputs[3], data.outputs[3], basis)
        np.testing.assert_allclose(mats[3], G_m)
        np.testing.assert_allclose(vecs[3], g_m)
        assert np.linalg.matrix_rank(mats[3]) == 1

    def test_empty_aggregate(self):
        with pytest.raises(InvalidInput):
            aggregate_statistics([])

    def test_mismatched_pairs(self):
        with pytest.raises(InvalidInput) as err:
            aggregate_statistics([(np.eye(2), np.ones(2)), (np.eye(3), np.ones(3))])
        assert err.value.details["index"] == 1

    def test_stacked_payload_size(self):
        stats = SufficientStatistics(V=np.eye(3), z=np.arange(3.0), M=10)
        assert stats.stacked().size == 12
        with pytest.raises(InvalidInput):
            SufficientStatistics.from_stacked(np.zeros(11), 3, 10)


class TestEstimators:
    def test_A_and_B_agree_when_V_is_identity(self, spline, rng):
        basis = kl_basis(spline, 6)
        stats = SufficientStatistics(V=np.eye(6), z=rng.standard_normal(6), M=50)
        a = estimate_A(stats, basis, 0.1, 2.0)
        b = estimate_B(stats, spline, 0.1, 2.0)
        np.testing.assert_allclose(a.a_hat, b.a_hat, rtol=1e-12)

    def test_unregularized_A_recovers_noiseless_coefficients(self, spline, unit):
        truth = sample_truth(spline, 8, seed=1)
        data = generate_dataset(truth, unit, 200, 0.0, seed=2)
        basis = kl_basis(spline, 8)
        est = estimate_A(statistics_from_data(data, basis), basis, 0.0, 0.0)
        np.testing.assert_allclose(est.a_hat, truth.coefficients, atol=1e-10)

    def test_B_truncates_past_E_prime(self, small_problem):
        _, data, basis = small_problem
        stats = statistics_from_data(data, basis)
        a = shrink_B(stats.z, stats.M, basis, data.noise_variance, 1.0, 3)
        assert np.all(a[3:] == 0.0)
        assert np.all(a[:3] != 0.0)
        # gamma = 0 leaves the retained entries of z untouched
        np.testing.assert_array_equal(shrink_B(stats.z, stats.M, basis, 0.01, 0.0, 8), stats.z)

    def test_B_rejects_out_of_range_truncation(self, small_problem):
        _, data, basis = small_problem
        stats = statistics_from_data(data, basis)
        with pytest.raises(InvalidParameter):
            estimate_B(stats, basis, 0.01, 1.0, E_prime=9)

    def test_negative_gamma(self, small_problem):
        _, data, basis = small_problem
        with pytest.raises(InvalidParameter):
            estimate_A(statistics_from_data(data, basis), basis, 0.01, -1.0)

    def test_A_approaches_MAP_as_E_grows(self, small_problem, spline):
        """Sup-grid gap between A (gamma=1) and the MAP predictor trends down over E = 5, 10, ..., 150.

        Checked as a negative least-squares slope of log gap against log E, plus every gap at
        E >= 100 below a third of the E = 5 gap. Single steps may go up.
        """
        _, data, _ = small_problem
        grid = np.linspace(0.0, 1.0, 501)
        f_map = estimate_MAP(data, spline_kernel(), 1.0)(grid)
        E_values = np.arange(5, 151, 5)
        gaps = []
        for E in E_values:
            basis = kl_basis(spline, int(E))
            est = estimate_A(statistics_from_data(data, basis), basis, data.noise_variance, 1.0)
            gaps.append(float(np.max(np.abs(predict(est, grid) - f_map))))
        gaps = np.array(gaps)
        slope = np.polyfit(np.log(E_values), np.log(gaps), 1)[0]
        assert slope < 0
        assert gaps[E_values >= 100].max() < gaps[0] / 3

    def test_predict_scalar_and_batch(self, small_problem):
        _, data, basis = small_problem
        est = estimate_A(statistics_from_data(data, basis), basis, data.noise_variance, 1.0)
        assert isinstance(predict(est, 0.3), float)
        batch = predict(est, np.array([0.1, 0.3]))
        assert batch.shape == (2,)
        assert batch[1] == pytest.approx(predict(est, 0.3))

    def test_estimate_json(self, small_problem):
        _, data, basis = small_problem
        est = estimate_B(statistics_from_data(data, basis), basis, 0.01, 1.0, 4)
        doc = est.to_json()
        assert doc["estimator"] == "B" and doc["E_prime"] == 4
        assert doc["basis_id"] == basis.basis_id
        assert len(doc["a_hat"]) == 8


class TestLinearAlgebra:
    def test_spd_solve(self, rng):
        B = rng.standard_normal((5, 5))
        A = B @ B.T + 5 * np.eye(5)
        b = rng.standard_normal(5)
        np.testing.assert_allclose(A @ spd_solve(A, b), b, atol=1e-10)

    def test_singular_system(self):
        with pytest.raises(SingularNormalEquations):
            spd_solve(np.zeros((3, 3)), np.ones(3))
        with pytest.raises(SingularNormalEquations):
            spd_solve(np.array([[1.0, 1.0], [1.0, 1.0]]), np.ones(2))

    def test_MAP_with_repeated_inputs_and_no_noise(self):
        data = Dataset(np.array([0.2, 0.5, 0.5]), np.array([1.0, 2.0, 2.0]), 0.0)
        with pytest.raises(NumericalFailure):
            estimate_MAP(data, spline_kernel(), 1.0)


class TestDataset:
    def test_length_mismatch(self):
        with pytest.raises(InvalidInput):
            Dataset(np.zeros(3), np.zeros(2), 0.1)

    def test_negative_noise(self):
        with pytest.raises(InvalidParameter):
            Dataset(np.zeros(3), np.zeros(3), -0.1)

    def test_round_robin_split(self):
        data = Dataset(np.arange(10.0), np.arange(10.0), 0.0)
        parts = data.split(3)
        assert [p.M for p in parts] == [4, 3, 3]
        merged = np.sort(np.concatenate([p.outputs for p in parts]))
        np.testing.assert_array_equal(merged, np.arange(10.0))
        with pytest.raises(InvalidParameter):
            data.split(11)


class TestCsv:
    def test_reads_inputs_and_output(self, write_csv):
        path = write_csv("d.csv", ["x_1", "x_2", "y"], [[0.1, 0.2, 1.0], [0.3, 0.4, 2.0]])
        data = Dataset.from_csv(path, noise_variance=0.5)
        assert data.M == 2 and data.dim == 2
        np.testing.assert_array_equal(data.outputs, [1.0, 2.0])

    def test_duplicate_header(self, write_csv):
        path = write_csv("d.csv", ["x_1", "x_1", "y"], [[0.1, 0.2, 1.0]])
        with pytest.raises(ParseError) as err:
            read_table(path)
        assert err.value.row == 1

    def test_missing_y(self, write_csv):
        path = write_csv("d.csv", ["x_1", "z"], [[0.1, 1.0]])
        with pytest.raises(ParseError) as err:
            read_table(path)
        assert err.value.row == 1

    def test_bad_value_reports_file_line(self, write_csv):
        path = write_csv("d.csv", ["x_1", "y"], [[0.1, 1.0], [0.2, 2.0], [0.3, "abc"]])
        with pytest.raises(ParseError) as err:
            read_table(path)
        assert err.value.row == 4

    def test_blank_lines_are_skipped_but_counted(self, tmp_path):
        path = tmp_path / "gaps.csv"
        path.write_text("x_1,y\n0.1,1.0\n\n0.2,2.0\n\n0.3,abc\n")
        with pytest.raises(ParseError) as err:
            read_table(path)
        assert err.value.row == 6
        path.write_text("x_1,y\n0.1,1.0\n\n0.2,2.0\n\n")
        df = read_table(path)
        np.testing.assert_array_equal(df["y"].to_numpy(), [1.0, 2.0])

    def test_missing_file(self, tmp_path):
        with pytest.raises(InvalidInput):
            read_table(tmp_path / "absent.csv")

    def test_column_mapping_keeps_group(self, write_csv):
        path = write_csv(
            "field.csv",
            ["station", "lon", "lat", "value", "month"],
            [["a", -105.0, 39.0, 3.5, " 1"], ["b", -104.0, 40.0, 2.5, "2"]],
        )
        df = read_table(path, {"lon": "x_1", "lat": "x_2", "value": "y"}, keep=["month"])
        assert list(df.columns) == ["x_1", "x_2", "y", "month"]
        assert df["month"].tolist() == ["1", "2"]
        assert Dataset.from_frame(df).dim == 2

    def test_mapping_of_absent_column(self, write_csv):
        path = write_csv("field.csv", ["lon", "value"], [[1.0, 2.0]])
        with pytest.raises(ParseError):
            read_table(path, {"lon": "x_1", "elev": "x_2", "value": "y"})

    def test_absent_keep_column(self, write_csv):
        path = write_csv("d.csv", ["x_1", "y"], [[0.1, 1.0]])
        with pytest.raises(ParseError):
            read_table(path, keep=["month"])
