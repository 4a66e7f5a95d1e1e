import json

import numpy as np
import pandas as pd
import pytest
from scipy import stats as sps

from distgp.errors import InsufficientData, InvalidInput, InvalidParameter, ParseError
from distgp.harness.config import PRESETS, ExperimentConfig, config_from_dict, load_config, preset
from distgp.harness.experiments import (
    BOUNDS_COLUMNS,
    SURE_COLUMNS,
    TREND_COLUMNS,
    bound_curves,
    bounds_experiment,
    consensus_diagnostics,
    consistency_trend_experiment,
    fit_experiment,
    mean_se,
    sqrt_schedule,
    sure_vs_oracle_experiment,
    tune_experiment,
)
from distgp.harness.field import RSS_COLUMNS, Rescaling, field_pipeline
from distgp.harness.truth import generate_dataset, mse_under_mu, sample_truth


def small_config(**changes):
    base = {
        "M": 200,
        "E": 8,
        "E_values": [1, 2, 4, 8],
        "E_truth": 80,
        "runs": 4,
        "seed": 3,
        "grid_A": {"gamma_min": 1e-2, "gamma_max": 1e2, "n_gammas": 9},
        "grid_B": {"gammas": [1e-3, 0.0, 1e3], "truncations": [1, 4, 8]},
    }
    base.update(changes)
    return config_from_dict(base)


class TestTruth:
    def test_same_seed_same_truth(self, spline):
        a = sample_truth(spline, 50, seed=3)
        b = sample_truth(spline, 50, seed=3)
        np.testing.assert_array_equal(a.coefficients, b.coefficients)
        assert a.E_truth == 50

    def test_coefficient_variances_follow_the_spectrum(self, spline):
        rng = np.random.default_rng(0)
        draws = np.array([sample_truth(spline, 3, rng).coefficients for _ in range(4000)])
        np.testing.assert_allclose(draws.var(axis=0), spline.lambdas[:3], rtol=0.1)

    def test_noiseless_outputs_are_exact(self, spline, unit):
        truth = sample_truth(spline, 20, seed=1)
        data = generate_dataset(truth, unit, 50, 0.0, seed=2)
        np.testing.assert_array_equal(data.outputs, truth(data.inputs))

    def test_inputs_follow_mu(self, spline, unit):
        data = generate_dataset(sample_truth(spline, 5, seed=1), unit, 2000, 0.01, seed=9)
        assert sps.kstest(data.inputs[:, 0], "uniform").pvalue > 1e-3

    def test_energy_under_mu(self, spline, unit):
        truth = sample_truth(spline, 50, seed=5)
        zero = lambda X: np.zeros(len(X))
        assert mse_under_mu(truth, truth, unit) == pytest.approx(0.0, abs=1e-15)
        assert mse_under_mu(zero, truth, unit) == pytest.approx(truth.energy(), rel=1e-3)
        assert mse_under_mu(zero, truth, unit, method="mc", n=200_000, seed=1) == pytest.approx(
            truth.energy(), rel=0.05
        )

    def test_oversized_quadrature_falls_back_to_sampling(self, spline, unit):
        truth = sample_truth(spline, 5, seed=5)
        zero = lambda X: np.zeros(len(X))
        value = mse_under_mu(zero, truth, unit, n=2_000_000, seed=2)
        assert value == pytest.approx(truth.energy(), rel=0.02)

    def test_invalid_arguments(self, spline, unit):
        truth = sample_truth(spline, 5, seed=5)
        with pytest.raises(InvalidParameter):
            mse_under_mu(truth, truth, unit, method="simpson")
        with pytest.raises(InvalidParameter):
            sample_truth(spline, 0)
        with pytest.raises(InvalidParameter):
            generate_dataset(truth, unit, 0, 0.01)


class TestConfig:
    def test_defaults_are_valid(self):
        cfg = ExperimentConfig()
        assert cfg.truth_size() == 1000
        assert cfg.grid_b().truncations == (1, 5, 10, 20)

    @pytest.mark.parametrize("name", PRESETS)
    def test_presets(self, name):
        cfg = preset(name)
        assert cfg.name == name

    def test_unknown_preset(self):
        with pytest.raises(InvalidParameter):
            preset("nope")

    def test_json_and_toml(self, tmp_path, write_config):
        cfg = load_config(write_config({"M": 500, "kernel": {"family": "exponential", "rate": 0.2}}))
        assert cfg.M == 500 and cfg.eigensystem(5).family == "exponential"
        toml = tmp_path / "c.toml"
        toml.write_text('M = 300\nseed = 7\n[grid_B]\ngammas = [1.0]\ntruncations = [2, 4]\n')
        cfg = load_config(toml)
        assert (cfg.M, cfg.seed) == (300, 7)
        assert cfg.grid_b().pairs() == [(1.0, 2), (1.0, 4)]

    def test_file_errors(self, tmp_path, write_config):
        with pytest.raises(InvalidInput):
            load_config(tmp_path / "absent.json")
        yaml = tmp_path / "c.yaml"
        yaml.write_text("M: 3\n")
        with pytest.raises(InvalidParameter):
            load_config(yaml)
        bad = tmp_path / "bad.json"
        bad.write_text('{\n  "M": ,\n}')
        with pytest.raises(ParseError) as err:
            load_config(bad)
        assert err.value.row == 2

    def test_validation_names_the_field(self, write_config):
        with pytest.raises(InvalidParameter) as err:
            load_config(write_config({"alpha": 1.5}))
        assert err.value.details["field"] == "alpha"

    @pytest.mark.parametrize(
        "payload",
        [
            {"E": 5, "E_truth": 4, "grid_B": {"gammas": [1.0], "truncations": [1]}},
            {"E": 5},
            {"kernel": {"family": "gaussian"}},
            {"kernel": {"family": "spline_first_order", "dim": 2}},
            {"noise_variance": 0.0},
            {"field": {"train_fraction": 1.0}},
        ],
    )
    def test_invalid_configs(self, payload):
        with pytest.raises(InvalidParameter):
            config_from_dict(payload)

    def test_overrides_are_validated(self):
        cfg = ExperimentConfig().overridden(seed=5, runs=None)
        assert cfg.seed == 5 and cfg.runs == 50
        with pytest.raises(InvalidParameter):
            cfg.overridden(runs=0)


class TestSyntheticStudies:
    def test_bounds_table(self):
        result = bounds_experiment(small_config())
        table = result.tables["bounds_vs_mc"]
        assert list(table.columns) == BOUNDS_COLUMNS
        assert table["E"].tolist() == [1, 2, 4, 8]
        assert (table["mc_err_A_se"] > 0).all()
        assert result.summary["E_truth"] == 80
        assert result.summary["prior_variance"] == pytest.approx(0.5, rel=1e-3)

    def test_sure_study(self):
        result = sure_vs_oracle_experiment(small_config(runs=5))
        table = result.tables["sure_vs_oracle"]
        assert list(table.columns) == SURE_COLUMNS
        assert len(table) == 5
        assert (table["oracle_err_A"] <= table["sure_err_A"]).all()
        assert (table["oracle_err_B"] <= table["sure_err_B"]).all()
        assert 0 < result.summary["S_p_A"] <= 1
        assert 0 < result.summary["S_p_B"] <= 1

    def test_single_estimator(self):
        result = sure_vs_oracle_experiment(small_config(runs=2, estimator="A"))
        assert "S_p_B" not in result.summary
        assert result.tables["sure_vs_oracle"]["sure_err_B"].isna().all()

    def test_workers_do_not_change_results(self):
        serial = sure_vs_oracle_experiment(small_config(runs=4, workers=1))
        threaded = sure_vs_oracle_experiment(small_config(runs=4, workers=3))
        pd.testing.assert_frame_equal(serial.tables["sure_vs_oracle"], threaded.tables["sure_vs_oracle"])

    def test_same_seed_same_output(self):
        a = bounds_experiment(small_config(runs=2))
        b = bounds_experiment(small_config(runs=2))
        pd.testing.assert_frame_equal(a.tables["bounds_vs_mc"], b.tables["bounds_vs_mc"])

    def test_trend(self):
        cfg = small_config(E=5, M_values=[50, 200], runs=3, grid_B={"gammas": [1.0], "truncations": [1, 5]})
        table = consistency_trend_experiment(cfg).tables["trend"]
        assert list(table.columns) == TREND_COLUMNS
        assert table["E_sched"].tolist() == [8, 15]
        assert table["lower_bound_sched"].iloc[1] < table["lower_bound_sched"].iloc[0]
        assert table["lower_bound_fixed"].nunique() == 1

    def test_trend_needs_ascending_M(self):
        cfg = small_config(E=5, M_values=[400, 100], grid_B={"gammas": [1.0], "truncations": [1]})
        with pytest.raises(InvalidParameter):
            consistency_trend_experiment(cfg)

    def test_schedule(self):
        assert [sqrt_schedule(M) for M in (1, 100, 101, 6400)] == [1, 10, 11, 80]

    def test_mean_se(self):
        mean, se = mean_se(np.array([[1.0, np.nan], [3.0, 2.0]]))
        np.testing.assert_allclose(mean, [2.0, 2.0])
        assert se[0] == pytest.approx(1.0)


class TestFitAndTune:
    def test_centralized_fit(self, tmp_path):
        result = fit_experiment(small_config())
        assert {"coefficients_A", "coefficients_B"} <= set(result.tables)
        assert result.summary["err_A"] >= 0 and result.summary["estimate_B"]["estimator"] == "B"
        assert result.documents["expansion"]["family"] == "kl_eigen"
        paths = result.write(tmp_path)
        assert (tmp_path / "expansion.json") in paths
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["experiment"] == "fit"

    def test_distributed_fit(self):
        cfg = small_config(topology={"kind": "ring", "N": 5})
        result = fit_experiment(cfg, distributed=True)
        assert result.summary["agents"] == 5
        assert result.summary["protocol_A"]["converged"]
        assert result.summary["protocol_B"]["payload_scalars_per_round"] == 8 + 3 * 3 * 8
        central = fit_experiment(cfg)
        np.testing.assert_allclose(
            result.tables["coefficients_A"]["a_hat"], central.tables["coefficients_A"]["a_hat"], atol=1e-5
        )

    def test_fit_on_given_data(self, small_problem):
        _, data, _ = small_problem
        result = fit_experiment(small_config(), data=data)
        assert "err_A" not in result.summary
        assert result.summary["M"] == data.M

    def test_traces(self):
        result = tune_experiment(small_config())
        assert len(result.tables["trace_A"]) == 9
        assert len(result.tables["trace_B"]) == 9
        best = result.tables["trace_A"]["J"].min()
        assert result.summary["selected_A"]["J"] == best

    def test_consensus_diagnostics(self):
        result = consensus_diagnostics(small_config(), N=6)
        assert result.summary["agents"] == 6
        assert result.summary["converged_A"] and result.summary["converged_B"]
        assert result.summary["payload_A"] == 72
        curve = result.tables["consensus_B"]
        assert len(curve) == result.summary["rounds_B"] + 1
        assert curve["max_deviation"].iloc[-1] <= 1e-9

    def test_bound_curves_without_monte_carlo(self):
        cfg = small_config(M=1000, E=5, E_values=list(range(1, 11)), M_values=[1000, 10_000],
                           grid_B={"gammas": [1.0], "truncations": [1, 5]})
        result = bound_curves(cfg)
        assert {"bounds_A", "bounds_B", "bounds_vs_M_A", "bounds_vs_M_B"} <= set(result.tables)
        vs_M = result.tables["bounds_vs_M_A"]
        assert vs_M["feasible"].all()
        assert vs_M["bnd_raw"].iloc[1] < vs_M["bnd_raw"].iloc[0]


def _field_csv(path, rng, n_per_group=60, groups=3, with_group=True):
    rows = []
    for g in range(groups):
        x = rng.uniform(-2.0, 3.0, n_per_group)
        y = np.sin(1.5 * x) + 0.1 * rng.standard_normal(n_per_group)
        rows += [(xi, yi, f"m{g}") for xi, yi in zip(x, y)]
    df = pd.DataFrame(rows, columns=["x_1", "y", "month"])
    if not with_group:
        df = df.drop(columns="month")
    df.to_csv(path, index=False)
    return path


def field_config(**field):
    return small_config(
        runs=3,
        grid_B={"gammas": [0.0, 1.0], "truncations": [2, 4, 8]},
        field={"group_column": "month", "q": 200, **field},
    )


class TestFieldPipeline:
    @pytest.mark.parametrize("basis", ["kl_numeric", "kernel_sections", "nystrom"])
    def test_groups_and_bases(self, tmp_path, rng, basis):
        path = _field_csv(tmp_path / "field.csv", rng)
        result = field_pipeline(path, field_config(basis=basis))
        table = result.tables["field_rss"]
        assert list(table.columns) == RSS_COLUMNS
        assert len(table) == 3
        assert (table["n_train"] == 40).all() and (table["n_calibration"] == 60).all()
        assert (table["rss_A_oracle"] <= table["rss_A_sure"] + 1e-12).all()
        assert (table["rss_B_oracle"] <= table["rss_B_sure"] + 1e-12).all()
        assert (table["sigma2_hat"] > 0).all()
        curves = result.tables["risk_curves"]
        assert set(curves["estimator"]) == {"A", "B"}

    def test_random_calibration_split(self, tmp_path, rng):
        path = _field_csv(tmp_path / "field.csv", rng, with_group=False)
        result = field_pipeline(path, field_config(group_column=None))
        table = result.tables["field_rss"]
        assert (table["n_calibration"] == 60).all()
        assert (table["n_train"] + table["n_test"] == 120).all()

    def test_one_group_is_not_enough(self, tmp_path, rng):
        path = _field_csv(tmp_path / "field.csv", rng, groups=1)
        with pytest.raises(InsufficientData):
            field_pipeline(path, field_config())

    def test_input_dimension_must_match_kernel(self, tmp_path, write_csv):
        path = write_csv("f.csv", ["x_1", "x_2", "y"], [[0.1, 0.2, 1.0], [0.3, 0.4, 2.0]])
        with pytest.raises(InvalidParameter):
            field_pipeline(path, field_config(group_column=None))

    def test_rescaling(self):
        X = np.array([[2.0, 10.0], [4.0, 30.0]])
        r = Rescaling.fit(X)
        np.testing.assert_allclose(r.apply(X), [[0.0, 0.0], [1.0, 1.0]])
        fixed = Rescaling.fit(X, [[0.0, 4.0], [10.0, 20.0]])
        with pytest.raises(InvalidInput):
            fixed.apply(X)
        with pytest.raises(InvalidInput):
            Rescaling.fit(np.array([[1.0], [1.0]]))


@pytest.fixture(scope="module")
def trend_table():
    return consistency_trend_experiment(preset("trend")).tables["trend"]


@pytest.mark.slow
class TestReferenceStudies:
    def test_monte_carlo_errors_sit_between_lower_bound_and_bounds(self):
        cfg = small_config(M=2000, E=30, E_values=list(range(1, 31)), E_truth=None, runs=200,
                           grid_B={"gammas": [1.0], "truncations": [1]})
        table = bounds_experiment(cfg).tables["bounds_vs_mc"]
        for est in ("A", "B"):
            mc = table[f"mc_err_{est}_normalized"]
            se = table[f"mc_err_{est}_se"]
            assert (mc + 2 * se >= table["lower_bound_normalized"]).all()
            bnd = table[f"bnd_{est}_normalized"]
            ok = bnd.notna()
            assert (mc[ok] - 2 * se[ok] <= bnd[ok]).all()

    def test_sure_is_close_to_the_oracle(self):
        cfg = preset("sure-spline").overridden(
            E=100, grid_B={"gammas": [1e-3, 0.0, 1e3], "truncations": [1, 5, 10, 20, 50, 100]}
        )
        result = sure_vs_oracle_experiment(cfg)
        table = result.tables["sure_vs_oracle"]
        for est in ("A", "B"):
            assert 0.9 <= result.summary[f"S_p_{est}"] <= 1.0
            assert (table[f"oracle_err_{est}"] <= table[f"sure_err_{est}"] + 1e-12).all()

    def test_growing_E_keeps_improving(self, trend_table):
        table = trend_table
        assert table["err_A_sched"].iloc[-1] < table["err_A_sched"].iloc[0]
        gap = table["err_A_fixed"] - table["lower_bound_fixed"]
        assert gap.iloc[-1] < gap.iloc[0]
        assert np.all(np.diff(table["err_B_sched"].to_numpy()) < 0)

    def test_fixed_E_B_error_settles_on_the_lower_bound(self, trend_table):
        last = trend_table.iloc[-1]
        lb, err, se = last["lower_bound_fixed"], last["err_B_fixed"], last["se_B_fixed"]
        assert lb - 3 * se <= err <= 1.5 * lb + 3 * se
