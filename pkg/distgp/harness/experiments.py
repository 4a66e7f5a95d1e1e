"""Monte Carlo drivers for the synthetic studies.

Each driver takes an ExperimentConfig and returns an ExperimentResult: named tables that are
written as CSV plus a JSON summary. Run r draws everything from the r-th child of
SeedSequence(config.seed), and runs are gathered in index order, so output files depend on
(config, seed) only, never on `workers`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from distgp.bounds import BoundQuery, bound_curve, bound_vs_M, lower_bound, optimize_epsilon
from distgp.consensus.protocol import distributed_fit_A, distributed_fit_B, run_average_consensus
from distgp.consensus.weights import build_weights, spectral_gap
from distgp.errors import InfeasibleConfiguration, InvalidParameter, SingularNormalEquations
from distgp.harness.config import ExperimentConfig
from distgp.harness.truth import SyntheticTruth, generate_dataset, sample_truth
from distgp.kernel.basis import BasisSpec, kl_basis, leading
from distgp.kernel.eigen import EigenSystem
from distgp.kernel.schema import basis_to_model
from distgp.regression.data import Dataset
from distgp.regression.estimators import estimate_A, estimate_B, shrink_B
from distgp.regression.stats import SufficientStatistics, statistics_from_data
from distgp.tuning.oracle import coefficient_error, family_A, family_B, oracle_tune
from distgp.tuning.sure import select_A, select_B, sure_trace_A, sure_trace_B, trace_frame, tune_A, tune_B
from distgp.util.io import write_frame, write_json
from distgp.util.log import get_logger
from distgp.util.parallel import ordered_map, run_seeds

log = get_logger("distgp.harness")

BOUNDS_COLUMNS = [
    "E",
    "bnd_A_normalized",
    "bnd_B_normalized",
    "lower_bound_normalized",
    "mc_err_A_normalized",
    "mc_err_A_se",
    "mc_err_B_normalized",
    "mc_err_B_se",
]
SURE_COLUMNS = [
    "run",
    "sure_err_A", "oracle_err_A", "gamma_sure_A", "gamma_oracle_A",
    "sure_err_B", "oracle_err_B", "gamma_sure_B", "E_sure_B", "gamma_oracle_B", "E_oracle_B",
]
TREND_COLUMNS = [
    "M",
    "E_fixed", "err_A_fixed", "se_A_fixed", "err_B_fixed", "se_B_fixed", "lower_bound_fixed",
    "E_sched", "err_A_sched", "se_A_sched", "err_B_sched", "se_B_sched", "lower_bound_sched",
]


@dataclass
class ExperimentResult:
    name: str
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    summary: Dict[str, Any] = field(default_factory=dict)
    documents: Dict[str, Any] = field(default_factory=dict)

    def write(self, out_dir: Path) -> List[Path]:
        paths = [write_frame(df, out_dir / f"{key}.csv") for key, df in self.tables.items()]
        paths += [write_json(doc, out_dir / f"{key}.json") for key, doc in self.documents.items()]
        paths.append(write_json({"experiment": self.name, **self.summary}, out_dir / "summary.json"))
        return paths


def mean_se(values: np.ndarray, axis: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Monte Carlo mean and its standard error, ignoring NaN entries."""
    values = np.asarray(values, dtype=float)
    n = np.sum(~np.isnan(values), axis=axis)
    mean = np.nanmean(values, axis=axis)
    sd = np.nanstd(values, axis=axis, ddof=1) if values.shape[axis] > 1 else np.zeros_like(mean)
    return mean, sd / np.sqrt(np.maximum(n, 1))


def _truth_eigen(config: ExperimentConfig, E_max: int) -> Tuple[EigenSystem, int]:
    E_truth = config.truth_size(E_max)
    return config.eigensystem(E_truth), E_truth


def _nested_errors(
    truth: SyntheticTruth,
    stats: SufficientStatistics,
    bases: Dict[int, BasisSpec],
    E_values: Sequence[int],
    noise_variance: float,
    gamma: float,
    tail: float,
) -> Tuple[List[float], List[float]]:
    """||f - f_hat||^2 of the A and B estimators for every E, from one set of E_max statistics.

    The KL basis is nested, so the E-dimensional statistics are leading blocks. Errors include
    `tail`, the expected energy of the coefficients past E_truth.
    """
    errs_A, errs_B = [], []
    for E in E_values:
        s = SufficientStatistics(leading(stats.V, E), stats.z[:E].copy(), stats.M)
        try:
            a_A = estimate_A(s, bases[E], noise_variance, gamma).a_hat
            errs_A.append(coefficient_error(truth.coefficients, a_A) + tail)
        except SingularNormalEquations:
            errs_A.append(np.nan)
        a_B = shrink_B(s.z, s.M, bases[E], noise_variance, gamma, E)
        errs_B.append(coefficient_error(truth.coefficients, a_B) + tail)
    return errs_A, errs_B


def bounds_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Optimized bounds, Monte Carlo true errors and the lower bound over the E grid."""
    E_values = sorted(set(config.E_values))
    E_max = E_values[-1]
    eigen, E_truth = _truth_eigen(config, E_max)
    norm = eigen.tail_sum(0)
    tail = eigen.tail_sum(E_truth)
    measure = config.input_measure()
    M, s2 = config.M, config.noise_variance

    log.info("bounds: E in [%d, %d], M=%d, %d runs, E_truth=%d", E_values[0], E_max, M, config.runs, E_truth)
    curve_A = bound_curve(eigen, E_values, M, config.alpha, s2, "A", on_infeasible="mark", workers=config.workers)
    curve_B = bound_curve(eigen, E_values, M, config.alpha, s2, "B", on_infeasible="mark", workers=config.workers)

    bases = {E: kl_basis(eigen, E) for E in E_values}

    def one_run(ss: np.random.SeedSequence) -> Tuple[List[float], List[float]]:
        rng = np.random.default_rng(ss)
        truth = sample_truth(eigen, E_truth, rng)
        data = generate_dataset(truth, measure, M, s2, rng)
        stats = statistics_from_data(data, bases[E_max])
        return _nested_errors(truth, stats, bases, E_values, s2, config.gamma, tail)

    results = ordered_map(one_run, run_seeds(config.seed, config.runs), config.workers)
    err_A, se_A = mean_se(np.array([r[0] for r in results]))
    err_B, se_B = mean_se(np.array([r[1] for r in results]))

    table = pd.DataFrame({
        "E": E_values,
        "bnd_A_normalized": curve_A["bnd_normalized"].to_numpy(),
        "bnd_B_normalized": curve_B["bnd_normalized"].to_numpy(),
        "lower_bound_normalized": curve_A["lower_bound_normalized"].to_numpy(),
        "mc_err_A_normalized": err_A / norm,
        "mc_err_A_se": se_A / norm,
        "mc_err_B_normalized": err_B / norm,
        "mc_err_B_se": se_B / norm,
    }, columns=BOUNDS_COLUMNS)

    feasible_B = curve_B[curve_B["feasible"].astype(bool)]
    summary: Dict[str, Any] = {
        "family": eigen.family,
        "M": M,
        "alpha": config.alpha,
        "noise_variance": s2,
        "runs": config.runs,
        "seed": config.seed,
        "E_truth": E_truth,
        "prior_variance": norm,
        "bnd_B_argmin": int(feasible_B.loc[feasible_B["bnd_normalized"].idxmin(), "E"]) if len(feasible_B) else None,
        "mc_err_B_argmin": int(E_values[int(np.nanargmin(err_B))]),
    }
    return ExperimentResult("bounds", {"bounds_A": curve_A, "bounds_B": curve_B, "bounds_vs_mc": table}, summary)


def sure_vs_oracle_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Per-run coefficient errors of SURE-tuned and oracle-tuned estimates, and S_p."""
    E, M, s2 = config.E, config.M, config.noise_variance
    eigen, E_truth = _truth_eigen(config, E)
    tail = eigen.tail_sum(E_truth)
    basis = kl_basis(eigen, E)
    measure = config.input_measure()
    grid_a, grid_b = config.grid_a(), config.grid_b()
    do_A = config.estimator in ("A", "both")
    do_B = config.estimator in ("B", "both")
    if do_B:
        grid_b.check_truncations(E)

    def one_run(item: Tuple[int, np.random.SeedSequence]) -> Dict[str, Any]:
        run, ss = item
        rng = np.random.default_rng(ss)
        truth = sample_truth(eigen, E_truth, rng)
        data = generate_dataset(truth, measure, M, s2, rng)
        stats = statistics_from_data(data, basis)
        a_true = truth.coefficients
        row: Dict[str, Any] = {"run": run}
        if do_A:
            gamma, _ = tune_A(stats, basis, s2, grid_a)
            family = family_A(stats, basis, s2, grid_a.gammas)
            key, err = oracle_tune(family, a_true=a_true)
            row.update(
                sure_err_A=coefficient_error(a_true, family[gamma].a_hat) + tail,
                oracle_err_A=err + tail,
                gamma_sure_A=gamma,
                gamma_oracle_A=key,
            )
        if do_B:
            gamma, E_prime, _ = tune_B(stats.z, stats.V, basis, s2, M, grid_b)
            family = family_B(stats, basis, s2, grid_b)
            key, err = oracle_tune(family, a_true=a_true)
            row.update(
                sure_err_B=coefficient_error(a_true, family[(gamma, E_prime)].a_hat) + tail,
                oracle_err_B=err + tail,
                gamma_sure_B=gamma,
                E_sure_B=E_prime,
                gamma_oracle_B=key[0],
                E_oracle_B=key[1],
            )
        log.debug("sure-study run %d done", run)
        return row

    log.info("sure-study: M=%d, E=%d, %d runs", M, E, config.runs)
    rows = ordered_map(one_run, enumerate(run_seeds(config.seed, config.runs)), config.workers)
    table = pd.DataFrame(rows, columns=SURE_COLUMNS)

    summary: Dict[str, Any] = {"M": M, "E": E, "runs": config.runs, "seed": config.seed, "E_truth": E_truth}
    for est, enabled in (("A", do_A), ("B", do_B)):
        if enabled:
            summary[f"S_p_{est}"] = float(table[f"oracle_err_{est}"].mean() / table[f"sure_err_{est}"].mean())
            summary[f"mean_sure_err_{est}"] = float(table[f"sure_err_{est}"].mean())
            summary[f"mean_oracle_err_{est}"] = float(table[f"oracle_err_{est}"].mean())
    return ExperimentResult("sure_vs_oracle", {"sure_vs_oracle": table}, summary)


def sqrt_schedule(M: int) -> int:
    """E(M) = ceil(M^(1/2))."""
    return int(math.ceil(math.sqrt(M)))


def consistency_trend_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Errors against M for a fixed E and for the E(M) = ceil(sqrt(M)) schedule.

    Run r keeps its truth across the M grid and draws the data for the i-th M from the
    (r, i) grandchild of the master seed, so differences between M values are paired.
    """
    M_values = list(config.M_values)
    if any(b <= a for a, b in zip(M_values, M_values[1:])):
        raise InvalidParameter("M grid must be strictly ascending", M_values=M_values)
    E_fixed = config.E
    schedule = [sqrt_schedule(M) for M in M_values]
    E_max = max(E_fixed, max(schedule))
    eigen, E_truth = _truth_eigen(config, E_max)
    tail = eigen.tail_sum(E_truth)
    measure = config.input_measure()
    s2 = config.noise_variance
    bases = {E: kl_basis(eigen, E) for E in {E_fixed, *schedule}}
    truths = [sample_truth(eigen, E_truth, np.random.default_rng(ss)) for ss in run_seeds(config.seed, config.runs)]

    rows = []
    for i, (M, E_sched) in enumerate(zip(M_values, schedule)):
        E_pair = [E_fixed, E_sched]
        E_top = max(E_pair)

        def one_run(r: int) -> Tuple[List[float], List[float]]:
            rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(r, i)))
            data = generate_dataset(truths[r], measure, M, s2, rng)
            stats = statistics_from_data(data, bases[E_top])
            return _nested_errors(truths[r], stats, bases, E_pair, s2, config.gamma, tail)

        results = ordered_map(one_run, range(config.runs), config.workers)
        err_A, se_A = mean_se(np.array([r[0] for r in results]))
        err_B, se_B = mean_se(np.array([r[1] for r in results]))
        rows.append({
            "M": M,
            "E_fixed": E_fixed,
            "err_A_fixed": err_A[0], "se_A_fixed": se_A[0],
            "err_B_fixed": err_B[0], "se_B_fixed": se_B[0],
            "lower_bound_fixed": lower_bound(eigen, E_fixed),
            "E_sched": E_sched,
            "err_A_sched": err_A[1], "se_A_sched": se_A[1],
            "err_B_sched": err_B[1], "se_B_sched": se_B[1],
            "lower_bound_sched": lower_bound(eigen, E_sched),
        })
        log.info("trend: M=%d done (E_fixed=%d, E_sched=%d)", M, E_fixed, E_sched)

    table = pd.DataFrame(rows, columns=TREND_COLUMNS)
    summary = {"E_fixed": E_fixed, "runs": config.runs, "seed": config.seed, "E_truth": E_truth}
    return ExperimentResult("trend", {"trend": table}, summary)


def synthetic_data(config: ExperimentConfig, E: Optional[int] = None) -> Tuple[SyntheticTruth, Dataset]:
    """One truth and one dataset of size config.M from the master seed."""
    eigen, E_truth = _truth_eigen(config, E or config.E)
    rng = np.random.default_rng(config.seed)
    truth = sample_truth(eigen, E_truth, rng)
    return truth, generate_dataset(truth, config.input_measure(), config.M, config.noise_variance, rng)


def _fit_eigen(config: ExperimentConfig, truth: Optional[SyntheticTruth]) -> EigenSystem:
    return truth.eigen if truth is not None else config.eigensystem(config.E)


def fit_experiment(
    config: ExperimentConfig,
    data: Optional[Dataset] = None,
    distributed: bool = False,
) -> ExperimentResult:
    """SURE-tuned A and B fits on a KL basis, centralized or over the consensus protocols.

    Without `data` a synthetic truth is drawn and the coefficient errors are reported too.
    """
    truth = None
    if data is None:
        truth, data = synthetic_data(config)
    s2 = data.noise_variance or config.noise_variance
    basis = kl_basis(_fit_eigen(config, truth), config.E)
    grid_a, grid_b = config.grid_a(), config.grid_b()
    do_A = config.estimator in ("A", "both")
    do_B = config.estimator in ("B", "both")
    summary: Dict[str, Any] = {"M": data.M, "E": basis.E, "basis_id": basis.basis_id, "distributed": distributed}
    tables: Dict[str, pd.DataFrame] = {}

    estimates = {}
    if distributed:
        N = config.topology.N or data.M
        topology = config.topology.build(N, np.random.default_rng([config.seed, 1]))
        parts = data.split(topology.N)
        cc = config.consensus_config()
        summary["agents"] = topology.N
        summary["edges"] = len(topology.edges)
        if do_A:
            fit = distributed_fit_A(parts, basis, s2, grid_a, topology, cc)
            estimates["A"] = fit.agents[0].estimate
            summary["protocol_A"] = fit.summary.to_dict()
        if do_B:
            fit = distributed_fit_B(parts, basis, s2, grid_b, topology, cc)
            estimates["B"] = fit.agents[0].estimate
            summary["protocol_B"] = fit.summary.to_dict()
    else:
        stats = statistics_from_data(data, basis)
        if do_A:
            gamma, _ = tune_A(stats, basis, s2, grid_a)
            estimates["A"] = estimate_A(stats, basis, s2, gamma)
        if do_B:
            gamma, E_prime, _ = tune_B(stats.z, stats.V, basis, s2, stats.M, grid_b)
            estimates["B"] = estimate_B(stats, basis, s2, gamma, E_prime)

    for key, est in estimates.items():
        summary[f"estimate_{key}"] = est.to_json()
        if truth is not None:
            summary[f"err_{key}"] = coefficient_error(truth.coefficients, est.a_hat)
        tables[f"coefficients_{key}"] = pd.DataFrame({"e": np.arange(1, est.E + 1), "a_hat": est.a_hat})
    documents = {"expansion": basis_to_model(basis).model_dump()}
    return ExperimentResult("fit", tables, summary, documents)


def tune_experiment(config: ExperimentConfig, data: Optional[Dataset] = None) -> ExperimentResult:
    """Full SURE traces over the A and B grids on one dataset."""
    truth = None
    if data is None:
        truth, data = synthetic_data(config)
    s2 = data.noise_variance or config.noise_variance
    basis = kl_basis(_fit_eigen(config, truth), config.E)
    stats = statistics_from_data(data, basis)
    tables: Dict[str, pd.DataFrame] = {}
    summary: Dict[str, Any] = {"M": data.M, "E": basis.E, "noise_variance": s2}
    if config.estimator in ("A", "both"):
        evals = sure_trace_A(stats, basis, s2, config.grid_a().gammas)
        tables["trace_A"] = trace_frame(evals)
        best = select_A(evals)
        summary["selected_A"] = best.to_row()
    if config.estimator in ("B", "both"):
        evals = sure_trace_B(stats.z, stats.V, basis, s2, stats.M, config.grid_b())
        tables["trace_B"] = trace_frame(evals)
        best = select_B(evals)
        summary["selected_B"] = best.to_row()
    return ExperimentResult("tune", tables, summary)


def consensus_diagnostics(config: ExperimentConfig, N: int = 20) -> ExperimentResult:
    """Consensus alone on random payloads of the A (E^2 + E) and B (E) sizes."""
    topology = config.topology.build(config.topology.N or N, np.random.default_rng([config.seed, 1]))
    rng = np.random.default_rng([config.seed, 2])
    cc = config.consensus_config()
    E = config.E
    W = build_weights(topology, cc.weight_rule, cc.eps_w)
    tables: Dict[str, pd.DataFrame] = {}
    summary: Dict[str, Any] = {
        "agents": topology.N,
        "edges": len(topology.edges),
        "weight_rule": cc.weight_rule,
        "spectral_gap": spectral_gap(W),
        "tolerance": cc.tolerance,
    }
    for name, size in (("A", E * E + E), ("B", E)):
        payloads = rng.standard_normal((topology.N, size))
        res = run_average_consensus(payloads, topology, cc)
        tables[f"consensus_{name}"] = pd.DataFrame({
            "round": np.arange(len(res.deviations)),
            "max_deviation": res.deviations,
        })
        summary[f"payload_{name}"] = size
        summary[f"rounds_{name}"] = res.rounds
        summary[f"converged_{name}"] = res.converged
        summary[f"max_deviation_{name}"] = res.max_deviation
    return ExperimentResult("simulate", tables, summary)


def bound_curves(config: ExperimentConfig) -> ExperimentResult:
    """Optimized bound curves over E and, at E = config.E, the bounds against M at a fixed epsilon.

    The fixed epsilon is the optimum at the smallest M, which stays feasible as M grows.
    """
    E_values = sorted(set(config.E_values))
    eigen = config.eigensystem(max(E_values[-1], config.E))
    tables: Dict[str, pd.DataFrame] = {}
    summary: Dict[str, Any] = {"family": eigen.family, "M": config.M, "alpha": config.alpha}
    for which in ("A", "B"):
        curve = bound_curve(
            eigen, E_values, config.M, config.alpha, config.noise_variance, which,
            on_infeasible="mark", workers=config.workers,
        )
        tables[f"bounds_{which}"] = curve
        feasible = curve[curve["feasible"].astype(bool)]
        summary[f"bnd_{which}_argmin"] = int(feasible.loc[feasible["bnd_normalized"].idxmin(), "E"]) if len(feasible) else None

        M_values = sorted(set(config.M_values))
        query = BoundQuery(config.E, M_values[0], config.alpha, config.noise_variance, eigen)
        try:
            eps = optimize_epsilon(query, which).epsilon_used
        except InfeasibleConfiguration:
            log.warning("no feasible epsilon for E=%d at M=%d; bound-vs-M table skipped", config.E, M_values[0])
            continue
        tables[f"bounds_vs_M_{which}"] = bound_vs_M(
            eigen, config.E, M_values, config.alpha, config.noise_variance, eps, which
        )
    return ExperimentResult("bounds", tables, summary)
