"""Field-data pipeline: rescale, split, estimate the noise, tune, and score on held-out data.

Per run two sets are drawn. With a group column (e.g. acquisition month) one group is split
2/3 train, 1/3 test and a second group is the noise-calibration set. Without one, a random
calibration fraction is set aside first and the remainder is split the same way.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from distgp.errors import InsufficientData, InvalidInput, InvalidParameter
from distgp.harness.config import ExperimentConfig, FieldConfig
from distgp.harness.experiments import ExperimentResult
from distgp.kernel.basis import BasisSpec, kernel_sections_basis, kl_basis, nystrom_basis
from distgp.kernel.eigen import numerical_eigensystem
from distgp.kernel.gram import expected_gram
from distgp.kernel.kernels import KernelSpec
from distgp.kernel.measures import InputMeasure
from distgp.kernel.schema import load_anchors
from distgp.regression.data import Dataset, read_table
from distgp.regression.stats import statistics_from_data
from distgp.tuning.noise import estimate_noise_variance
from distgp.tuning.oracle import family_A, family_B, holdout_rss, oracle_tune
from distgp.tuning.sure import select_A, select_B, sure_trace_A, sure_trace_B
from distgp.util.log import get_logger
from distgp.util.parallel import ordered_map, run_seeds

log = get_logger("distgp.harness.field")

RSS_COLUMNS = [
    "run", "n_train", "n_test", "n_calibration", "sigma2_hat",
    "gamma_A_sure", "rss_A_sure", "gamma_A_oracle", "rss_A_oracle",
    "gamma_B_sure", "E_B_sure", "rss_B_sure", "gamma_B_oracle", "E_B_oracle", "rss_B_oracle",
]
CURVE_COLUMNS = ["estimator", "gamma", "E_prime", "J", "rss"]


@dataclass(frozen=True, eq=False)
class Rescaling:
    """Per-axis affine map of [lower, upper] onto [0, 1]."""

    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray, bounds: Optional[List[List[float]]] = None) -> "Rescaling":
        if bounds is not None:
            b = np.asarray(bounds, dtype=float)
            if b.shape != (X.shape[1], 2):
                raise InvalidParameter(f"bounds must be {X.shape[1]} [lower, upper] pairs")
            lo, hi = b[:, 0], b[:, 1]
        else:
            lo, hi = X.min(axis=0), X.max(axis=0)
        if np.any(hi <= lo):
            raise InvalidInput("every input axis needs a positive range to rescale")
        return cls(lo, hi)

    def apply(self, X: np.ndarray) -> np.ndarray:
        out = (X - self.lower) / (self.upper - self.lower)
        outside = np.flatnonzero(np.any((out < 0) | (out > 1), axis=1))
        if outside.size:
            raise InvalidInput(f"{outside.size} inputs fall outside the rescaling bounds", first=int(outside[0]))
        return out


@dataclass(frozen=True, eq=False)
class FieldSplit:
    train: Dataset
    test: Dataset
    calibration: Dataset
    rescaling: Rescaling = field(repr=False)
    indices: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)


def split_field(
    X: np.ndarray,
    y: np.ndarray,
    groups: Optional[np.ndarray],
    rescaling: Rescaling,
    settings: FieldConfig,
    rng: np.random.Generator,
) -> FieldSplit:
    """Disjoint train/test/calibration sets from already rescaled inputs X."""
    n = y.size
    if groups is not None:
        labels = np.unique(groups)
        if labels.size < 2:
            raise InsufficientData("need at least two groups (fit and calibration)", groups=int(labels.size))
        g_fit, g_cal = rng.choice(labels, size=2, replace=False)
        fit_idx = np.flatnonzero(groups == g_fit)
        cal_idx = np.flatnonzero(groups == g_cal)
    else:
        perm = rng.permutation(n)
        n_cal = int(round(settings.calibration_fraction * n))
        cal_idx, fit_idx = perm[:n_cal], perm[n_cal:]
    fit_idx = rng.permutation(fit_idx)
    n_train = int(round(settings.train_fraction * fit_idx.size))
    train_idx, test_idx = fit_idx[:n_train], fit_idx[n_train:]
    if min(train_idx.size, test_idx.size, cal_idx.size) < 1:
        raise InsufficientData(
            "not enough rows for the train/test/calibration split",
            n_train=int(train_idx.size), n_test=int(test_idx.size), n_calibration=int(cal_idx.size),
        )

    def part(idx: np.ndarray) -> Dataset:
        return Dataset(X[idx], y[idx], 0.0)

    return FieldSplit(
        train=part(train_idx),
        test=part(test_idx),
        calibration=part(cal_idx),
        rescaling=rescaling,
        indices={"train": train_idx, "test": test_idx, "calibration": cal_idx},
    )


def _fixed_basis(
    config: ExperimentConfig,
    kernel: KernelSpec,
    measure: InputMeasure,
    rescaling: Rescaling,
) -> Optional[BasisSpec]:
    """Bases that do not depend on the training inputs; None for Nystrom."""
    kind, E = config.field.basis, config.E
    if kind == "kl_numeric":
        eigen = numerical_eigensystem(kernel, measure, max(config.field.q, E), E, seed=config.seed)
        return kl_basis(eigen, E)
    if kind == "kernel_sections":
        if config.field.anchors is not None:
            anchors = rescaling.apply(load_anchors(config.field.anchors, config.dim))
            if anchors.shape[0] != E:
                raise InvalidParameter(f"anchor file has {anchors.shape[0]} points, E={E}")
        else:
            anchors = measure.sample_stratified(E, seed=config.seed)
        basis = kernel_sections_basis(kernel, anchors)
        return basis.with_expected_gram(expected_gram(basis, measure, "quadrature", n=config.quadrature_nodes))
    return None


def _nystrom_on(kernel: KernelSpec, train: Dataset, E: int, measure: InputMeasure) -> BasisSpec:
    if train.M < E:
        raise InsufficientData(f"Nystrom basis needs at least E={E} training inputs, got {train.M}", n=train.M, E=E)
    basis = nystrom_basis(kernel, train.inputs, E)
    return basis.with_expected_gram(expected_gram(basis, measure, "anchors"))


def _one_run(
    run: int,
    ss: np.random.SeedSequence,
    X: np.ndarray,
    y: np.ndarray,
    groups: Optional[np.ndarray],
    rescaling: Rescaling,
    config: ExperimentConfig,
    kernel: KernelSpec,
    measure: InputMeasure,
    fixed: Optional[BasisSpec],
) -> Tuple[Dict[str, Any], pd.DataFrame]:
    rng = np.random.default_rng(ss)
    split = split_field(X, y, groups, rescaling, config.field, rng)
    basis = fixed if fixed is not None else _nystrom_on(kernel, split.train, config.E, measure)
    s2 = estimate_noise_variance(split.calibration, basis)
    stats = statistics_from_data(split.train, basis)
    grid_a, grid_b = config.grid_a(), config.grid_b()

    evals_A = sure_trace_A(stats, basis, s2, grid_a.gammas)
    fam_A = family_A(stats, basis, s2, grid_a.gammas)
    best_A = select_A(evals_A)
    key_A, rss_A_oracle = oracle_tune(fam_A, test=split.test)

    evals_B = sure_trace_B(stats.z, stats.V, basis, s2, stats.M, grid_b)
    fam_B = family_B(stats, basis, s2, grid_b)
    best_B = select_B(evals_B)
    key_B, rss_B_oracle = oracle_tune(fam_B, test=split.test)

    row = {
        "run": run,
        "n_train": split.train.M,
        "n_test": split.test.M,
        "n_calibration": split.calibration.M,
        "sigma2_hat": s2,
        "gamma_A_sure": best_A.gamma,
        "rss_A_sure": holdout_rss(fam_A[best_A.gamma], split.test),
        "gamma_A_oracle": key_A,
        "rss_A_oracle": rss_A_oracle,
        "gamma_B_sure": best_B.gamma,
        "E_B_sure": int(best_B.E_prime),
        "rss_B_sure": holdout_rss(fam_B[(best_B.gamma, int(best_B.E_prime))], split.test),
        "gamma_B_oracle": key_B[0],
        "E_B_oracle": key_B[1],
        "rss_B_oracle": rss_B_oracle,
    }
    curves = [
        {"estimator": "A", "gamma": ev.gamma, "E_prime": ev.E_prime, "J": ev.J,
         "rss": holdout_rss(fam_A[ev.gamma], split.test)}
        for ev in evals_A if ev.gamma in fam_A
    ] + [
        {"estimator": "B", "gamma": ev.gamma, "E_prime": ev.E_prime, "J": ev.J,
         "rss": holdout_rss(fam_B[(ev.gamma, int(ev.E_prime))], split.test)}
        for ev in evals_B if (ev.gamma, int(ev.E_prime)) in fam_B
    ]
    log.debug("field run %d: sigma2_hat=%.4g, rss_A=%.4g, rss_B=%.4g", run, s2, row["rss_A_sure"], row["rss_B_sure"])
    return row, pd.DataFrame(curves, columns=CURVE_COLUMNS)


def field_pipeline(path: Path, config: ExperimentConfig) -> ExperimentResult:
    """SURE- and oracle-tuned held-out RSS for both estimators over config.runs random splits."""
    fc = config.field
    keep = [fc.group_column] if fc.group_column else []
    df = read_table(path, fc.columns or None, keep=keep)
    xcols = [c for c in df.columns if c.startswith("x_")]
    if len(xcols) != config.dim:
        raise InvalidParameter(f"kernel is {config.dim}-dimensional, data has {len(xcols)} inputs")
    X_raw = df[xcols].to_numpy(dtype=float)
    y = df["y"].to_numpy(dtype=float)
    groups = df[fc.group_column].to_numpy() if fc.group_column else None

    rescaling = Rescaling.fit(X_raw, fc.bounds)
    X = rescaling.apply(X_raw)
    kernel = config.kernel_spec()
    measure = InputMeasure.uniform(0.0, 1.0, config.dim)
    fixed = _fixed_basis(config, kernel, measure, rescaling)

    log.info("field: %d rows, %d inputs, basis=%s, E=%d, %d runs", y.size, config.dim, fc.basis, config.E, config.runs)
    results = ordered_map(
        lambda item: _one_run(item[0], item[1], X, y, groups, rescaling, config, kernel, measure, fixed),
        list(enumerate(run_seeds(config.seed, config.runs))),
        config.workers,
    )
    table = pd.DataFrame([r[0] for r in results], columns=RSS_COLUMNS)
    summary = {
        "rows": int(y.size),
        "basis": fc.basis,
        "E": config.E,
        "runs": config.runs,
        "seed": config.seed,
        "mean_rss_A_sure": float(table["rss_A_sure"].mean()),
        "mean_rss_A_oracle": float(table["rss_A_oracle"].mean()),
        "mean_rss_B_sure": float(table["rss_B_sure"].mean()),
        "mean_rss_B_oracle": float(table["rss_B_oracle"].mean()),
        "mean_sigma2_hat": float(table["sigma2_hat"].mean()),
    }
    return ExperimentResult("field", {"field_rss": table, "risk_curves": results[0][1]}, summary)
