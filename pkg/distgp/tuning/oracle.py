from __future__ import annotations

from typing import Dict, Hashable, Mapping, Optional, Tuple

import numpy as np

from distgp.errors import InvalidParameter, SingularNormalEquations, TuningFailed
from distgp.kernel.basis import BasisSpec
from distgp.regression.data import Dataset
from distgp.regression.estimators import CoefficientEstimate, estimate_A, estimate_B
from distgp.regression.stats import SufficientStatistics
from distgp.tuning.sure import GridKey, TuningGrid
from distgp.util.log import get_logger

log = get_logger("distgp.tuning.oracle")


def coefficient_error(a_true: np.ndarray, a_hat: np.ndarray) -> float:
    """sum_e (a_e - a_hat_e)^2 with a_hat padded by zeros up to the truth's length."""
    a_true = np.asarray(a_true, dtype=float)
    a_hat = np.asarray(a_hat, dtype=float)
    n = max(a_true.size, a_hat.size)
    diff = np.zeros(n)
    diff[: a_true.size] += a_true
    diff[: a_hat.size] -= a_hat
    return float(diff @ diff)


def holdout_rss(est: CoefficientEstimate, test: Dataset) -> float:
    """Mean squared prediction error on a held-out set."""
    r = test.outputs - est.basis.features(test.inputs) @ est.a_hat
    return float(np.mean(r**2))


def family_A(
    stats: SufficientStatistics,
    basis: BasisSpec,
    noise_variance: float,
    gammas: Tuple[float, ...],
) -> Dict[float, CoefficientEstimate]:
    out: Dict[float, CoefficientEstimate] = {}
    for g in gammas:
        try:
            out[g] = estimate_A(stats, basis, noise_variance, g)
        except SingularNormalEquations:
            log.debug("A estimate skipped at gamma=%g", g)
    return out


def family_B(
    stats: SufficientStatistics,
    basis: BasisSpec,
    noise_variance: float,
    grid: TuningGrid,
) -> Dict[GridKey, CoefficientEstimate]:
    grid.check_truncations(basis.E)
    out: Dict[GridKey, CoefficientEstimate] = {}
    for g, e in grid.pairs():
        try:
            out[(g, e)] = estimate_B(stats, basis, noise_variance, g, e)
        except SingularNormalEquations:
            log.debug("B estimate skipped at gamma=%g, E'=%d", g, e)
    return out


def oracle_tune(
    estimates: Mapping[Hashable, CoefficientEstimate],
    a_true: Optional[np.ndarray] = None,
    test: Optional[Dataset] = None,
) -> Tuple[Hashable, float]:
    """Key of the candidate with the smallest true error.

    With `a_true` the error is the coefficient error (synthetic studies); with `test` it is
    the held-out RSS (field studies). Ties keep the first candidate in mapping order.
    """
    if (a_true is None) == (test is None):
        raise InvalidParameter("oracle_tune needs exactly one of a_true or test")
    if not estimates:
        raise TuningFailed("oracle has no candidate estimates")
    best_key, best_err = None, np.inf
    for key, est in estimates.items():
        err = coefficient_error(a_true, est.a_hat) if a_true is not None else holdout_rss(est, test)
        if err < best_err:
            best_key, best_err = key, err
    return best_key, float(best_err)
