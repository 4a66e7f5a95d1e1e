from __future__ import annotations

import numpy as np

from distgp.errors import InsufficientData, InvalidParameter
from distgp.kernel.basis import BasisSpec, kl_basis
from distgp.regression.data import Dataset
from distgp.regression.estimators import estimate_A
from distgp.regression.stats import statistics_from_data
from distgp.util.log import get_logger

log = get_logger("distgp.tuning.noise")


def estimate_noise_variance(calibration: Dataset, basis: BasisSpec, E: int | None = None) -> float:
    """Least-squares residual variance RSS / (n - E) of the unregularized A fit on a calibration set."""
    if E is not None and E != basis.E:
        if basis.kind != "kl_eigen":
            raise InvalidParameter(f"basis has E={basis.E}; cannot refit with E={E}")
        basis = kl_basis(basis.eigen, E)
    n = calibration.M
    if n <= basis.E:
        raise InsufficientData(
            f"calibration set has {n} samples, needs more than E={basis.E}",
            n=n,
            E=basis.E,
        )
    stats = statistics_from_data(calibration, basis)
    est = estimate_A(stats, basis, 0.0, 0.0)
    residuals = calibration.outputs - basis.features(calibration.inputs) @ est.a_hat
    sigma2 = float(np.sum(residuals**2) / (n - basis.E))
    log.info("estimated noise variance %.6g from %d calibration samples (E=%d)", sigma2, n, basis.E)
    return sigma2
