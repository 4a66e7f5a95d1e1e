from distgp.regression.data import Dataset, read_table
from distgp.regression.estimators import (
    CoefficientEstimate,
    MapPredictor,
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

__all__ = [
    "CoefficientEstimate",
    "Dataset",
    "MapPredictor",
    "SufficientStatistics",
    "aggregate_statistics",
    "estimate_A",
    "estimate_B",
    "estimate_MAP",
    "local_statistics",
    "local_statistics_batch",
    "predict",
    "read_table",
    "shrink_B",
    "spd_solve",
    "statistics_from_data",
]
