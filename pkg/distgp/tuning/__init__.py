from distgp.tuning.noise import estimate_noise_variance
from distgp.tuning.oracle import coefficient_error, family_A, family_B, oracle_tune, holdout_rss
from distgp.tuning.sure import (
    SureEvaluation,
    TuningGrid,
    coefficient_family_B,
    predicted_z,
    select_A,
    select_B,
    sections_family_B,
    sure_kernel_sections_B,
    sure_risk_A,
    sure_risk_B,
    sure_trace_A,
    sure_trace_B,
    trace_frame,
    tune_A,
    tune_B,
    write_trace,
)

__all__ = [
    "SureEvaluation",
    "TuningGrid",
    "coefficient_error",
    "coefficient_family_B",
    "estimate_noise_variance",
    "family_A",
    "family_B",
    "oracle_tune",
    "predicted_z",
    "sections_family_B",
    "select_A",
    "select_B",
    "sure_kernel_sections_B",
    "sure_risk_A",
    "sure_risk_B",
    "sure_trace_A",
    "sure_trace_B",
    "holdout_rss",
    "trace_frame",
    "tune_A",
    "tune_B",
    "write_trace",
]
