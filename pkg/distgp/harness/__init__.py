from distgp.harness.config import ExperimentConfig, load_config, preset
from distgp.harness.experiments import (
    ExperimentResult,
    bound_curves,
    bounds_experiment,
    consensus_diagnostics,
    consistency_trend_experiment,
    fit_experiment,
    sure_vs_oracle_experiment,
    tune_experiment,
)
from distgp.harness.field import FieldSplit, Rescaling, field_pipeline, split_field
from distgp.harness.truth import SyntheticTruth, generate_dataset, mse_under_mu, sample_truth

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "FieldSplit",
    "Rescaling",
    "SyntheticTruth",
    "bound_curves",
    "bounds_experiment",
    "consensus_diagnostics",
    "consistency_trend_experiment",
    "field_pipeline",
    "fit_experiment",
    "generate_dataset",
    "load_config",
    "mse_under_mu",
    "preset",
    "sample_truth",
    "split_field",
    "sure_vs_oracle_experiment",
    "tune_experiment",
]
