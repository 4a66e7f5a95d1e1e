from __future__ import annotations

import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from distgp.consensus.protocol import ConsensusConfig
from distgp.consensus.topology import NetworkTopology, random_connected_topology
from distgp.errors import InvalidInput, InvalidParameter, ParseError
from distgp.kernel.eigen import (
    EigenSystem,
    custom_eigensystem,
    exponential_eigensystem,
    kernel_from_spectrum,
    numerical_eigensystem,
    spline_eigensystem,
)
from distgp.kernel.kernels import KernelSpec, gaussian_kernel, spline_kernel
from distgp.kernel.measures import InputMeasure, Seed
from distgp.tuning.sure import TuningGrid
from distgp.util.paths import DEFAULT_OUT_DIR


class KernelConfig(BaseModel):
    family: Literal["spline_first_order", "exponential", "gaussian", "custom"] = "spline_first_order"
    # eta in exp(-||x - x'||^2 / eta)
    length_scale: Optional[float] = None
    rate: float = 0.1
    lambdas: List[float] = Field(default_factory=list)
    dim: int = 1

    @field_validator("rate")
    @classmethod
    def check_rate(cls, v: float) -> float:
        if v <= 0:
            raise ValueError("rate must be > 0")
        return v

    @model_validator(mode="after")
    def check_family(self) -> "KernelConfig":
        if self.family == "gaussian" and (self.length_scale is None or self.length_scale <= 0):
            raise ValueError("gaussian kernel needs length_scale > 0")
        if self.family == "custom" and not self.lambdas:
            raise ValueError("custom kernel needs lambdas")
        if self.family != "gaussian" and self.dim != 1:
            raise ValueError(f"{self.family} kernels are one-dimensional here")
        return self


class MeasureConfig(BaseModel):
    kind: Literal["uniform", "gaussian_mixture"] = "uniform"
    lower: List[float] | float = 0.0
    upper: List[float] | float = 1.0
    weights: List[float] = Field(default_factory=lambda: [1.0])
    means: List[List[float]] = Field(default_factory=lambda: [[0.0]])
    variances: List[List[float]] = Field(default_factory=lambda: [[1.0]])

    def build(self, dim: int) -> InputMeasure:
        if self.kind == "uniform":
            return InputMeasure.uniform(self.lower, self.upper, dim)
        return InputMeasure.gaussian_mixture(self.weights, self.means, self.variances)


class GridConfig(BaseModel):
    """Either explicit `gammas` or a log-spaced range [gamma_min, gamma_max] with n_gammas points."""

    gammas: Optional[List[float]] = None
    gamma_min: float = 1e-3
    gamma_max: float = 1e3
    n_gammas: int = 50
    truncations: List[int] = Field(default_factory=list)

    @field_validator("gammas")
    @classmethod
    def check_gammas(cls, v: Optional[List[float]]) -> Optional[List[float]]:
        if v is not None and (not v or any(g < 0 for g in v)):
            raise ValueError("gammas must be a nonempty list of values >= 0")
        return v

    @field_validator("n_gammas")
    @classmethod
    def check_n(cls, v: int) -> int:
        if v < 1:
            raise ValueError("n_gammas must be >= 1")
        return v

    def build(self) -> TuningGrid:
        if self.gammas is not None:
            return TuningGrid(tuple(self.gammas), tuple(self.truncations))
        return TuningGrid.log_spaced(self.gamma_min, self.gamma_max, self.n_gammas, self.truncations)


class TopologyConfig(BaseModel):
    kind: Literal["random", "path", "ring", "complete", "file"] = "random"
    N: Optional[int] = None
    p: Optional[float] = None
    path: Optional[Path] = None

    def build(self, N: int, seed: Seed = None) -> NetworkTopology:
        N = self.N or N
        if self.kind == "file":
            if self.path is None:
                raise InvalidParameter("file topology needs a path")
            return NetworkTopology.from_csv(self.path)
        if self.kind == "path":
            return NetworkTopology.path(N)
        if self.kind == "ring":
            return NetworkTopology.ring(N)
        if self.kind == "complete":
            return NetworkTopology.complete(N)
        return random_connected_topology(N, self.p, seed)


class ConsensusSettings(BaseModel):
    weight_rule: Literal["metropolis", "uniform"] = "metropolis"
    eps_w: Optional[float] = None
    tolerance: float = 1e-9
    max_rounds: int = 100_000
    exact: bool = False

    def build(self) -> ConsensusConfig:
        return ConsensusConfig(self.weight_rule, self.eps_w, self.tolerance, self.max_rounds, self.exact)


class FieldConfig(BaseModel):
    # source column -> x_1..x_d / y
    columns: Dict[str, str] = Field(default_factory=dict)
    # rows sharing a group value form one acquisition (e.g. one month)
    group_column: Optional[str] = None
    basis: Literal["kl_numeric", "kernel_sections", "nystrom"] = "kl_numeric"
    bounds: Optional[List[List[float]]] = None
    # kernel-section anchors in original coordinates; stratified draws on the unit box otherwise
    anchors: Optional[Path] = None
    train_fraction: float = 2.0 / 3.0
    calibration_fraction: float = 1.0 / 3.0
    q: int = 2000

    @field_validator("train_fraction", "calibration_fraction")
    @classmethod
    def check_fraction(cls, v: float) -> float:
        if not 0 < v < 1:
            raise ValueError("fractions must lie in (0, 1)")
        return v


class ExperimentConfig(BaseModel):
    name: str = "experiment"
    kernel: KernelConfig = Field(default_factory=KernelConfig)
    measure: MeasureConfig = Field(default_factory=MeasureConfig)
    M: int = 10_000
    M_values: List[int] = Field(default_factory=lambda: [100, 400, 1600, 6400])
    E: int = 20
    E_values: List[int] = Field(default_factory=lambda: list(range(1, 101)))
    E_truth: Optional[int] = None
    noise_variance: float = 0.01
    alpha: float = 0.05
    gamma: float = 1.0
    estimator: Literal["A", "B", "both"] = "both"
    grid_A: GridConfig = Field(default_factory=GridConfig)
    grid_B: GridConfig = Field(default_factory=lambda: GridConfig(gammas=[1e-3, 0.0, 1e3], truncations=[1, 5, 10, 20]))
    runs: int = 50
    seed: int = 0
    workers: int = 1
    quadrature_nodes: int = 10_000
    q: int = 2000
    topology: TopologyConfig = Field(default_factory=TopologyConfig)
    consensus: ConsensusSettings = Field(default_factory=ConsensusSettings)
    field: FieldConfig = Field(default_factory=FieldConfig)
    out_dir: Path = DEFAULT_OUT_DIR

    @field_validator("alpha")
    @classmethod
    def check_alpha(cls, v: float) -> float:
        if not 0 < v < 1:
            raise ValueError("alpha must lie in (0, 1)")
        return v

    @field_validator("noise_variance")
    @classmethod
    def check_noise(cls, v: float) -> float:
        if v <= 0:
            raise ValueError("noise_variance must be > 0")
        return v

    @field_validator("M", "E", "runs", "workers", "q", "quadrature_nodes")
    @classmethod
    def check_positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be >= 1")
        return v

    @field_validator("gamma")
    @classmethod
    def check_gamma(cls, v: float) -> float:
        if v < 0:
            raise ValueError("gamma must be >= 0")
        return v

    @field_validator("E_values", "M_values")
    @classmethod
    def check_counts(cls, v: List[int]) -> List[int]:
        if not v or any(x < 1 for x in v):
            raise ValueError("must be a nonempty list of counts >= 1")
        return v

    @model_validator(mode="after")
    def check_grids(self) -> "ExperimentConfig":
        bad = [e for e in self.grid_B.truncations if not 1 <= e <= self.E]
        if bad:
            raise ValueError(f"grid_B truncations must lie in [1, E={self.E}], got {bad}")
        if self.E_truth is not None and self.E_truth < self.E:
            raise ValueError("E_truth must be >= E")
        return self

    @property
    def dim(self) -> int:
        return self.kernel.dim

    def truth_size(self, E_max: int | None = None) -> int:
        """E_truth, or 10x the largest E under study."""
        if self.E_truth is not None:
            return self.E_truth
        return 10 * (E_max or max(self.E, max(self.E_values)))

    def input_measure(self) -> InputMeasure:
        return self.measure.build(self.dim)

    def kernel_spec(self) -> KernelSpec:
        k = self.kernel
        if k.family == "spline_first_order":
            return spline_kernel()
        if k.family == "gaussian":
            return gaussian_kernel(k.length_scale, dim=k.dim)
        return kernel_from_spectrum(self.eigensystem(max(self.E, len(k.lambdas))))

    def eigensystem(self, E_max: int | None = None, seed: Seed = None) -> EigenSystem:
        """Closed-form eigensystem for spline/exponential/custom spectra, numerical KL otherwise."""
        E_max = E_max or self.E
        k = self.kernel
        if k.family == "spline_first_order":
            return spline_eigensystem(E_max)
        if k.family == "exponential":
            return exponential_eigensystem(E_max, k.rate)
        if k.family == "custom":
            return custom_eigensystem(k.lambdas)
        return numerical_eigensystem(
            self.kernel_spec(), self.input_measure(), max(self.q, E_max), E_max,
            seed=self.seed if seed is None else seed,
        )

    def grid_a(self) -> TuningGrid:
        return self.grid_A.build()

    def grid_b(self) -> TuningGrid:
        return self.grid_B.build()

    def consensus_config(self) -> ConsensusConfig:
        return self.consensus.build()

    def overridden(self, **changes: object) -> "ExperimentConfig":
        """Copy with non-None overrides applied and re-validated (CLI flags)."""
        data = self.model_dump()
        data.update({k: v for k, v in changes.items() if v is not None})
        return config_from_dict(data)


def load_config(path: Path) -> ExperimentConfig:
    """Read an ExperimentConfig from a .json or .toml file."""
    path = Path(path)
    if not path.is_file():
        raise InvalidInput(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix == ".toml":
            raw = tomllib.loads(text)
        elif path.suffix == ".json":
            raw = json.loads(text)
        else:
            raise InvalidParameter(f"config must be .json or .toml, got {path.name}")
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e.msg}", row=e.lineno) from e
    except tomllib.TOMLDecodeError as e:
        raise ParseError(f"{path}: {e}") from e
    return config_from_dict(raw)


def config_from_dict(raw: Dict[str, object]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        loc = ".".join(str(p) for p in first["loc"])
        raise InvalidParameter(f"invalid config at {loc}: {first['msg']}", field=loc) from e


def preset(name: str) -> ExperimentConfig:
    """Built-in settings of the reference studies (desk-scale run counts)."""
    if name == "bounds-spline":
        return ExperimentConfig(name=name, M=10_000, E_values=list(range(1, 101)), runs=50)
    if name == "bounds-exponential":
        return ExperimentConfig(
            name=name, kernel=KernelConfig(family="exponential", rate=0.1), M=10_000,
            E_values=list(range(1, 101)), runs=50,
        )
    if name == "sure-spline":
        return ExperimentConfig(
            name=name, M=1000, E=400, runs=100,
            grid_A=GridConfig(gamma_min=1e-3, gamma_max=1e3, n_gammas=50),
            grid_B=GridConfig(gammas=[1e-3, 0.0, 1e3], truncations=[1, 5, 10, 20, 50, 100, 200, 300, 400]),
        )
    if name == "colorado":
        return ExperimentConfig(
            name=name,
            kernel=KernelConfig(family="gaussian", length_scale=0.1, dim=2),
            measure=MeasureConfig(kind="uniform", lower=[0.0, 0.0], upper=[1.0, 1.0]),
            E=20, runs=100,
            grid_A=GridConfig(gamma_min=1e-5, gamma_max=1e5, n_gammas=50),
            grid_B=GridConfig(gammas=[0.0], truncations=list(range(2, 21))),
            field=FieldConfig(
                columns={"lon": "x_1", "lat": "x_2", "value": "y"},
                group_column="month",
                bounds=[[-109.5, -101.0], [36.5, 41.5]],
            ),
        )
    if name == "uci":
        return ExperimentConfig(
            name=name,
            kernel=KernelConfig(family="gaussian", length_scale=1.0, dim=1),
            E=30, runs=100,
            grid_A=GridConfig(gammas=[0.0] + list(np.logspace(-5, 2, 8))),
            grid_B=GridConfig(gammas=[0.0] + list(np.logspace(-5, 2, 8)), truncations=list(range(1, 31))),
            field=FieldConfig(basis="nystrom"),
        )
    if name == "trend":
        return ExperimentConfig(
            name=name, E=5, M_values=[100, 400, 1600, 6400], runs=50,
            grid_B=GridConfig(gammas=[1.0], truncations=[1, 2, 3, 4, 5]),
        )
    raise InvalidParameter(f"unknown preset: {name}", presets=PRESETS)


PRESETS = ["bounds-spline", "bounds-exponential", "sure-spline", "colorado", "uci", "trend"]
