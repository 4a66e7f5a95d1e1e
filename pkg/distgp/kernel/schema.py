from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError, field_validator

from distgp.errors import InvalidInput, ParseError
from distgp.kernel.basis import BasisSpec, kernel_sections_basis, kl_basis, nystrom_basis
from distgp.kernel.eigen import (
    EigenSystem,
    custom_eigensystem,
    eigensystem_from_points,
    exponential_eigensystem,
    spline_eigensystem,
)
from distgp.kernel.kernels import KernelSpec


class ExpansionModel(BaseModel):
    """JSON form shared by eigensystems and bases."""

    family: str
    params: Dict[str, Any] = Field(default_factory=dict)
    lambdas: List[float] = Field(default_factory=list)
    anchors: List[List[float]] = Field(default_factory=list)
    k_bound: Optional[float] = None

    @field_validator("lambdas")
    @classmethod
    def check_lambdas(cls, v: List[float]) -> List[float]:
        if any(x < 0 for x in v):
            raise ValueError("lambdas must be nonnegative")
        return v


def eigensystem_to_model(eigen: EigenSystem) -> ExpansionModel:
    anchors = eigen.points.tolist() if eigen.points is not None else []
    return ExpansionModel(
        family=eigen.family,
        params=dict(eigen.params),
        lambdas=eigen.lambdas.tolist(),
        anchors=anchors,
        k_bound=eigen.k_bound,
    )


def eigensystem_from_model(m: ExpansionModel) -> EigenSystem:
    n = len(m.lambdas)
    if m.family == "spline_first_order":
        return spline_eigensystem(n)
    if m.family == "exponential":
        return exponential_eigensystem(n, float(m.params.get("rate", 0.1)))
    if m.family == "custom":
        return custom_eigensystem(m.lambdas, finite_rank=bool(m.params.get("finite_rank", True)))
    if m.family == "numerical":
        if "kernel" not in m.params or not m.anchors:
            raise InvalidInput("numerical eigensystem needs params.kernel and anchors")
        kernel = KernelSpec.from_dict(m.params["kernel"])
        eig = eigensystem_from_points(kernel, np.asarray(m.anchors), n, extra_params=m.params)
        if m.k_bound is not None:
            eig = replace(eig, k_bound=float(m.k_bound))
        return eig
    raise InvalidInput(f"unknown eigensystem family: {m.family}")


def basis_to_model(basis: BasisSpec) -> ExpansionModel:
    params: Dict[str, Any] = {"E": basis.E}
    if basis.kernel is not None:
        params["kernel"] = basis.kernel.to_dict()
    if basis.eigen is not None:
        params["eigen"] = eigensystem_to_model(basis.eigen).model_dump()
    lambdas = np.diag(basis.prior).tolist() if basis.kind == "nystrom" else []
    return ExpansionModel(
        family=basis.kind,
        params=params,
        lambdas=lambdas,
        anchors=basis.anchors.tolist() if basis.anchors is not None else [],
        k_bound=basis.eigen.k_bound if basis.eigen is not None else None,
    )


def basis_from_model(m: ExpansionModel) -> BasisSpec:
    E = int(m.params.get("E", 0))
    if m.family == "kl_eigen":
        eigen = eigensystem_from_model(ExpansionModel(**m.params["eigen"]))
        return kl_basis(eigen, E or None)
    kernel = KernelSpec.from_dict(m.params["kernel"])
    if m.family == "kernel_sections":
        return kernel_sections_basis(kernel, np.asarray(m.anchors))
    if m.family == "nystrom":
        return nystrom_basis(kernel, np.asarray(m.anchors), E)
    raise InvalidInput(f"unknown basis kind: {m.family}")


def save_model(model: ExpansionModel, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model.model_dump_json(indent=2), encoding="utf-8")
    return path


def load_model(path: Path) -> ExpansionModel:
    try:
        return ExpansionModel.model_validate(json.loads(Path(path).read_text(encoding="utf-8")))
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e.msg}", row=e.lineno) from e
    except ValidationError as e:
        first = e.errors()[0]
        loc = ".".join(str(p) for p in first["loc"])
        raise ParseError(f"{path}: invalid model at {loc}: {first['msg']}", field=loc) from e
    except FileNotFoundError as e:
        raise InvalidInput(f"model file not found: {path}") from e


def load_anchors(path: Path, dim: int | None = None) -> np.ndarray:
    """Anchor points from a headerless CSV, one point per row."""
    try:
        df = pd.read_csv(path, header=None)
    except FileNotFoundError as e:
        raise InvalidInput(f"anchor file not found: {path}") from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ParseError(f"{path}: {e}") from e
    values = df.apply(pd.to_numeric, errors="coerce")
    bad = values.isna().any(axis=1)
    if bad.any():
        raise ParseError(f"{path}: non-numeric anchor coordinates", row=int(np.flatnonzero(bad)[0]) + 1)
    pts = values.to_numpy(dtype=float)
    if dim is not None and pts.shape[1] != dim:
        raise InvalidInput(f"anchors have {pts.shape[1]} columns, expected {dim}")
    return pts
