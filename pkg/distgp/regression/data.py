from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import numpy as np
import pandas as pd

from distgp.errors import InvalidInput, InvalidParameter, ParseError
from distgp.util.log import get_logger

log = get_logger("distgp.regression.data")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Noisy samples y_m = f(x_m) + noise of an unknown map on a d-dimensional domain."""

    inputs: np.ndarray
    outputs: np.ndarray
    noise_variance: float

    def __post_init__(self) -> None:
        X = np.asarray(self.inputs, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        y = np.asarray(self.outputs, dtype=float).reshape(-1)
        if X.ndim != 2 or X.shape[0] != y.size:
            raise InvalidInput(f"inputs ({X.shape[0]}) and outputs ({y.size}) differ in length")
        if y.size < 1:
            raise InvalidInput("dataset needs at least one sample")
        if self.noise_variance < 0:
            raise InvalidParameter("noise variance must be >= 0")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "outputs", y)

    @property
    def M(self) -> int:
        return int(self.outputs.size)

    @property
    def dim(self) -> int:
        return int(self.inputs.shape[1])

    def subset(self, idx: Any) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.inputs[idx], self.outputs[idx], self.noise_variance)

    def split(self, parts: int) -> list["Dataset"]:
        """Round-robin partition into `parts` local datasets (one per agent)."""
        if not 1 <= parts <= self.M:
            raise InvalidParameter(f"cannot split {self.M} samples into {parts} parts")
        return [self.subset(np.arange(i, self.M, parts)) for i in range(parts)]

    def to_frame(self) -> pd.DataFrame:
        cols = {f"x_{j + 1}": self.inputs[:, j] for j in range(self.dim)}
        cols["y"] = self.outputs
        return pd.DataFrame(cols)

    def to_csv(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path

    @classmethod
    def from_csv(
        cls,
        path: Path,
        noise_variance: float = 0.0,
        columns: Optional[Dict[str, str]] = None,
    ) -> "Dataset":
        return cls.from_frame(read_table(path, columns), noise_variance)

    @classmethod
    def from_frame(cls, df: pd.DataFrame, noise_variance: float = 0.0) -> "Dataset":
        d = sum(1 for c in df.columns if str(c).startswith("x_"))
        xcols = [f"x_{j + 1}" for j in range(d)]
        return cls(df[xcols].to_numpy(dtype=float), df["y"].to_numpy(dtype=float), noise_variance)


def read_table(
    path: Path,
    columns: Optional[Dict[str, str]] = None,
    keep: Sequence[str] = (),
) -> pd.DataFrame:
    """Read a headed CSV with columns x_1..x_d, y (after applying the optional column mapping).

    Columns named in `keep` (e.g. an acquisition-month column) are carried through as
    stripped strings after y. Blank lines are skipped; row numbers in parse errors count file
    lines, header and blank lines included.
    """
    try:
        raw = pd.read_csv(path, header=None, dtype=str, skip_blank_lines=False)
    except FileNotFoundError as e:
        raise InvalidInput(f"data file not found: {path}") from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ParseError(f"{path}: {e}") from e

    # index = 1-based file line
    raw.index = raw.index + 1
    raw = raw.dropna(how="all")
    if raw.empty:
        raise ParseError(f"{path}: no header row", row=1)
    head_row = int(raw.index[0])

    header = [str(c).strip() for c in raw.iloc[0].tolist()]
    if len(set(header)) != len(header):
        raise ParseError(f"{path}: duplicate column names in header", row=head_row)
    keep = list(keep)
    if columns:
        missing = [c for c in columns if c not in header]
        if missing:
            raise ParseError(f"{path}: mapped columns not found: {', '.join(missing)}", row=head_row)
        header = [columns.get(c, c) for c in header]
        if len(set(header)) != len(header):
            raise ParseError(f"{path}: column mapping produces duplicate names", row=head_row)
        idx = [i for i, c in enumerate(header) if c == "y" or c.startswith("x_") or c in keep]
        raw = raw.iloc[:, idx]
        header = [header[i] for i in idx]
    absent = [c for c in keep if c not in header]
    if absent:
        raise ParseError(f"{path}: columns not found: {', '.join(absent)}", row=head_row)
    core = [c for c in header if c not in keep]
    if "y" not in core:
        raise ParseError(f"{path}: missing y column", row=head_row)
    d = len(core) - 1
    expected = {f"x_{j + 1}" for j in range(d)}
    if d < 1 or set(core) - {"y"} != expected:
        raise ParseError(f"{path}: expected columns x_1..x_{d}, y; got {', '.join(core)}", row=head_row)

    body = raw.iloc[1:].copy()
    body.columns = header
    values = body[core].apply(lambda s: pd.to_numeric(s.str.strip(), errors="coerce"))
    bad = values.isna().any(axis=1).to_numpy()
    if bad.any():
        raise ParseError(f"{path}: non-numeric or missing value", row=int(body.index[np.flatnonzero(bad)[0]]))
    if values.empty:
        raise ParseError(f"{path}: no data rows", row=head_row + 1)
    log.debug("read %d rows x %d inputs from %s", len(values), d, path)
    out = values[[f"x_{j + 1}" for j in range(d)] + ["y"]].copy()
    for c in keep:
        out[c] = body[c].fillna("").str.strip()
    return out.reset_index(drop=True)
