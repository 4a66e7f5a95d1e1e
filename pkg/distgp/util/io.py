from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from distgp.util.log import get_logger
from distgp.util.paths import ensure_dir

log = get_logger("distgp.io")


def _default(o: Any) -> Any:
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def to_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, default=_default)


def write_json(obj: Any, path: Path) -> Path:
    ensure_dir(path.parent)
    path.write_text(to_json(obj) + "\n", encoding="utf-8")
    log.info("wrote %s", path)
    return path


def write_frame(df: pd.DataFrame, path: Path) -> Path:
    ensure_dir(path.parent)
    df.to_csv(path, index=False)
    log.info("wrote %s (%d rows)", path, len(df))
    return path
