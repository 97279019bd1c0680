import csv
import json
import math
from json import JSONDecodeError
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence

import numpy as np
from pydantic import BaseModel

from .errors import BmPriorError


def to_jsonable(value: Any, path: str = "$") -> Any:
    """
    Convert numpy arrays, numpy scalars and pydantic models into plain JSON
    values. Raises on NaN or infinity so every report field stays finite.
    """
    if isinstance(value, BaseModel):
        return to_jsonable(value.model_dump(mode="json"), path)
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist(), path)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            raise BmPriorError(f"non-finite number at {path}")
        return value
    if isinstance(value, dict):
        return {str(k): to_jsonable(v, f"{path}.{k}") for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v, f"{path}[{i}]") for i, v in enumerate(value)]
    return value


def write_json(path: str | Path, payload: Any) -> None:
    """Write a report as indented JSON"""
    with open(path, "w", encoding="utf-8") as f:
        json.dump(to_jsonable(payload), f, indent=2)
        f.write("\n")


def read_json(path: str | Path) -> Dict[str, Any]:
    """Read a JSON report, turning parse errors into data errors"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except JSONDecodeError as exc:
        raise BmPriorError(f"{path} is not valid JSON: {exc}") from exc


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """Write a curve as CSV with a header line"""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv(path: str | Path) -> List[Dict[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))
