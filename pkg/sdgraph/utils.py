"""Utility functions for the application."""
from dataclasses import asdict, is_dataclass
import math
from typing import Any, Iterable

import numpy as np
import pandas as pd


def convert_numpy_types(obj: Any) -> Any:
    """Convert numpy, pandas and set values to JSON-native Python types."""
    if isinstance(obj, np.integer):
        return int(obj)
    elif isinstance(obj, np.floating):
        return float(obj)
    elif isinstance(obj, np.bool_):
        return bool(obj)
    elif isinstance(obj, np.ndarray):
        return [convert_numpy_types(v) for v in obj.tolist()]
    elif isinstance(obj, (set, frozenset)):
        return sorted(convert_numpy_types(v) for v in obj)
    elif isinstance(obj, (list, tuple)):
        return [convert_numpy_types(v) for v in obj]
    elif isinstance(obj, dict):
        return {str(key): convert_numpy_types(value) for key, value in obj.items()}
    elif isinstance(obj, pd.Series):
        return convert_numpy_types(obj.to_dict())
    elif is_dataclass(obj) and not isinstance(obj, type):
        return convert_numpy_types(asdict(obj))
    return obj


def geometric_mean(values: Iterable[float], floor: float) -> float:
    """Geometric mean with every value clamped to at least ``floor``.

    An empty input has no evidence either way and scores ``floor``.
    """
    clamped = [max(float(v), floor) for v in values]
    if not clamped:
        return floor
    return math.exp(sum(math.log(v) for v in clamped) / len(clamped))
