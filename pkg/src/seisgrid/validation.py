"""Input validation helpers shared by the loaders and the estimators."""
from __future__ import annotations

from collections.abc import Iterable
import math

import numpy as np


class ConfigError(ValueError):
    """Raised when an input file cannot be parsed."""


class ValidationError(ValueError):
    """Raised when parsed input violates a model invariant."""


def check_positive(value, name, *, strict=True):
    value = float(value)
    if not math.isfinite(value) or (value <= 0 if strict else value < 0):
        op = ">" if strict else ">="
        raise ValidationError(f"{name} must be finite and {op} 0, got {value!r}")
    return value


def check_probability(value, name, *, closed_low=True, closed_high=True):
    value = float(value)
    lo_ok = value >= 0 if closed_low else value > 0
    hi_ok = value <= 1 if closed_high else value < 1
    if not (lo_ok and hi_ok):
        raise ValidationError(f"{name} must lie in the unit interval, got {value!r}")
    return value


def check_unique(ids: Iterable, what: str) -> None:
    seen = set()
    for i in ids:
        if i in seen:
            raise ValidationError(f"duplicate {what} id {i!r}")
        seen.add(i)


def check_binary_vector(x, n: int, name: str = "x") -> np.ndarray:
    """Coerce *x* into a length-*n* int8 vector of zeros and ones."""
    arr = np.asarray(x)
    if arr.ndim != 1 or arr.shape[0] != n:
        raise ValidationError(f"{name} must be a vector of length {n}, got shape {arr.shape}")
    if not np.all((arr == 0) | (arr == 1)):
        raise ValidationError(f"{name} must be binary")
    return arr.astype(np.int8)


def require(mapping: dict, key: str, where: str):
    try:
        return mapping[key]
    except (KeyError, TypeError):
        raise ConfigError(f"{where}: missing required field {key!r}") from None
