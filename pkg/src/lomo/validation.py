"""Input validation helpers shared by the library surface and estimators."""

from __future__ import annotations

from typing import Iterable

import numpy as np


def check_fraction(value: float, name: str) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value


def check_positive_int(value: int, name: str) -> int:
    ivalue = int(value)
    if ivalue < 1:
        raise ValueError(f"{name} must be a positive integer, got {value}")
    return ivalue


def check_seed(value: int, name: str = "seed") -> int:
    ivalue = int(value)
    if not 0 <= ivalue < 2**64:
        raise ValueError(f"{name} must be an unsigned 64-bit integer, got {value}")
    return ivalue


def check_ratio_pair(value, name: str = "target ratio") -> tuple[int, int]:
    try:
        a, b = value
    except (TypeError, ValueError):
        raise ValueError(f"{name} must be a pair of positive integers, got {value!r}")
    a, b = int(a), int(b)
    if a < 1 or b < 1:
        raise ValueError(f"{name} components must be >= 1, got {a}:{b}")
    return a, b


def as_distribution(values: Iterable[float], name: str = "distribution", atol: float = 1e-9) -> np.ndarray:
    """Validate and return a probability vector (entries >= 0, sum == 1 within atol)."""
    p = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D vector")
    if np.any(p < 0):
        raise ValueError(f"{name} has negative entries")
    total = float(p.sum())
    if abs(total - 1.0) > atol:
        raise ValueError(f"{name} must sum to 1 within {atol}, got {total}")
    return p


def check_rgb_image(image: np.ndarray, name: str = "image") -> np.ndarray:
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise ValueError(f"{name} must be an (H, W, 3) uint8 array, got shape {arr.shape} dtype {arr.dtype}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be non-empty")
    return arr
