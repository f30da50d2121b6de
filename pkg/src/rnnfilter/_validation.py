"""Input validation helpers shared by the estimator, the modules and the CLI."""

from __future__ import annotations

import numpy as np


class ConfigurationError(ValueError):
    """Raised when a configuration object violates its invariants."""


def check_array(a, ndim=None, name="array", finite=True) -> np.ndarray:
    """Return ``a`` as a float64 array, optionally checking rank and finiteness."""
    arr = np.asarray(a, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if finite and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_points(points, d=None, name="points") -> np.ndarray:
    """Coerce a series to shape (m, d).

    One-dimensional input is read as a scalar series (d = 1).
    """
    arr = check_array(points, name=name)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 1- or 2-dimensional, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise ValueError(f"{name} must contain at least one point")
    if d is not None and arr.shape[1] != d:
        raise ValueError(f"{name} has dimension {arr.shape[1]}, expected {d}")
    return arr


def check_vector(v, size, name="vector") -> np.ndarray:
    arr = check_array(v, ndim=1, name=name, finite=False)
    if arr.shape[0] != size:
        raise ValueError(f"{name} has length {arr.shape[0]}, expected {size}")
    return arr


def check_positive(value, name, strict=True):
    if value is None or not np.isfinite(value):
        raise ConfigurationError(f"{name} must be a finite number, got {value!r}")
    if strict and value <= 0:
        raise ConfigurationError(f"{name} must be > 0, got {value!r}")
    if not strict and value < 0:
        raise ConfigurationError(f"{name} must be >= 0, got {value!r}")
    return value


def check_fraction(value, name, closed=True):
    if closed and not 0.0 <= value <= 1.0:
        raise ConfigurationError(f"{name} must lie in [0, 1], got {value!r}")
    if not closed and not 0.0 < value < 1.0:
        raise ConfigurationError(f"{name} must lie in (0, 1), got {value!r}")
    return value
