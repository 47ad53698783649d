"""Input validation helpers shared by the estimators and the plain functions."""

import math
from numbers import Integral, Real

import numpy as np


def check_pixels(pixels, name="pixels", allow_empty=False):
    """Return ``pixels`` as a read-only ``(n, 3)`` uint8 array.

    Accepts anything array-like of integer RGB triples in [0, 255]. A single
    triple is promoted to shape ``(1, 3)``.
    """
    arr = np.asarray(pixels)
    if arr.ndim == 1 and arr.shape[0] == 3:
        arr = arr.reshape(1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{name} must have shape (n, 3), got {arr.shape}")
    if arr.shape[0] == 0 and not allow_empty:
        raise ValueError(f"{name} is empty")
    arr = _as_channel_array(arr, name)
    arr.flags.writeable = False
    return arr


def check_rgb_array(pixels, name="image"):
    """Return an ``(h, w, 3)`` uint8 copy of ``pixels`` with h, w >= 1."""
    arr = np.asarray(pixels)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{name} must have shape (height, width, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be at least 1x1")
    return _as_channel_array(arr, name)


def _as_channel_array(arr, name):
    if arr.dtype == np.uint8:
        return arr.copy()
    if arr.dtype.kind not in "iuf":
        raise TypeError(f"{name} must be numeric, got dtype {arr.dtype}")
    if arr.dtype.kind == "f" and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if arr.dtype.kind == "f" and np.any(arr != np.floor(arr)):
        raise ValueError(f"{name} channels must be integers")
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise ValueError(f"{name} channels must lie in [0, 255]")
    return arr.astype(np.uint8)


def check_finite(value, name):
    if not isinstance(value, Real) or isinstance(value, bool):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")
    return value


def check_positive_int(value, name, minimum=1):
    if not isinstance(value, Integral) or isinstance(value, bool):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)
