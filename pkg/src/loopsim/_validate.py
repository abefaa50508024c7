"""Parameter checks used by model constructors.

Each check raises :class:`ConfigurationError` whose ``path`` is the parameter
name, so the config layer can prefix it with the location in the file.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError


def number(name, value, lo=None, hi=None, lo_open=False, hi_open=False) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"expected a number, got {value!r}", path=name) from None
    if not np.isfinite(value):
        raise ConfigurationError(f"must be finite, got {value}", path=name)
    low_bad = lo is not None and (value <= lo if lo_open else value < lo)
    high_bad = hi is not None and (value >= hi if hi_open else value > hi)
    if low_bad or high_bad:
        left = "(" if lo_open else "["
        right = ")" if hi_open else "]"
        lo_s = "-inf" if lo is None else f"{lo:g}"
        hi_s = "inf" if hi is None else f"{hi:g}"
        raise ConfigurationError(f"{value:g} is outside {left}{lo_s}, {hi_s}{right}", path=name)
    return value


def integer(name, value, lo=None, hi=None) -> int:
    if isinstance(value, bool) or not float(value).is_integer():
        raise ConfigurationError(f"expected an integer, got {value!r}", path=name)
    number(name, value, lo, hi)
    return int(value)


def vector(name, value, dim=None, lo=None, hi=None) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise ConfigurationError(f"expected a numeric vector, got {value!r}", path=name) from None
    if dim is not None and arr.shape[0] != dim:
        raise ConfigurationError(f"expected length {dim}, got {arr.shape[0]}", path=name)
    if not np.isfinite(arr).all():
        raise ConfigurationError("entries must be finite", path=name)
    if lo is not None and (arr < lo).any():
        raise ConfigurationError(f"entries must be >= {lo:g}", path=name)
    if hi is not None and (arr > hi).any():
        raise ConfigurationError(f"entries must be <= {hi:g}", path=name)
    return arr


def matrix(name, value, shape=None, lo=None, hi=None) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigurationError(f"expected a numeric matrix, got {value!r}", path=name) from None
    if arr.ndim != 2:
        raise ConfigurationError(f"expected a 2-d matrix, got {arr.ndim} dimensions", path=name)
    if shape is not None:
        for axis, want in enumerate(shape):
            if want is not None and arr.shape[axis] != want:
                raise ConfigurationError(f"expected shape {shape}, got {arr.shape}", path=name)
    if not np.isfinite(arr).all():
        raise ConfigurationError("entries must be finite", path=name)
    if lo is not None and (arr < lo).any():
        raise ConfigurationError(f"entries must be >= {lo:g}", path=name)
    if hi is not None and (arr > hi).any():
        raise ConfigurationError(f"entries must be <= {hi:g}", path=name)
    return arr


def per_arm(name, value, k, lo=None, hi=None, lo_open=False, hi_open=False) -> np.ndarray:
    """Broadcast a scalar or length-k list to a length-k vector, checking each entry."""
    arr = np.array(value, dtype=float).reshape(-1)
    if arr.shape[0] == 1:
        arr = np.repeat(arr, k)
    if arr.shape[0] != k:
        raise ConfigurationError(f"expected a scalar or {k} values, got {arr.shape[0]}", path=name)
    for v in arr:
        number(name, v, lo, hi, lo_open, hi_open)
    return arr


def choice(name, value, options):
    if value not in options:
        raise ConfigurationError(f"{value!r} is not one of {sorted(options)}", path=name)
    return value


def unit(name, value, tol=1e-9) -> np.ndarray:
    arr = vector(name, value)
    norm = np.linalg.norm(arr)
    if abs(norm - 1.0) > tol:
        raise ConfigurationError(f"must have unit norm (got {norm:.12g})", path=name)
    return arr
