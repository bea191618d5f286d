"""Probability-array helpers that work for floats and exact fractions alike.

Exact mode stores probabilities as numpy ``object`` arrays of
:class:`fractions.Fraction`; every helper here keeps such arrays exact.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

PROB_TOL = 1e-12
REACH_TOL = 1e-12


def is_exact(arr) -> bool:
    return np.asarray(arr).dtype == object


def to_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        # decimal text, so 0.1 becomes 1/10 rather than its binary expansion
        return Fraction(repr(value))
    return Fraction(value)


def exact_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=object)
    out = np.empty(arr.shape, dtype=object)
    for idx in np.ndindex(arr.shape):
        out[idx] = to_fraction(arr[idx])
    return out


def float_array(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype == object:
        return np.vectorize(float, otypes=[float])(arr) if arr.size else arr.astype(float)
    return arr.astype(float)


def check_distribution(values, *, what: str = "distribution", axis: int = -1) -> np.ndarray:
    """Return ``values`` as an array after checking it is a (batch of) distribution(s)."""
    arr = np.asarray(values)
    if arr.dtype != object:
        arr = arr.astype(float)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{what} has non-finite entries")
    if arr.size and np.any(arr < 0):
        raise ValueError(f"{what} has negative entries")
    sums = arr.sum(axis=axis)
    if arr.dtype == object:
        if not np.all(sums == 1):
            raise ValueError(f"{what} does not sum to exactly 1")
    elif np.any(np.abs(sums - 1.0) > PROB_TOL):
        raise ValueError(f"{what} does not sum to 1 (max error {np.max(np.abs(sums - 1.0)):.3g})")
    return arr


def positive(p, exact: bool, tol: float = REACH_TOL) -> bool:
    return p > 0 if exact else p > tol
