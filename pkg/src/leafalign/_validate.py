"""Input validation helpers shared across modules."""

import numpy as np

from .errors import NonFiniteInput, ShapeError


def as_float_matrix(x, name="X"):
    """Coerce to a 2-D float64 array, rejecting non-finite values."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput(f"{name} contains NaN or infinite values")
    return arr


def as_int_vector(x, name="y"):
    """Coerce to a 1-D int64 array."""
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    return arr.astype(np.int64)


def check_same_rows(a, b, name_a="V", name_b="T"):
    if a.shape[0] != b.shape[0]:
        raise ShapeError(
            f"{name_a} and {name_b} must have the same number of rows: "
            f"{a.shape[0]} != {b.shape[0]}"
        )


def check_same_shape(a, b, name_a="A", name_b="B"):
    if a.shape != b.shape:
        raise ShapeError(f"{name_a} shape {a.shape} != {name_b} shape {b.shape}")
