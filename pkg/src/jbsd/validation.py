"""Input checks shared by the estimators and the CLI.

scikit-learn's ``check_array`` rejects complex input, so these are small
numpy equivalents.
"""
import numbers

import numpy as np

from .hankel_ops import LiftShape
from .sensing import MeasurementSet


def check_complex_array(a, ndim, name="array"):
    a = np.asarray(a)
    if a.dtype.kind not in "biufc":
        raise TypeError(f"{name} must be numeric, got dtype {a.dtype}")
    if a.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains NaN or infinity")
    return a


def check_codebooks(B):
    """Return codebooks as a ``(K, n, s)`` array."""
    B = np.asarray(B)
    if B.ndim == 2:
        B = B[None]
    return check_complex_array(B, 3, "B")


def check_signals(X):
    """Return signals as a ``(K, s, n)`` array."""
    X = np.asarray(X)
    if X.ndim == 2:
        X = X[None]
    return check_complex_array(X, 3, "X")


def check_rank(rank, shape=None):
    if not isinstance(rank, numbers.Integral) or rank < 1:
        raise ValueError(f"rank must be a positive integer, got {rank!r}")
    if shape is not None and rank > min(shape.lifted_shape):
        raise ValueError(f"rank {rank} exceeds lifted dimensions {shape.lifted_shape}")
    return int(rank)


def check_measurements(B, y, n1=None):
    """Validate codebooks and observations and bundle them."""
    B = check_codebooks(B)
    y = check_complex_array(y, 1, "y").astype(complex)
    K, n, s = B.shape
    if y.shape[0] != n:
        raise ValueError(f"y has length {y.shape[0]} but codebooks have {n} rows")
    return MeasurementSet(y, B, LiftShape(n=n, s=s, n1=n1))
