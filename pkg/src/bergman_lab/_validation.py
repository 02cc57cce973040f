"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils.validation import check_array

__all__ = ["check_points", "check_degree", "check_coefficients"]


def check_points(X):
    """Complex points from a complex array, a 1-D real array (points on the
    real axis) or an ``(n, 2)`` array of (Re, Im)."""
    X = np.asarray(X)
    if np.iscomplexobj(X):
        z = np.ravel(X).astype(complex)
    elif X.ndim == 1:
        z = check_array(X[:, None], dtype=float)[:, 0].astype(complex)
    else:
        arr = check_array(X, ensure_2d=True, dtype=float)
        if arr.shape[1] != 2:
            raise ValueError(f"real input must have shape (n, 2); got {arr.shape}")
        z = arr[:, 0] + 1j * arr[:, 1]
    if not np.all(np.isfinite(z)):
        raise ValueError("points must be finite")
    return z


def check_degree(p, name="p"):
    if isinstance(p, bool) or not isinstance(p, numbers.Integral) or p < 0:
        raise ValueError(f"{name} must be a nonnegative integer, got {p!r}")
    return int(p)


def check_coefficients(A, dim):
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    if A.ndim != 2 or A.shape[1] != dim:
        raise ValueError(f"coefficient rows must have length {dim}; got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("coefficients must be finite")
    if np.any(np.all(A == 0, axis=1)):
        raise ValueError("a coefficient row is identically zero")
    return A
