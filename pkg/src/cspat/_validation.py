"""Input checks shared by the solvers and the estimator wrappers."""
from __future__ import annotations

import numpy as np


def check_matrix(A, name: str = "A") -> np.ndarray:
    if hasattr(A, "toarray"):
        A = A.toarray()
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries")
    return A


def check_vector(x, size: int | None = None, name: str = "x") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {x.shape}")
    if size is not None and x.size != size:
        raise ValueError(f"{name} has length {x.size}, expected {size}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite entries")
    return x


def check_rows(values, n_rows: int | None = None, name: str = "values") -> np.ndarray:
    """Validate a sinogram-shaped array (rows x radial samples)."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise ValueError(f"{name} must be 2-D (rows x radial samples), got {values.shape}")
    if n_rows is not None and values.shape[0] != n_rows:
        raise ValueError(f"{name} has {values.shape[0]} rows, expected {n_rows}")
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{name} contains non-finite entries")
    return values
