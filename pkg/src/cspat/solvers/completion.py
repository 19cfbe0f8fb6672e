"""Compressed measurements and per-radius completion of the full sinogram."""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid

from ..expander import MeasurementMatrix
from ..phantom import DetectorGeometry, Sinogram
from ..transforms import filter_rows
from .l1 import basis_pursuit_batch
from .tv import SolverReport, fista_tv_batch

log = logging.getLogger(__name__)

METHODS = ("l1_sparsified", "tv_filtered")
_TARGET_KIND = {"l1_sparsified": "sparsified", "tv_filtered": "filtered"}
_FILTER_FOR = {"l1_sparsified": "sparsifier", "tv_filtered": "fbp_filter"}


@dataclass
class CompressedData:
    """``m x N_r`` sums ``y_i(r_k) = sum_{j in J_i} g_j(r_k)`` plus noise metadata."""

    matrix: MeasurementMatrix
    geometry: DetectorGeometry
    values: np.ndarray
    kind: str = "spherical_means"
    sigma: float = 0.0
    noise_seed: Optional[int] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.matrix.m, self.geometry.N_r):
            raise ValueError(
                f"expected values of shape {(self.matrix.m, self.geometry.N_r)}, "
                f"got {self.values.shape}"
            )
        if self.matrix.N != self.geometry.N:
            raise ValueError("matrix columns do not match the number of detectors")

    @property
    def spacing(self) -> float:
        return self.geometry.spacing

    def rescaled(self) -> np.ndarray:
        """Measurements divided by the number of detectors they sum."""
        deg = self.matrix.row_degrees.astype(float)
        return np.divide(self.values, deg[:, None], out=np.zeros_like(self.values),
                         where=deg[:, None] > 0)


def measure(A: MeasurementMatrix, sinogram: Sinogram) -> CompressedData:
    return CompressedData(A, sinogram.geometry, A.toarray() @ sinogram.values, sinogram.kind)


def add_noise(y: CompressedData, sigma: float, seed: Optional[int] = None) -> CompressedData:
    """Add i.i.d. ``N(0, sigma^2)`` noise to every detector sample before summation.

    The noise on measurement ``i`` is therefore the sum of ``|J_i|`` independent
    draws, and is correlated between measurements sharing a detector.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return dataclasses.replace(y, values=y.values.copy())
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, size=(y.matrix.N, y.values.shape[1]))
    values = y.values + y.matrix.toarray() @ noise
    total = float(np.hypot(y.sigma, sigma))
    return dataclasses.replace(y, values=values, sigma=total, noise_seed=seed)


def default_eta(A: MeasurementMatrix, sigma: float) -> float:
    """Expected l1 norm of the summed noise: ``m sigma sqrt(2 d_row / pi)``."""
    d_row = float(np.mean(A.row_degrees))
    return A.m * sigma * np.sqrt(2 * d_row / np.pi)


def radial_integrate(s: Sinogram) -> Sinogram:
    """Cumulative trapezoidal integral from ``r = 0``; undoes the outer derivative."""
    if s.kind != "sparsified":
        raise ValueError(f"radial integration expects sparsified data, got {s.kind}")
    values = cumulative_trapezoid(s.values, dx=s.geometry.spacing, axis=-1, initial=0.0)
    return Sinogram(s.geometry, values, "filtered", dict(s.meta))


def _transformed(y: CompressedData, method: str) -> np.ndarray:
    target = _TARGET_KIND[method]
    if y.kind == target:
        return y.values
    if y.kind != "spherical_means":
        raise ValueError(f"{method} needs spherical means or {target} data, got {y.kind}")
    return filter_rows(_FILTER_FOR[method], y.values, y.spacing)


def lambda_scale(A, B) -> np.ndarray:
    """Per-column scale ``|A^T b|_inf`` used to make lambda dimensionless."""
    return np.abs(np.asarray(A).T @ B).max(axis=0)


def select_lambda(A: MeasurementMatrix, B: np.ndarray, grid=None, holdout: float = 0.2,
                  seed: int = 0, periodic: bool = True, max_iter: int = 100,
                  n_cols: int = 32) -> tuple[float, dict]:
    """Pick a relative lambda by hold-out validation over measurements.

    A random ``holdout`` fraction of the rows is left out, TV completion is
    fitted on the rest for each relative lambda in ``grid``, and the grid point
    with the smallest prediction error on the held-out rows wins. Only the
    ``n_cols`` columns with the largest data norm take part.
    """
    if grid is None:
        grid = np.logspace(-4, 1, 16)
    dense = A.toarray() if hasattr(A, "toarray") else np.asarray(A, dtype=float)
    rng = np.random.default_rng(seed)
    m = dense.shape[0]
    n_out = max(1, int(round(holdout * m)))
    out_rows = rng.choice(m, size=n_out, replace=False)
    in_rows = np.setdiff1d(np.arange(m), out_rows)
    norms = np.linalg.norm(B, axis=0)
    cols = np.argsort(-norms, kind="stable")[:n_cols]
    cols = cols[norms[cols] > 0]
    if cols.size == 0:
        return float(grid[0]), {"grid": list(map(float, grid)), "errors": []}
    B_in, B_out = B[np.ix_(in_rows, cols)], B[np.ix_(out_rows, cols)]
    A_in = dense[in_rows]
    scale = np.maximum(lambda_scale(A_in, B_in), 1e-300)
    errors = []
    for g in grid:
        Q, _ = fista_tv_batch(A_in, B_in, g * scale, periodic, max_iter)
        errors.append(float(np.linalg.norm(dense[out_rows] @ Q - B_out)))
    best = float(grid[int(np.argmin(errors))])
    return best, {"grid": list(map(float, grid)), "errors": errors}


def complete_columns(A: MeasurementMatrix, B: np.ndarray, method: str = "tv_filtered",
                     lam: float = 0.05, lam_sweep: bool = False, eta: float = 0.0,
                     max_iter: Optional[int] = None, tol: float = 1e-8, periodic: bool = True,
                     bp_method: str = "auto", sweep_seed: int = 0):
    """Solve the per-radius recovery problem for every column of ``B`` (``m x N_r``).

    Returns ``(Q, reports, meta)`` with ``Q`` of shape ``N x N_r``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    dense = A.toarray() if hasattr(A, "toarray") else np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != dense.shape[0]:
        raise ValueError(f"data of shape {B.shape} does not fit a {dense.shape} matrix")
    meta: dict = {"method": method}
    if method == "tv_filtered":
        if lam_sweep:
            lam, sweep = select_lambda(A, B, seed=sweep_seed, periodic=periodic,
                                       max_iter=max_iter or 100)
            meta["lambda_sweep"] = sweep
        if not lam > 0:
            raise ValueError("lambda must be positive")
        scale = lambda_scale(dense, B)
        lam_cols = np.where(scale > 0, lam * scale, 1.0)
        Q, reports = fista_tv_batch(dense, B, lam_cols, periodic, max_iter or 100, tol)
        meta["lambda"] = float(lam)
    else:
        Q, reports = basis_pursuit_batch(dense, B, eta, bp_method, max_iter=max_iter or 5000,
                                         tol=tol)
        meta["eta"] = float(eta)
    failed = [k for k, r in enumerate(reports) if not r.converged]
    if failed:
        log.info("%s: %d of %d radial samples did not converge", method, len(failed), len(reports))
    meta["failed_columns"] = failed
    return Q, reports, meta


def complete_sinogram(A: MeasurementMatrix, y: CompressedData, method: str = "tv_filtered",
                      lam: float = 0.05, lam_sweep: bool = False, eta: Optional[float] = None,
                      max_iter: Optional[int] = None, tol: float = 1e-8, periodic: bool = True,
                      bp_method: str = "auto", sweep_seed: int = 0,
                      ) -> tuple[Sinogram, list[SolverReport]]:
    """Recover all ``N`` rows from ``m`` compressed rows, one radius at a time.

    ``tv_filtered`` completes the filtered data ``r H d/dr M f`` by TV-regularised
    least squares; ``lam`` is relative to ``|A^T b|_inf`` of each column.
    ``l1_sparsified`` completes the sparsified data by basis pursuit with
    residual budget ``eta`` (default from the recorded noise level) and returns
    sparsified rows that still need :func:`radial_integrate`. With ``lam_sweep``
    the relative lambda comes from :func:`select_lambda`, whose hold-out split is
    drawn with ``sweep_seed``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if A.N != y.matrix.N or A.m != y.matrix.m:
        raise ValueError("matrix does not match the compressed data")
    if eta is None:
        eta = default_eta(A, y.sigma)
    Q, reports, meta = complete_columns(A, _transformed(y, method), method, lam, lam_sweep, eta,
                                        max_iter, tol, periodic, bp_method, sweep_seed)
    return Sinogram(y.geometry, Q, _TARGET_KIND[method], meta), reports
