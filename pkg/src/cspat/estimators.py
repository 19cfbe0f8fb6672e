"""scikit-learn compatible wrappers around the functional core.

Arrays are in sinogram orientation: rows are detectors (or measurements) and
columns are radial samples, so ``n_features_in_`` is the radial grid size.
The three transformers chain in a :class:`sklearn.pipeline.Pipeline`::

    Pipeline([("filter", RadialFilter("fbp_filter")),
              ("complete", SinogramCompleter(A)),
              ("image", Backprojector(n=256))])

Filtering commutes with the measurement sum because both are linear and the
filter acts row by row, so the filter may run before completion.
"""
from __future__ import annotations

from scipy.integrate import cumulative_trapezoid
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .phantom import DetectorGeometry, Sinogram
from .recon import backproject
from .solvers.completion import METHODS, complete_columns, select_lambda
from .transforms import FILTER_KINDS, filter_rows


def _spacing(n_r: int, spacing, detector_radius: float) -> float:
    return float(spacing) if spacing is not None else 2 * detector_radius / (n_r - 1)


class RadialFilter(TransformerMixin, BaseEstimator):
    """Apply one of the radial operators to every row."""

    def __init__(self, kind: str = "fbp_filter", spacing=None, detector_radius: float = 1.0):
        self.kind = kind
        self.spacing = spacing
        self.detector_radius = detector_radius

    def fit(self, X, y=None):
        if self.kind not in FILTER_KINDS:
            raise ValueError(f"unknown filter {self.kind!r}; expected one of {FILTER_KINDS}")
        X = check_array(X, ensure_min_features=3)
        self.n_features_in_ = X.shape[1]
        self.spacing_ = _spacing(X.shape[1], self.spacing, self.detector_radius)
        return self

    def transform(self, X):
        check_is_fitted(self, "spacing_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} radial samples, got {X.shape[1]}")
        return filter_rows(self.kind, X, self.spacing_)


class SinogramCompleter(TransformerMixin, BaseEstimator):
    """Map ``m`` transformed measurement rows to ``N`` completed detector rows.

    ``fit`` validates shapes and, with ``lambda_sweep``, selects ``lambda_`` on
    the fitting data; ``transform`` solves one problem per radial sample.
    """

    def __init__(self, matrix=None, method: str = "tv_filtered", lam: float = 0.05,
                 lambda_sweep: bool = False, eta: float = 0.0, max_iter=None, tol: float = 1e-8,
                 periodic: bool = True, bp_method: str = "auto", random_state: int = 0):
        self.matrix = matrix
        self.method = method
        self.lam = lam
        self.lambda_sweep = lambda_sweep
        self.eta = eta
        self.max_iter = max_iter
        self.tol = tol
        self.periodic = periodic
        self.bp_method = bp_method
        self.random_state = random_state

    def _dense(self):
        if self.matrix is None:
            raise ValueError("SinogramCompleter needs a measurement matrix")
        A = self.matrix.toarray() if hasattr(self.matrix, "toarray") else self.matrix
        return check_array(A)

    def fit(self, X, y=None):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        A = self._dense()
        X = check_array(X)
        if X.shape[0] != A.shape[0]:
            raise ValueError(f"expected {A.shape[0]} measurement rows, got {X.shape[0]}")
        self.n_features_in_ = X.shape[1]
        self.lambda_ = float(self.lam)
        if self.method == "tv_filtered" and self.lambda_sweep:
            self.lambda_, self.sweep_ = select_lambda(A, X, seed=self.random_state,
                                                      periodic=self.periodic,
                                                      max_iter=self.max_iter or 100)
        return self

    def transform(self, X):
        check_is_fitted(self, "lambda_")
        A = self._dense()
        X = check_array(X)
        if X.shape != (A.shape[0], self.n_features_in_):
            raise ValueError(f"expected shape {(A.shape[0], self.n_features_in_)}, got {X.shape}")
        Q, reports, _ = complete_columns(A, X, self.method, self.lambda_, False, self.eta,
                                         self.max_iter, self.tol, self.periodic, self.bp_method)
        self.reports_ = reports
        return Q


class RadialIntegrator(TransformerMixin, BaseEstimator):
    """Cumulative trapezoidal integral along each row, starting at ``r = 0``."""

    def __init__(self, spacing=None, detector_radius: float = 1.0):
        self.spacing = spacing
        self.detector_radius = detector_radius

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_features=2)
        self.n_features_in_ = X.shape[1]
        self.spacing_ = _spacing(X.shape[1], self.spacing, self.detector_radius)
        return self

    def transform(self, X):
        check_is_fitted(self, "spacing_")
        X = check_array(X)
        return cumulative_trapezoid(X, dx=self.spacing_, axis=1, initial=0.0)


class Backprojector(TransformerMixin, BaseEstimator):
    """Filtered rows of all ``N`` detectors to an ``n x n`` image array."""

    def __init__(self, n: int = 256, detector_radius: float = 1.0, arc=None):
        self.n = n
        self.detector_radius = detector_radius
        self.arc = arc

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_features=2)
        self.n_features_in_ = X.shape[1]
        self.geometry_ = DetectorGeometry(X.shape[0], X.shape[1], self.detector_radius,
                                          None if self.arc is None else tuple(self.arc))
        return self

    def transform(self, X):
        check_is_fitted(self, "geometry_")
        X = check_array(X)
        if X.shape != (self.geometry_.N, self.geometry_.N_r):
            raise ValueError(f"expected shape {(self.geometry_.N, self.geometry_.N_r)}, "
                             f"got {X.shape}")
        return backproject(Sinogram(self.geometry_, X, "filtered"), self.n).values
