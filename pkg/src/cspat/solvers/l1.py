"""Basis pursuit with an l1 data-fidelity constraint.

    minimise |q|_1  subject to  |A q - b|_1 <= eta

Problems up to a few thousand unknowns go through an exact linear program
(HiGHS); larger ones through ADMM on the splitting ``u = q``, ``w = A q``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.optimize import linprog

from .._validation import check_matrix, check_vector
from .tv import SolverReport

# HiGHS on the sparse LP is exact and, up to a few thousand unknowns, about
# as fast per column as ADMM run to tight tolerance
LP_MAX_N = 2000


@dataclass
class BasisPursuitProblem:
    A: np.ndarray
    b: np.ndarray
    eta: float = 0.0

    def __post_init__(self):
        self.A = check_matrix(self.A)
        self.b = check_vector(self.b, self.A.shape[0], "b")
        if not self.eta >= 0:
            raise ValueError("eta must be nonnegative")


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def project_l1_ball(v, radius: float, axis: int = 0) -> np.ndarray:
    """Euclidean projection of each slice along ``axis`` onto ``{x : |x|_1 <= radius}``."""
    v = np.moveaxis(np.asarray(v, dtype=float), axis, 0)
    if radius <= 0:
        return np.moveaxis(np.zeros_like(v), 0, axis)
    flat = v.reshape(v.shape[0], -1)
    out = flat.copy()
    a = np.abs(flat)
    outside = a.sum(axis=0) > radius
    if np.any(outside):
        u = -np.sort(-a[:, outside], axis=0)
        css = np.cumsum(u, axis=0) - radius
        ks = np.arange(1, u.shape[0] + 1)[:, None]
        # at least one entry survives; guards rounding when radius is subnormal
        rho = np.maximum(np.sum(u - css / ks > 0, axis=0), 1)
        tau = css[rho - 1, np.arange(u.shape[1])] / rho
        out[:, outside] = soft_threshold(flat[:, outside], tau)
    return np.moveaxis(out.reshape(v.shape), 0, axis)


def _bp_linprog(A, b, eta):
    # variables [q, u, v]: |q| <= u, |A q - b| <= v, sum v <= eta
    m, n = A.shape
    As = sp.csr_matrix(A)
    I_n, I_m = sp.identity(n), sp.identity(m)
    A_ub = sp.bmat([
        [I_n, -I_n, None],
        [-I_n, -I_n, None],
        [As, None, -I_m],
        [-As, None, -I_m],
        [None, None, sp.csr_matrix(np.ones((1, m)))],
    ], format="csr")
    b_ub = np.concatenate([np.zeros(2 * n), b, -b, [eta]])
    c = np.concatenate([np.zeros(n), np.ones(n), np.zeros(m)])
    bounds = [(None, None)] * n + [(0, None)] * (n + m)
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        q = np.zeros(n)
        return q, SolverReport(0, float("nan"), float(np.abs(b).sum()), False, res.message)
    q = res.x[:n]
    resid = float(np.abs(A @ q - b).sum())
    return q, SolverReport(int(getattr(res, "nit", 0)), float(np.abs(q).sum()), resid, True,
                           res.message)


def _bp_admm_batch(A, B, eta, rho, max_iter, tol):
    m, n = A.shape
    k = B.shape[1]
    # q-update solves (I + A^T A) q = rhs
    chol = scipy.linalg.cho_factor(np.eye(n) + A.T @ A)
    U = np.zeros((n, k))
    W = B.copy()
    Y1 = np.zeros((n, k))
    Y2 = np.zeros((m, k))
    Q = np.zeros((n, k))
    active = np.ones(k, dtype=bool)
    iters = np.zeros(k, dtype=int)
    scale = np.maximum(np.abs(B).sum(axis=0), 1.0)
    for it in range(1, max_iter + 1):
        cols = np.nonzero(active)[0]
        if cols.size == 0:
            break
        u, w, y1, y2 = U[:, cols], W[:, cols], Y1[:, cols], Y2[:, cols]
        q = scipy.linalg.cho_solve(chol, u - y1 + A.T @ (w - y2))
        Aq = A @ q
        u_new = soft_threshold(q + y1, 1.0 / rho)
        w_new = B[:, cols] + project_l1_ball(Aq + y2 - B[:, cols], eta)
        r1, r2 = q - u_new, Aq - w_new
        y1 += r1
        y2 += r2
        primal = np.sqrt((r1**2).sum(axis=0) + (r2**2).sum(axis=0))
        dual = rho * np.sqrt(((u_new - u) ** 2).sum(axis=0) + ((A.T @ (w_new - w)) ** 2).sum(axis=0))
        U[:, cols], W[:, cols], Y1[:, cols], Y2[:, cols] = u_new, w_new, y1, y2
        Q[:, cols] = q
        iters[cols] = it
        done = (primal <= tol * scale[cols]) & (dual <= tol * scale[cols])
        active[cols[done]] = False
    reports = []
    for c in range(k):
        q = Q[:, c]
        resid = float(np.abs(A @ q - B[:, c]).sum())
        reports.append(SolverReport(int(iters[c]), float(np.abs(q).sum()), resid,
                                    not active[c]))
    return Q, reports


def basis_pursuit_batch(A, B, eta: float = 0.0, method: str = "auto", rho: float = 1.0,
                        max_iter: int = 5000, tol: float = 1e-8):
    """Solve basis pursuit for every column of ``B``; returns ``(Q, reports)``.

    ``method`` is ``"lp"``, ``"admm"`` or ``"auto"`` (LP for ``N <= 2000``).
    """
    A = check_matrix(A)
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    if B.shape[0] != A.shape[0]:
        raise ValueError(f"data has {B.shape[0]} rows, matrix has {A.shape[0]}")
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    if method == "auto":
        method = "lp" if A.shape[1] <= LP_MAX_N else "admm"
    if method == "lp":
        out = [_bp_linprog(A, B[:, c], eta) for c in range(B.shape[1])]
        Q = np.stack([q for q, _ in out], axis=1) if out else np.zeros((A.shape[1], 0))
        return Q, [r for _, r in out]
    if method == "admm":
        return _bp_admm_batch(A, B, eta, rho, max_iter, tol)
    raise ValueError(f"unknown method {method!r}")


def basis_pursuit(problem: BasisPursuitProblem, method: str = "auto", **opts):
    """Solve a single :class:`BasisPursuitProblem`; returns ``(q_star, report)``."""
    Q, reports = basis_pursuit_batch(problem.A, problem.b, problem.eta, method, **opts)
    return Q[:, 0], reports[0]
