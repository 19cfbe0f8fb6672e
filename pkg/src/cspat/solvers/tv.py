"""One-dimensional total variation: exact proximal maps and FISTA.

The chain prox uses Condat's direct algorithm, a linearised taut-string
method. The periodic prox dualises the wrap-around edge ``|q_1 - q_N|`` and
solves a scalar concave maximisation over its multiplier, each step being one
chain prox.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .._validation import check_matrix, check_vector


@dataclass
class TVProblem:
    A: np.ndarray
    b: np.ndarray
    lam: float
    periodic: bool = True

    def __post_init__(self):
        self.A = check_matrix(self.A)
        self.b = check_vector(self.b, self.A.shape[0], "b")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")


@dataclass
class SolverReport:
    iterations: int
    objective: float
    residual: float
    converged: bool
    message: str = ""


@njit(cache=True)
def _chain_prox(y, lam, x):
    # Condat (2013), "A direct algorithm for 1D total variation denoising"
    n = y.size
    if n == 0:
        return
    k = 0
    k0 = 0
    kplus = 0
    kminus = 0
    umin = lam
    umax = -lam
    vmin = y[0] - lam
    vmax = y[0] + lam
    twolam = 2.0 * lam
    minlam = -lam
    while True:
        while k == n - 1:
            if umin < 0.0:
                while True:
                    x[k0] = vmin
                    k0 += 1
                    if k0 > kminus:
                        break
                k = k0
                kminus = k0
                vmin = y[k]
                umin = lam
                umax = vmin + umin - vmax
            elif umax > 0.0:
                while True:
                    x[k0] = vmax
                    k0 += 1
                    if k0 > kplus:
                        break
                k = k0
                kplus = k0
                vmax = y[k]
                umax = minlam
                umin = vmax + umax - vmin
            else:
                vmin += umin / (k - k0 + 1)
                while True:
                    x[k0] = vmin
                    k0 += 1
                    if k0 > k:
                        break
                return
        umin += y[k + 1] - vmin
        if umin < minlam:
            while True:
                x[k0] = vmin
                k0 += 1
                if k0 > kminus:
                    break
            k = k0
            kplus = k0
            kminus = k0
            vmin = y[k]
            vmax = vmin + twolam
            umin = lam
            umax = minlam
        else:
            umax += y[k + 1] - vmax
            if umax > lam:
                while True:
                    x[k0] = vmax
                    k0 += 1
                    if k0 > kplus:
                        break
                k = k0
                kplus = k0
                kminus = k0
                vmax = y[k]
                vmin = vmax - twolam
                umin = lam
                umax = minlam
            else:
                k += 1
                if umin >= lam:
                    kminus = k
                    vmin += (umin - lam) / (kminus - k0 + 1)
                    umin = lam
                if umax <= minlam:
                    kplus = k
                    vmax += (umax + lam) / (kplus - k0 + 1)
                    umax = minlam


@njit(cache=True)
def _wrap_gap(v, lam, mu, work, x):
    # chain prox of v shifted by the wrap-edge multiplier; returns x_1 - x_N
    n = v.size
    for i in range(n):
        work[i] = v[i]
    work[0] -= mu
    work[n - 1] += mu
    _chain_prox(work, lam, x)
    return x[0] - x[n - 1]


@njit(cache=True)
def _periodic_prox(v, lam, x, work):
    n = v.size
    if n == 1:
        x[0] = v[0]
        return
    scale = 0.0
    for i in range(n):
        if abs(v[i]) > scale:
            scale = abs(v[i])
    tol = 1e-14 * (scale + lam)

    lo, hi = -lam, lam
    h_lo = _wrap_gap(v, lam, lo, work, x)
    if h_lo <= tol:
        return
    h_hi = _wrap_gap(v, lam, hi, work, x)
    if h_hi >= -tol:
        return
    # h is nonincreasing and piecewise linear in mu: Illinois regula falsi
    side = 0
    for _ in range(200):
        mu = (lo * h_hi - hi * h_lo) / (h_hi - h_lo)
        if not lo < mu < hi:
            mu = 0.5 * (lo + hi)
        h = _wrap_gap(v, lam, mu, work, x)
        if abs(h) <= tol or hi - lo <= 1e-15 * lam:
            return
        if h > 0:
            lo, h_lo = mu, h
            if side == 1:
                h_hi *= 0.5
            side = 1
        else:
            hi, h_hi = mu, h
            if side == -1:
                h_lo *= 0.5
            side = -1


def tv_prox(v, weight: float, periodic: bool = False) -> np.ndarray:
    """Minimiser of ``0.5 |q - v|^2 + weight * sum_j |q_{j+1} - q_j|``.

    With ``periodic`` the sum includes the wrap-around term ``|q_1 - q_N|``.
    """
    v = np.ascontiguousarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError("tv_prox expects a 1-D vector")
    if not weight > 0:
        raise ValueError("weight must be positive")
    x = np.empty_like(v)
    if v.size == 0:
        return x
    if periodic:
        _periodic_prox(v, float(weight), x, np.empty_like(v))
    else:
        _chain_prox(v, float(weight), x)
    return x


def total_variation(q, periodic: bool = True) -> float:
    q = np.asarray(q, dtype=float)
    tv = float(np.abs(np.diff(q)).sum())
    if periodic and q.size > 1:
        tv += abs(q[0] - q[-1])
    return tv


def operator_norm_sq(A, n_iter: int = 50, seed: int = 0) -> float:
    """Power-iteration estimate of the largest eigenvalue of ``A^T A``."""
    A = np.asarray(A, dtype=float)
    x = np.random.default_rng(seed).standard_normal(A.shape[1])
    lam = 0.0
    for _ in range(n_iter):
        y = A.T @ (A @ x)
        lam = float(np.linalg.norm(y))
        if lam == 0.0:
            return 0.0
        x = y / lam
    return lam


@njit(cache=True)
def _tv_value(q, periodic):
    n = q.size
    s = 0.0
    for i in range(n - 1):
        s += abs(q[i + 1] - q[i])
    if periodic and n > 1:
        s += abs(q[0] - q[n - 1])
    return s


@njit(cache=True)
def _fista_columns(A, AT, B, tv_weights, step, max_iter, tol, periodic,
                   Q, iters, objs, resid, conv):
    m, n = A.shape
    n_cols = B.shape[1]
    x = np.empty(n)
    x_new = np.empty(n)
    y = np.empty(n)
    z = np.empty(n)
    work = np.empty(n)
    Ax = np.empty(m)
    Ax_new = np.empty(m)
    Ay = np.empty(m)
    best = np.empty(n)
    for c in range(n_cols):
        b = B[:, c]
        lam = tv_weights[c]
        prox_w = step * lam
        for j in range(n):
            x[j] = 0.0
            y[j] = 0.0
            best[j] = 0.0
        f_prev = 0.0
        for i in range(m):
            Ax[i] = 0.0
            Ay[i] = 0.0
            f_prev += b[i] * b[i]
        f_best = f_prev
        t = 1.0
        done = False
        it = 0
        while it < max_iter:
            it += 1
            # gradient step on |Ay - b|^2
            for j in range(n):
                g = 0.0
                for i in range(m):
                    g += AT[j, i] * (Ay[i] - b[i])
                z[j] = y[j] - 2.0 * step * g
            if periodic:
                _periodic_prox(z, prox_w, x_new, work)
            else:
                _chain_prox(z, prox_w, x_new)
            f_new = 0.0
            for i in range(m):
                s = 0.0
                for j in range(n):
                    s += A[i, j] * x_new[j]
                Ax_new[i] = s
                f_new += (s - b[i]) ** 2
            f_new += lam * _tv_value(x_new, periodic)

            dx = 0.0
            xn = 0.0
            for j in range(n):
                dx += (x_new[j] - x[j]) ** 2
                xn += x_new[j] ** 2
            if f_new > f_prev:
                # restart safeguard: drop the momentum
                t = 1.0
                for j in range(n):
                    y[j] = x_new[j]
                for i in range(m):
                    Ay[i] = Ax_new[i]
            else:
                t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
                beta = (t - 1.0) / t_new
                t = t_new
                for j in range(n):
                    y[j] = x_new[j] + beta * (x_new[j] - x[j])
                for i in range(m):
                    Ay[i] = Ax_new[i] + beta * (Ax_new[i] - Ax[i])
            if f_new < f_best:
                f_best = f_new
                for j in range(n):
                    best[j] = x_new[j]
            small_step = dx <= (tol * tol) * max(xn, 1e-300)
            small_obj = abs(f_prev - f_new) <= tol * max(f_new, 1e-300)
            for j in range(n):
                x[j] = x_new[j]
            for i in range(m):
                Ax[i] = Ax_new[i]
            f_prev = f_new
            if tol > 0.0 and small_step and small_obj:
                done = True
                break
        r = 0.0
        for i in range(m):
            s = 0.0
            for j in range(n):
                s += A[i, j] * best[j]
            r += (s - b[i]) ** 2
        for j in range(n):
            Q[j, c] = best[j]
        iters[c] = it
        objs[c] = f_best
        resid[c] = np.sqrt(r)
        conv[c] = done or f_best == 0.0


def fista_tv_batch(A, B, lam, periodic: bool = True, max_iter: int = 100,
                   tol: float = 1e-8, lipschitz: Optional[float] = None):
    """FISTA on ``|A q - b|^2 + lam * (2 pi / N) * TV(q)`` for every column of ``B``.

    ``lam`` is a scalar or one value per column. Returns ``(Q, reports)`` with
    ``Q`` holding the best iterate for each column. ``tol=0`` runs exactly
    ``max_iter`` iterations.
    """
    A = np.ascontiguousarray(A, dtype=float)
    B = np.ascontiguousarray(np.atleast_2d(np.asarray(B, dtype=float).T).T)
    m, n = A.shape
    if B.shape[0] != m:
        raise ValueError(f"data has {B.shape[0]} rows, matrix has {m}")
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (B.shape[1],))
    if np.any(lam <= 0):
        raise ValueError("lambda must be positive")
    if lipschitz is None:
        lipschitz = 2.0 * 1.01 * operator_norm_sq(A)
    step = 1.0 / lipschitz if lipschitz > 0 else 1.0
    tv_weights = np.ascontiguousarray(lam * 2 * np.pi / n)

    k = B.shape[1]
    Q = np.zeros((n, k))
    iters = np.zeros(k, dtype=np.int64)
    objs = np.zeros(k)
    resid = np.zeros(k)
    conv = np.zeros(k, dtype=np.bool_)
    _fista_columns(A, np.ascontiguousarray(A.T), B, tv_weights, step, int(max_iter),
                   float(tol), bool(periodic), Q, iters, objs, resid, conv)
    reports = [
        SolverReport(int(i), float(o), float(r), bool(c))
        for i, o, r, c in zip(iters, objs, resid, conv)
    ]
    return Q, reports


def fista_tv(problem: TVProblem, max_iter: int = 100, tol: float = 1e-8):
    """Solve a single :class:`TVProblem`; returns ``(q_star, report)``."""
    Q, reports = fista_tv_batch(problem.A, problem.b[:, None], problem.lam,
                                problem.periodic, max_iter, tol)
    return Q[:, 0], reports[0]
