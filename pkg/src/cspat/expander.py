"""Random left d-regular bipartite graphs as zero/one measurement matrices.

Left vertices are detectors (matrix columns), right vertices are measurements
(matrix rows). Indices are 0-based in memory and 1-based in the text format.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

ENUMERATION_BUDGET = 10**8
_BATCH = 200_000


@dataclass(frozen=True)
class MeasurementMatrix:
    m: int
    N: int
    d: int
    col_sets: tuple[frozenset, ...]
    seed: Optional[int] = None
    row_sets: tuple[frozenset, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        cols = tuple(frozenset(int(i) for i in c) for c in self.col_sets)
        if len(cols) != self.N:
            raise ValueError(f"expected {self.N} columns, got {len(cols)}")
        for j, c in enumerate(cols):
            if len(c) != self.d:
                raise ValueError(f"column {j} has {len(c)} ones, expected d={self.d}")
            if c and (min(c) < 0 or max(c) >= self.m):
                raise ValueError(f"column {j} references a row outside 0..{self.m - 1}")
        rows = [set() for _ in range(self.m)]
        for j, c in enumerate(cols):
            for i in c:
                rows[i].add(j)
        object.__setattr__(self, "col_sets", cols)
        object.__setattr__(self, "row_sets", tuple(frozenset(r) for r in rows))

    @classmethod
    def from_dense(cls, dense, seed: Optional[int] = None) -> "MeasurementMatrix":
        dense = np.asarray(dense)
        if not np.all((dense == 0) | (dense == 1)):
            raise ValueError("matrix entries must be 0 or 1")
        m, N = dense.shape
        counts = dense.sum(axis=0)
        if N and not np.all(counts == counts[0]):
            raise ValueError("columns do not all have the same number of ones")
        d = int(counts[0]) if N else 0
        cols = [np.nonzero(dense[:, j])[0] for j in range(N)]
        return cls(m, N, d, tuple(cols), seed)

    @classmethod
    def identity(cls, N: int) -> "MeasurementMatrix":
        return cls(N, N, 1, tuple((j,) for j in range(N)))

    def toarray(self) -> np.ndarray:
        A = np.zeros((self.m, self.N))
        for j, c in enumerate(self.col_sets):
            A[list(c), j] = 1.0
        return A

    @property
    def row_degrees(self) -> np.ndarray:
        return np.array([len(r) for r in self.row_sets])

    def __matmul__(self, other):
        return self.toarray() @ other


def sample_matrix(N: int, m: int, d: int, seed: Optional[int] = None) -> MeasurementMatrix:
    """Every column gets ``d`` distinct rows drawn uniformly, independently per column."""
    if not 1 <= d <= m:
        raise ValueError(f"need 1 <= d <= m, got d={d}, m={m}")
    if N < 1:
        raise ValueError("need at least one column")
    rng = np.random.default_rng(seed)
    cols = tuple(rng.choice(m, size=d, replace=False) for _ in range(N))
    return MeasurementMatrix(m, N, d, cols, seed)


def small_example_graph() -> MeasurementMatrix:
    """Hand-drawn 7-detector, 5-measurement graph with ``d = 2``.

    Detectors 2 and 3 (1-based) reach measurements {2, 3} and {3, 4}, so
    together they reach three measurements instead of four.
    """
    cols_1based = [(1, 2), (2, 3), (3, 4), (4, 5), (1, 5), (2, 5), (1, 4)]
    return MeasurementMatrix(5, 7, 2, tuple(tuple(i - 1 for i in c) for c in cols_1based))


def right_vertices(A: MeasurementMatrix, J: Iterable[int]) -> frozenset:
    """Rows connected to the columns in ``J`` (0-based)."""
    out = set()
    for j in J:
        out |= A.col_sets[j]
    return frozenset(out)


class ExpansionReport(NamedTuple):
    s_max: int
    theta: np.ndarray  # theta[s - 1] is the s-th restricted expansion constant
    witnesses: tuple  # a maximising column set for each s

    def theta_s(self, s: int) -> float:
        if not 1 <= s <= self.s_max:
            raise ValueError(f"s={s} outside the certified range 1..{self.s_max}")
        return float(self.theta[s - 1])


def expansion_constants(A: MeasurementMatrix, s_max: int) -> ExpansionReport:
    """Exact ``theta_s = max_{1 <= |J| <= s} 1 - |R(J)| / (d |J|)`` by enumeration."""
    if not 1 <= s_max <= A.N:
        raise ValueError(f"s_max must lie in 1..{A.N}")
    total = sum(math.comb(A.N, s) for s in range(1, s_max + 1))
    if total > ENUMERATION_BUDGET:
        raise ValueError(
            f"exhaustive enumeration needs {total} subsets, budget is {ENUMERATION_BUDGET}"
        )
    incidence = A.toarray().T.astype(bool)  # N x m
    best = np.zeros(s_max)
    witnesses = []
    for s in range(1, s_max + 1):
        worst_size, worst_J = A.d * s + 1, None
        combos = itertools.combinations(range(A.N), s)
        while True:
            chunk = np.array(list(itertools.islice(combos, _BATCH)), dtype=np.intp)
            if chunk.size == 0:
                break
            sizes = np.logical_or.reduce(incidence[chunk], axis=1).sum(axis=1)
            k = int(np.argmin(sizes))
            if sizes[k] < worst_size:
                worst_size, worst_J = int(sizes[k]), tuple(int(j) for j in chunk[k])
        # integer numerator: the quotient is correctly rounded, so comparisons
        # against 1/6 are exact
        best[s - 1] = (A.d * s - worst_size) / (A.d * s)
        witnesses.append(worst_J)
    theta = np.maximum.accumulate(best)
    return ExpansionReport(s_max, theta, tuple(witnesses))


def expander_parameters(N: int, s: int, theta: float, eps: float) -> tuple[int, float]:
    """Degree ``d`` and the factor ``m`` must be proportional to.

    Returns ``(ceil(ln(e N / (eps s)) / theta), s * ln(e N / (eps s)))``. The
    proportionality constant for ``m`` depends on ``theta`` only and is not
    known explicitly, so it is left to the caller.
    """
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    if not 1 <= s <= N:
        raise ValueError("need 1 <= s <= N")
    log_term = math.log(math.e * N / (eps * s))
    return math.ceil(log_term / theta), s * log_term


def best_s_term_error(x: Sequence[float], s: int) -> float:
    """l1 distance from ``x`` to its best ``s``-sparse approximation."""
    mags = np.sort(np.abs(np.asarray(x, dtype=float)))
    return float(mags[: max(mags.size - s, 0)].sum())


class RecoveryBound(NamedTuple):
    lhs: float
    rhs: float
    holds: bool
    applicable: bool


def recovery_error_bound(report: ExpansionReport, x, x_star, s: int, eta: float,
                         d: int, atol: float = 0.0) -> RecoveryBound:
    """Check ``|x - x*|_1 <= 2(1-2t)/(1-6t) sigma_s(x) + 4 eta / ((1-6t) d)``, ``t = theta_2s``.

    The bound says nothing unless ``theta_2s < 1/6``; then ``applicable`` is
    False and ``rhs`` is infinite. ``atol`` absorbs the accuracy of a numerical
    minimiser ``x_star``.
    """
    x = np.asarray(x, dtype=float)
    lhs = float(np.abs(x - np.asarray(x_star, dtype=float)).sum())
    t = report.theta_s(2 * s)
    if t >= 1 / 6:
        return RecoveryBound(lhs, math.inf, False, False)
    sigma = best_s_term_error(x, s)
    rhs = 2 * (1 - 2 * t) / (1 - 6 * t) * sigma + 4 * eta / ((1 - 6 * t) * d)
    return RecoveryBound(lhs, rhs, lhs <= rhs + atol, True)
