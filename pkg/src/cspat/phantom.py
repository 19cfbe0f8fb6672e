"""Disc phantoms, detector geometry and analytic spherical means."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

SINOGRAM_KINDS = ("spherical_means", "filtered", "sparsified", "pressure")


@dataclass(frozen=True)
class Disc:
    center: tuple[float, float]
    radius: float
    amplitude: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if not self.radius > 0:
            raise ValueError(f"disc radius must be positive, got {self.radius}")

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of ``points[..., 2]`` lying strictly inside the disc."""
        dx = points[..., 0] - self.center[0]
        dy = points[..., 1] - self.center[1]
        return dx * dx + dy * dy < self.radius**2


@dataclass(frozen=True)
class Phantom:
    discs: tuple[Disc, ...]
    detector_radius: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "discs", tuple(self.discs))
        if not self.detector_radius > 0:
            raise ValueError("detector_radius must be positive")
        for disc in self.discs:
            if np.hypot(*disc.center) + disc.radius >= self.detector_radius:
                raise ValueError(
                    f"{disc} is not strictly inside the detector circle of radius "
                    f"{self.detector_radius}"
                )

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Evaluate the initial pressure at ``points[..., 2]``."""
        points = np.asarray(points, dtype=float)
        out = np.zeros(points.shape[:-1])
        for disc in self.discs:
            out += disc.amplitude * disc.contains(points)
        return out

    def scaled(self, factor: float) -> "Phantom":
        discs = [Disc(d.center, d.radius, factor * d.amplitude) for d in self.discs]
        return Phantom(tuple(discs), self.detector_radius)

    def rotated(self, angle: float) -> "Phantom":
        c, s = np.cos(angle), np.sin(angle)
        discs = [
            Disc((c * d.center[0] - s * d.center[1], s * d.center[0] + c * d.center[1]),
                 d.radius, d.amplitude)
            for d in self.discs
        ]
        return Phantom(tuple(discs), self.detector_radius)


def disc_phantom(detector_radius: float = 1.0) -> Phantom:
    """Single unit disc used throughout the desk-scale experiments.

    Off-centre on purpose: a disc centred at the origin gives identical data at
    every detector and the angular sparsity would be trivial.
    """
    R = detector_radius
    return Phantom((Disc((0.2 * R, 0.0), 0.25 * R, 1.0),), R)


def random_phantom(rng: np.random.Generator, n_discs: int, detector_radius: float = 1.0,
                   max_radius: float = 0.35) -> Phantom:
    R = detector_radius
    discs = []
    for _ in range(n_discs):
        radius = rng.uniform(0.05, max_radius) * R
        rho = rng.uniform(0.0, 0.97 * R - radius)
        phi = rng.uniform(0.0, 2 * np.pi)
        amp = rng.uniform(0.2, 1.5) * rng.choice([-1.0, 1.0])
        discs.append(Disc((rho * np.cos(phi), rho * np.sin(phi)), radius, amp))
    return Phantom(tuple(discs), R)


@dataclass(frozen=True)
class DetectorGeometry:
    """``N`` detectors on a circle (or an arc) and ``N_r`` radii on ``[0, 2R]``.

    With ``arc=None`` the detectors are equispaced over the full circle starting
    at angle 0. With ``arc=(theta0, theta1)`` they are equispaced over the closed
    arc, endpoints included.
    """

    N: int
    N_r: int = 512
    detector_radius: float = 1.0
    arc: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("need at least one detector")
        if self.N_r < 2:
            raise ValueError("need at least two radial samples")
        if not self.detector_radius > 0:
            raise ValueError("detector_radius must be positive")
        if self.arc is not None:
            t0, t1 = map(float, self.arc)
            if not t1 > t0 or t1 - t0 > 2 * np.pi:
                raise ValueError(f"invalid arc {self.arc}")
            object.__setattr__(self, "arc", (t0, t1))

    @property
    def full_circle(self) -> bool:
        return self.arc is None

    @property
    def angles(self) -> np.ndarray:
        if self.arc is None:
            return 2 * np.pi * np.arange(self.N) / self.N
        if self.N == 1:
            return np.array([0.5 * (self.arc[0] + self.arc[1])])
        return np.linspace(self.arc[0], self.arc[1], self.N)

    @property
    def angular_weights(self) -> np.ndarray:
        """Quadrature weights of the detectors, normalised so a full circle sums to 1."""
        if self.arc is None:
            return np.full(self.N, 1.0 / self.N)
        if self.N == 1:
            return np.array([(self.arc[1] - self.arc[0]) / (2 * np.pi)])
        return np.full(self.N, (self.arc[1] - self.arc[0]) / (self.N - 1) / (2 * np.pi))

    @property
    def positions(self) -> np.ndarray:
        a = self.angles
        return self.detector_radius * np.stack([np.cos(a), np.sin(a)], axis=1)

    @property
    def radii(self) -> np.ndarray:
        return np.linspace(0.0, 2 * self.detector_radius, self.N_r)

    @property
    def spacing(self) -> float:
        return 2 * self.detector_radius / (self.N_r - 1)

    def subsample(self, count: int) -> tuple["DetectorGeometry", np.ndarray]:
        """Keep ``count`` equispaced detectors; returns the geometry and kept indices."""
        if not 1 <= count <= self.N:
            raise ValueError(f"cannot keep {count} of {self.N} detectors")
        idx = np.floor(np.arange(count) * self.N / count).astype(int)
        if self.arc is None:
            if self.N % count:
                raise ValueError("full-circle subsampling needs count dividing N")
            return DetectorGeometry(count, self.N_r, self.detector_radius), idx
        idx = np.round(np.linspace(0, self.N - 1, count)).astype(int)
        a = self.angles
        geo = DetectorGeometry(count, self.N_r, self.detector_radius, (a[idx[0]], a[idx[-1]]))
        return geo, idx


@dataclass
class Sinogram:
    """Values over detector (or measurement) rows and radial samples."""

    geometry: DetectorGeometry
    values: np.ndarray
    kind: str = "spherical_means"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.kind not in SINOGRAM_KINDS:
            raise ValueError(f"unknown sinogram kind {self.kind!r}")
        if self.values.ndim != 2 or self.values.shape[1] != self.geometry.N_r:
            raise ValueError(
                f"values of shape {self.values.shape} do not match N_r={self.geometry.N_r}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("sinogram contains non-finite values")

    @property
    def radii(self) -> np.ndarray:
        return self.geometry.radii


@dataclass
class ImageGrid:
    """``n x n`` raster over ``[-R, R]^2``; ``values[a, b]`` sits at ``(x_a, y_b)``."""

    values: np.ndarray
    detector_radius: float = 1.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise ValueError("image must be square")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @staticmethod
    def pixel_centers(n: int, detector_radius: float = 1.0) -> np.ndarray:
        R = detector_radius
        return -R + (np.arange(n) + 0.5) * 2 * R / n

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        c = self.pixel_centers(self.n, self.detector_radius)
        return np.meshgrid(c, c, indexing="ij")


def spherical_mean_disc(disc: Disc, z, r):
    """Average of ``disc`` over the circle of radius ``r`` around ``z``.

    Vectorised over ``r``; ``z`` is a single point.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("radius must be nonnegative")
    a = disc.radius
    d = float(np.hypot(z[0] - disc.center[0], z[1] - disc.center[1]))
    if d == 0.0:
        return np.where(r < a, disc.amplitude, 0.0)[()]

    inside = r < a - d
    crossing = (r > abs(d - a)) & (r < d + a)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        cos_half = (d * d + r * r - a * a) / (2 * d * r)
    frac = np.arccos(np.clip(cos_half, -1.0, 1.0)) / np.pi
    out = np.where(inside, 1.0, np.where(crossing, frac, 0.0))
    return (disc.amplitude * out)[()]


def forward_sinogram(phantom: Phantom, geometry: DetectorGeometry) -> Sinogram:
    if not np.isclose(phantom.detector_radius, geometry.detector_radius):
        raise ValueError("phantom and geometry disagree on the detector radius")
    radii = geometry.radii
    values = np.zeros((geometry.N, geometry.N_r))
    for j, z in enumerate(geometry.positions):
        for disc in phantom.discs:
            values[j] += spherical_mean_disc(disc, z, radii)
    return Sinogram(geometry, values, "spherical_means")


def rasterize(phantom: Phantom, n: int) -> ImageGrid:
    if n < 2:
        raise ValueError("raster needs n >= 2")
    img = ImageGrid(np.zeros((n, n)), phantom.detector_radius)
    x, y = img.mesh()
    img.values = phantom(np.stack([x, y], axis=-1))
    return img


def circle_quadrature_oracle(f, z, radii: Sequence[float], n_samples: int = 8192,
                             n_levels: int = 18, split: int = 8) -> np.ndarray:
    """Circle averages of a piecewise-constant black box ``f`` at centre ``z``.

    Each circle is sampled at ``n_samples`` angles. Every cell whose end values
    differ is split into ``split`` sub-cells, recursively for ``n_levels``
    levels, so cells holding several crossings (overlapping discs) are resolved
    too. The surviving cells, a few 1e-18 rad wide, mark the breakpoints and
    the arcs between them are integrated exactly. Only point evaluations of
    ``f`` are used, so this is independent of the closed form in
    :func:`spherical_mean_disc`. An arc shorter than one sampling cell whose
    ends agree is missed; it weighs at most ``1 / n_samples``.
    """
    z = np.asarray(z, dtype=float)
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    M = n_samples
    theta = 2 * np.pi * np.arange(M + 1) / M

    def evaluate(r, t):
        pts = np.stack([z[0] + r * np.cos(t), z[1] + r * np.sin(t)], axis=-1)
        return f(pts)

    vals = evaluate(radii[:, None], theta[None, :])
    rows, cells = np.nonzero(vals[:, :-1] != vals[:, 1:])
    # arcs without any crossing contribute their constant value
    out = vals[:, 0].astype(float)
    if rows.size == 0:
        return out

    lo = theta[cells]
    width = np.full(lo.shape, theta[1])
    v_lo, v_hi = vals[rows, cells], vals[rows, cells + 1]
    frac = np.arange(1, split) / split
    for _ in range(n_levels):
        t = lo[:, None] + width[:, None] * frac[None, :]
        inner = evaluate(radii[rows][:, None], t)
        full = np.concatenate([v_lo[:, None], inner, v_hi[:, None]], axis=1)
        k_cell, k_sub = np.nonzero(full[:, :-1] != full[:, 1:])
        width = width[k_cell] / split
        lo = lo[k_cell] + k_sub * width
        rows = rows[k_cell]
        v_lo, v_hi = full[k_cell, k_sub], full[k_cell, k_sub + 1]
    cut = lo + 0.5 * width

    for k in np.unique(rows):
        breaks = np.concatenate([[0.0], np.sort(cut[rows == k]), [2 * np.pi]])
        mids = 0.5 * (breaks[:-1] + breaks[1:])
        out[k] = np.sum(evaluate(radii[k], mids) * np.diff(breaks)) / (2 * np.pi)
    return out

    r = radii[rows]
    lo = theta[cells].copy()
    hi = theta[cells + 1].copy()
    left = vals[rows, cells]
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        same = evaluate(r, mid) == left
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    cut = 0.5 * (lo + hi)

    crossed = np.unique(rows)
    for k in crossed:
        sel = rows == k
        breaks = np.concatenate([[0.0], cut[sel], [2 * np.pi]])
        mids = 0.5 * (breaks[:-1] + breaks[1:])
        out[k] = np.sum(evaluate(radii[k], mids) * np.diff(breaks)) / (2 * np.pi)
    return out
