"""End-to-end experiments driven by a single JSON config.

A run simulates the detector data of a disc phantom, optionally compresses it
with a random expander matrix, completes or filters it, backprojects and
compares against the rasterised phantom. All randomness comes from two seeds,
``matrix_seed`` and ``noise_seed``.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import io
from .expander import sample_matrix
from .phantom import (
    DetectorGeometry,
    Disc,
    Phantom,
    Sinogram,
    disc_phantom,
    forward_sinogram,
    rasterize,
)
from .recon import backproject, compare, streak_energy
from .solvers.completion import CompressedData, complete_sinogram, radial_integrate
from .solvers.tv import SolverReport
from .transforms import apply_filter

log = logging.getLogger(__name__)

RUN_METHODS = ("full_data", "standard_subsample", "cs_l1", "cs_tv")
LOCK_NAME = "cspat.lock"

_TOP_KEYS = {"phantom", "geometry", "matrix", "method", "solver", "noise", "image_size",
             "output_dir"}
_GEOMETRY_KEYS = {"N", "N_r", "R", "arc"}
_MATRIX_KEYS = {"m", "d", "matrix_seed"}
_SOLVER_KEYS = {"lambda", "lambda_sweep", "eta", "max_iter", "tol", "periodic", "bp_method",
                "strict"}
_NOISE_KEYS = {"sigma", "noise_seed"}
_DISC_KEYS = {"center", "radius", "amplitude"}
_BENCH_KEYS = {"N", "m", "d", "N_r", "N_r_factor", "max_iter", "repeats", "method", "lambda",
               "matrix_seed", "periodic"}


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class SolverFailure(RuntimeError):
    """A completion stage produced unusable output."""

    def __init__(self, stage: str, columns, message: str = ""):
        self.stage = stage
        self.columns = list(columns)
        shown = self.columns[:20]
        more = "" if len(self.columns) <= 20 else f" (+{len(self.columns) - 20} more)"
        super().__init__(f"stage {stage!r} failed on radial columns {shown}{more}. {message}".strip())


def _section(d: Any, allowed: set, name: str) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"{name} must be an object")
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name}: {', '.join(unknown)}")
    return d


def _int(value, name: str, lo: Optional[int] = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ConfigError(f"{name} must be >= {lo}, got {value}")
    return value


def _float(value, name: str, positive: bool = False, nonneg: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise ConfigError(f"{name} must be finite")
    if positive and not value > 0:
        raise ConfigError(f"{name} must be positive")
    if nonneg and value < 0:
        raise ConfigError(f"{name} must be nonnegative")
    return value


def _bool(value, name: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{name} must be true or false")
    return value


@dataclass(frozen=True)
class SolverOptions:
    lam: float = 0.05
    lambda_sweep: bool = False
    eta: Optional[float] = None
    max_iter: Optional[int] = None
    tol: float = 1e-8
    periodic: bool = True
    bp_method: str = "auto"
    strict: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "SolverOptions":
        d = _section(d, _SOLVER_KEYS, "solver")
        opts = cls()
        kw = asdict(opts)
        if "lambda" in d:
            kw["lam"] = _float(d["lambda"], "solver.lambda", positive=True)
        if "lambda_sweep" in d:
            kw["lambda_sweep"] = _bool(d["lambda_sweep"], "solver.lambda_sweep")
        if d.get("eta") is not None:
            kw["eta"] = _float(d["eta"], "solver.eta", nonneg=True)
        if d.get("max_iter") is not None:
            kw["max_iter"] = _int(d["max_iter"], "solver.max_iter", 1)
        if "tol" in d:
            kw["tol"] = _float(d["tol"], "solver.tol", nonneg=True)
        if "periodic" in d:
            kw["periodic"] = _bool(d["periodic"], "solver.periodic")
        if "bp_method" in d:
            if d["bp_method"] not in ("auto", "lp", "admm"):
                raise ConfigError("solver.bp_method must be auto, lp or admm")
            kw["bp_method"] = d["bp_method"]
        if "strict" in d:
            kw["strict"] = _bool(d["strict"], "solver.strict")
        return cls(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d


@dataclass(frozen=True)
class ExperimentConfig:
    phantom: Phantom
    geometry: DetectorGeometry
    method: str
    m: Optional[int] = None
    d: Optional[int] = None
    matrix_seed: int = 0
    solver: SolverOptions = SolverOptions()
    sigma: float = 0.0
    noise_seed: int = 0
    image_size: int = 256
    output_dir: Path = Path("cspat_out")

    @classmethod
    def from_dict(cls, raw: dict, base_dir=None) -> "ExperimentConfig":
        raw = _section(raw, _TOP_KEYS, "config")
        for key in ("phantom", "geometry", "method", "output_dir"):
            if key not in raw:
                raise ConfigError(f"missing required key {key!r}")

        geo = _section(raw["geometry"], _GEOMETRY_KEYS, "geometry")
        if "N" not in geo:
            raise ConfigError("geometry.N is required")
        N = _int(geo["N"], "geometry.N", 1)
        N_r = _int(geo.get("N_r", 512), "geometry.N_r", 3)
        R = _float(geo.get("R", 1.0), "geometry.R", positive=True)
        arc = geo.get("arc")
        if arc is not None:
            if not (isinstance(arc, list) and len(arc) == 2):
                raise ConfigError("geometry.arc must be [theta0, theta1] or null")
            arc = tuple(_float(a, "geometry.arc") for a in arc)
        try:
            geometry = DetectorGeometry(N, N_r, R, arc)
        except ValueError as exc:
            raise ConfigError(f"geometry: {exc}") from exc

        phantom = cls._parse_phantom(raw["phantom"], R)

        method = raw["method"]
        if method not in RUN_METHODS:
            raise ConfigError(f"method must be one of {RUN_METHODS}, got {method!r}")

        mat = _section(raw.get("matrix", {}), _MATRIX_KEYS, "matrix")
        m = _int(mat["m"], "matrix.m", 1) if "m" in mat else None
        d = _int(mat["d"], "matrix.d", 1) if "d" in mat else None
        matrix_seed = _int(mat.get("matrix_seed", 0), "matrix.matrix_seed", 0)
        if method in ("cs_l1", "cs_tv"):
            if m is None or d is None:
                raise ConfigError(f"method {method} needs matrix.m and matrix.d")
            if d > m:
                raise ConfigError(f"matrix.d={d} exceeds matrix.m={m}")
        if method == "standard_subsample":
            if m is None:
                raise ConfigError("standard_subsample needs matrix.m (detectors kept)")
            if m > N:
                raise ConfigError(f"cannot keep m={m} of N={N} detectors")
            if arc is None and N % m:
                raise ConfigError(f"full-circle subsampling needs m dividing N ({m} vs {N})")

        solver = SolverOptions.from_dict(raw.get("solver", {}))
        noise = _section(raw.get("noise", {}), _NOISE_KEYS, "noise")
        sigma = _float(noise.get("sigma", 0.0), "noise.sigma", nonneg=True)
        noise_seed = _int(noise.get("noise_seed", 0), "noise.noise_seed", 0)
        image_size = _int(raw.get("image_size", 256), "image_size", 2)

        out = raw["output_dir"]
        if not isinstance(out, str) or not out:
            raise ConfigError("output_dir must be a non-empty string")
        out = Path(out)
        if base_dir is not None and not out.is_absolute():
            out = Path(base_dir) / out
        return cls(phantom, geometry, method, m, d, matrix_seed, solver, sigma, noise_seed,
                   image_size, out)

    @staticmethod
    def _parse_phantom(value, R: float) -> Phantom:
        if value == "disc":
            return disc_phantom(R)
        value = _section(value, {"discs"}, "phantom")
        discs = value.get("discs")
        if not isinstance(discs, list) or not discs:
            raise ConfigError("phantom.discs must be a non-empty list")
        out = []
        for k, disc in enumerate(discs):
            disc = _section(disc, _DISC_KEYS, f"phantom.discs[{k}]")
            center = disc.get("center")
            if not (isinstance(center, list) and len(center) == 2):
                raise ConfigError(f"phantom.discs[{k}].center must be [x, y]")
            try:
                out.append(Disc(
                    tuple(_float(c, "center") for c in center),
                    _float(disc.get("radius"), f"phantom.discs[{k}].radius", positive=True),
                    _float(disc.get("amplitude", 1.0), f"phantom.discs[{k}].amplitude"),
                ))
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        try:
            return Phantom(tuple(out), R)
        except ValueError as exc:
            raise ConfigError(f"phantom: {exc}") from exc

    def to_dict(self) -> dict:
        g = self.geometry
        return {
            "phantom": {"discs": [
                {"center": list(d.center), "radius": d.radius, "amplitude": d.amplitude}
                for d in self.phantom.discs
            ]},
            "geometry": {"N": g.N, "N_r": g.N_r, "R": g.detector_radius,
                         "arc": list(g.arc) if g.arc else None},
            "matrix": {"m": self.m, "d": self.d, "matrix_seed": self.matrix_seed},
            "method": self.method,
            "solver": self.solver.to_dict(),
            "noise": {"sigma": self.sigma, "noise_seed": self.noise_seed},
            "image_size": self.image_size,
            "output_dir": str(self.output_dir),
        }

    def config_hash(self) -> str:
        """SHA-256 of the canonical config; the output directory does not count."""
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def load_config(path) -> ExperimentConfig:
    """Read a JSON config; a relative ``output_dir`` is taken relative to the file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(raw, base_dir=path.parent)


@dataclass
class RunManifest:
    config_hash: str
    config: dict
    timings: dict
    reports: list
    metrics: dict
    artifacts: list
    output_dir: Path
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "config": self.config,
            "timings": self.timings,
            "solver_reports": [asdict(r) for r in self.reports],
            "metrics": self.metrics,
            "artifacts": self.artifacts,
            "info": self.info,
        }


@contextmanager
def output_lock(directory: Path):
    """Exclusive lock file so two runs never share an output directory."""
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as exc:
        raise ConfigError(f"output directory {directory} is locked by {lock}") from exc
    try:
        os.write(fd, f"{os.getpid()}\n".encode())
        os.close(fd)
        yield lock
    finally:
        lock.unlink(missing_ok=True)


class _Timer:
    def __init__(self):
        self.timings = {}

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        yield
        self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0


def _detector_noise(cfg: ExperimentConfig) -> Optional[np.ndarray]:
    if cfg.sigma == 0:
        return None
    rng = np.random.default_rng(cfg.noise_seed)
    return rng.normal(0.0, cfg.sigma, size=(cfg.geometry.N, cfg.geometry.N_r))


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / nb) if nb > 0 else float(np.linalg.norm(a))


def _check_output(Q: np.ndarray, reports: list[SolverReport], strict: bool, stage: str):
    bad = sorted(set(np.nonzero(~np.all(np.isfinite(Q), axis=0))[0].tolist())
                 | {k for k, r in enumerate(reports) if not np.isfinite(r.objective)})
    if bad:
        raise SolverFailure(stage, bad, "non-finite solver output")
    if strict:
        failed = [k for k, r in enumerate(reports) if not r.converged]
        if failed:
            raise SolverFailure(stage, failed, "did not converge within max_iter")


def run(config: ExperimentConfig) -> RunManifest:
    """Execute one experiment and write its artifacts into ``config.output_dir``."""
    cfg = config
    out = Path(cfg.output_dir)
    timer = _Timer()
    artifacts: list[str] = []
    info: dict = {"method": cfg.method}
    reports: list[SolverReport] = []

    with output_lock(out):
        def save_rows(name: str, values: np.ndarray):
            io.write_csv(out / f"{name}.csv", values)
            io.write_pgm(out / f"{name}.pgm", values)
            artifacts.extend([f"{name}.csv", f"{name}.pgm", f"{name}.scale.txt"])

        with timer.stage("forward"):
            clean = forward_sinogram(cfg.phantom, cfg.geometry)
            reference = rasterize(cfg.phantom, cfg.image_size)
            noise = _detector_noise(cfg)
            noisy = clean if noise is None else Sinogram(cfg.geometry, clean.values + noise)

        direct = None
        n_sub = cfg.m if cfg.m is not None else cfg.geometry.N
        if cfg.method == "full_data":
            measured = noisy.values
            with timer.stage("filter"):
                filtered = apply_filter("fbp_filter", noisy)
        elif cfg.method == "standard_subsample":
            geo_sub, idx = cfg.geometry.subsample(cfg.m)
            measured = noisy.values[idx]
            info["kept_detectors"] = idx.tolist()
            info["weighting"] = "1/m"
            with timer.stage("filter"):
                filtered = apply_filter("fbp_filter", Sinogram(geo_sub, measured))
        else:
            with timer.stage("measure"):
                A = sample_matrix(cfg.geometry.N, cfg.m, cfg.d, cfg.matrix_seed)
                dense = A.toarray()
                values = dense @ clean.values
                if noise is not None:
                    values = values + dense @ noise
                y = CompressedData(A, cfg.geometry, values, "spherical_means", cfg.sigma,
                                   cfg.noise_seed if noise is not None else None)
                measured = y.values
            io.write_matrix(out / "matrix.txt", A)
            artifacts.append("matrix.txt")
            method = "tv_filtered" if cfg.method == "cs_tv" else "l1_sparsified"
            opt = cfg.solver
            with timer.stage("complete"):
                completed, reports = complete_sinogram(
                    A, y, method, lam=opt.lam, lam_sweep=opt.lambda_sweep, eta=opt.eta,
                    max_iter=opt.max_iter, tol=opt.tol, periodic=opt.periodic,
                    bp_method=opt.bp_method, sweep_seed=cfg.matrix_seed,
                )
            _check_output(completed.values, reports, opt.strict, "complete")
            info.update({k: v for k, v in completed.meta.items() if k != "method"})
            if method == "l1_sparsified":
                save_rows("sparsified", completed.values)
                with timer.stage("integrate"):
                    filtered = radial_integrate(completed)
            else:
                filtered = completed
            direct = apply_filter("fbp_filter", clean)

        save_rows("measured", measured)
        save_rows("filtered", filtered.values)

        with timer.stage("backproject"):
            image = backproject(filtered, cfg.image_size)
        save_rows("image", image.values)

        with timer.stage("metrics"):
            metrics = compare(image, reference).to_dict()
            metrics["streak_energy"] = streak_energy(image, n_sub)
            if direct is not None:
                metrics["sinogram_rel_l2"] = _rel(filtered.values, direct.values)
            if reports:
                metrics["unconverged_columns"] = int(sum(not r.converged for r in reports))
        if not cfg.geometry.full_circle:
            info["qualitative"] = "limited-angle data; the backprojection is not exact here"

        io.write_json(out / "metrics.json", metrics)
        artifacts.append("metrics.json")
        artifacts.append("manifest.json")
        manifest = RunManifest(cfg.config_hash(), cfg.to_dict(), timer.timings, reports,
                               metrics, artifacts, out, info)
        io.write_json(out / "manifest.json", manifest.to_dict())
    log.info("run %s finished: %s", cfg.method, metrics)
    return manifest


@dataclass(frozen=True)
class BenchSweep:
    N: tuple
    m: tuple
    d: int = 10
    N_r: Optional[int] = None
    N_r_factor: float = 1.0
    max_iter: int = 20
    repeats: int = 3
    method: str = "tv_filtered"
    lam: float = 0.05
    matrix_seed: int = 0
    periodic: bool = True

    @classmethod
    def from_dict(cls, raw: dict) -> "BenchSweep":
        raw = _section(raw, _BENCH_KEYS, "sweep")
        for key in ("N", "m"):
            vals = raw.get(key)
            if isinstance(vals, int) and not isinstance(vals, bool):
                vals = [vals]
            if not isinstance(vals, list) or not vals:
                raise ConfigError(f"sweep.{key} must be an integer or a non-empty list")
            raw = {**raw, key: tuple(_int(v, f"sweep.{key}", 1) for v in vals)}
        kw = {"N": raw["N"], "m": raw["m"]}
        if "d" in raw:
            kw["d"] = _int(raw["d"], "sweep.d", 1)
        if raw.get("N_r") is not None:
            kw["N_r"] = _int(raw["N_r"], "sweep.N_r", 3)
        if "N_r_factor" in raw:
            kw["N_r_factor"] = _float(raw["N_r_factor"], "sweep.N_r_factor", positive=True)
        if "max_iter" in raw:
            kw["max_iter"] = _int(raw["max_iter"], "sweep.max_iter", 1)
        if "repeats" in raw:
            kw["repeats"] = _int(raw["repeats"], "sweep.repeats", 1)
        if "method" in raw:
            if raw["method"] not in ("tv_filtered", "l1_sparsified"):
                raise ConfigError("sweep.method must be tv_filtered or l1_sparsified")
            kw["method"] = raw["method"]
        if "lambda" in raw:
            kw["lam"] = _float(raw["lambda"], "sweep.lambda", positive=True)
        if "matrix_seed" in raw:
            kw["matrix_seed"] = _int(raw["matrix_seed"], "sweep.matrix_seed", 0)
        if "periodic" in raw:
            kw["periodic"] = _bool(raw["periodic"], "sweep.periodic")
        sweep = cls(**kw)
        if sweep.d > min(sweep.m):
            raise ConfigError("sweep.d exceeds the smallest m")
        return sweep

    def radial_samples(self, N: int) -> int:
        return self.N_r if self.N_r is not None else max(3, int(round(self.N_r_factor * N)))


def _loglog_slope(x, t) -> Optional[float]:
    if len(x) < 2:
        return None
    return float(np.polyfit(np.log(x), np.log(t), 1)[0])


def benchmark_complexity(sweep) -> dict:
    """Time ``complete_sinogram`` at a fixed iteration count over a grid of ``(N, m)``.

    Every row reports the best of ``repeats`` wall-clock timings. With the
    default ``N_r = N`` the work per run is proportional to ``N^2 m max_iter``.
    Returns the table and the log-log slopes of time against ``N`` (per ``m``)
    and against ``m`` (per ``N``).
    """
    if isinstance(sweep, dict):
        sweep = BenchSweep.from_dict(sweep)
    phantom = disc_phantom()
    # compile the numba kernels outside the timed region
    warm = sample_matrix(8, 4, 2, 0)
    warm_geo = DetectorGeometry(8, 8)
    complete_sinogram(warm, CompressedData(warm, warm_geo, warm.toarray() @ forward_sinogram(
        phantom, warm_geo).values), sweep.method, lam=sweep.lam, max_iter=2, tol=0.0)

    problems = []
    for N in sweep.N:
        geo = DetectorGeometry(N, sweep.radial_samples(N))
        sino = forward_sinogram(phantom, geo)
        for m in sweep.m:
            if sweep.d > m:
                raise ConfigError(f"d={sweep.d} exceeds m={m}")
            A = sample_matrix(N, m, sweep.d, sweep.matrix_seed)
            problems.append((N, m, geo, A, CompressedData(A, geo, A.toarray() @ sino.values)))
    # repeats interleave across the grid, so slow drifts in machine load hit
    # every size alike instead of biasing the ratios
    best = np.full(len(problems), np.inf)
    for _ in range(sweep.repeats):
        for k, (N, m, geo, A, y) in enumerate(problems):
            t0 = time.perf_counter()
            complete_sinogram(A, y, sweep.method, lam=sweep.lam, max_iter=sweep.max_iter,
                              tol=0.0, periodic=sweep.periodic)
            best[k] = min(best[k], time.perf_counter() - t0)
    rows = [{"N": N, "m": m, "N_r": geo.N_r, "max_iter": sweep.max_iter, "seconds": float(t)}
            for (N, m, geo, _, _), t in zip(problems, best)]

    slope_N = {}
    for m in sweep.m:
        sel = [r for r in rows if r["m"] == m]
        slope_N[str(m)] = _loglog_slope([r["N"] for r in sel], [r["seconds"] for r in sel])
    slope_m = {}
    for N in sweep.N:
        sel = [r for r in rows if r["N"] == N]
        slope_m[str(N)] = _loglog_slope([r["m"] for r in sel], [r["seconds"] for r in sel])
    return {"rows": rows, "slope_vs_N": slope_N, "slope_vs_m": slope_m,
            "method": sweep.method, "max_iter": sweep.max_iter}
