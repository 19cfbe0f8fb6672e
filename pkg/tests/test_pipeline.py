import json
import subprocess
import sys

import numpy as np
import pytest

from cspat import io
from cspat.cli import main
from cspat.expander import sample_matrix
from cspat.pipeline import (
    LOCK_NAME,
    BenchSweep,
    ConfigError,
    ExperimentConfig,
    SolverFailure,
    benchmark_complexity,
    load_config,
    output_lock,
    run,
)


def small_config(tmp_path, method="cs_tv", **over):
    raw = {
        "phantom": "disc",
        "geometry": {"N": 40, "N_r": 128},
        "method": method,
        "matrix": {"m": 20, "d": 4, "matrix_seed": 3},
        "solver": {"max_iter": 50},
        "image_size": 48,
        "output_dir": str(tmp_path / "out"),
    }
    raw.update(over)
    return raw


def write_config(tmp_path, raw, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return path


# ---------------------------------------------------------------- config

@pytest.mark.parametrize("mutate", [
    lambda r: r.update(colour="red"),
    lambda r: r["geometry"].update(detectors=3),
    lambda r: r["matrix"].update(seed=1),
    lambda r: r["solver"].update(step=1.0),
    lambda r: r.update(noise={"sigma": 0.1, "seed": 2}),
    lambda r: r.update(phantom={"discs": [{"center": [0, 0], "radius": 0.2, "colour": 1}]}),
])
def test_unknown_keys_rejected(tmp_path, mutate):
    raw = small_config(tmp_path)
    mutate(raw)
    with pytest.raises(ConfigError, match="unknown key"):
        ExperimentConfig.from_dict(raw)


@pytest.mark.parametrize("mutate", [
    lambda r: r.pop("method"),
    lambda r: r.update(method="magic"),
    lambda r: r["matrix"].update(d=30),
    lambda r: r["matrix"].pop("m"),
    lambda r: r["geometry"].update(N=0),
    lambda r: r["geometry"].update(N_r=2.5),
    lambda r: r["solver"].update({"lambda": -1.0}),
    lambda r: r["solver"].update(periodic="yes"),
    lambda r: r.update(noise={"sigma": -0.1}),
    lambda r: r.update(phantom={"discs": [{"center": [0.9, 0], "radius": 0.3}]}),
    lambda r: r.update(phantom={"discs": []}),
    lambda r: r.update(output_dir=""),
])
def test_invalid_configs_rejected(tmp_path, mutate):
    raw = small_config(tmp_path)
    mutate(raw)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(raw)


def test_standard_subsample_needs_a_divisor(tmp_path):
    raw = small_config(tmp_path, "standard_subsample")
    raw["matrix"] = {"m": 7}
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(raw)


def test_config_hash_ignores_output_dir(tmp_path):
    a = ExperimentConfig.from_dict(small_config(tmp_path))
    b = ExperimentConfig.from_dict({**small_config(tmp_path), "output_dir": "elsewhere"})
    c = ExperimentConfig.from_dict(small_config(tmp_path, matrix={"m": 20, "d": 4,
                                                                   "matrix_seed": 4}))
    assert a.config_hash() == b.config_hash() != c.config_hash()
    # the canonical dict parses back to the same config
    assert ExperimentConfig.from_dict(a.to_dict()).config_hash() == a.config_hash()


def test_relative_output_dir_follows_config_file(tmp_path):
    raw = small_config(tmp_path, output_dir="results")
    cfg = load_config(write_config(tmp_path, raw))
    assert cfg.output_dir == tmp_path / "results"
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    (tmp_path / "broken.json").write_text("{")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "broken.json")


def test_lock_excludes_a_second_run(tmp_path):
    with output_lock(tmp_path):
        assert (tmp_path / LOCK_NAME).exists()
        with pytest.raises(ConfigError):
            with output_lock(tmp_path):
                pass
    assert not (tmp_path / LOCK_NAME).exists()


# ---------------------------------------------------------------- runs

@pytest.mark.parametrize("method", ["full_data", "standard_subsample", "cs_l1", "cs_tv"])
def test_manifest_lists_every_file(tmp_path, method):
    raw = small_config(tmp_path, method)
    if method == "standard_subsample":
        raw["matrix"] = {"m": 20}
    m = run(ExperimentConfig.from_dict(raw))
    written = sorted(p.name for p in (tmp_path / "out").iterdir())
    assert written == sorted(m.artifacts)
    assert LOCK_NAME not in written
    saved = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert saved["metrics"] == json.loads((tmp_path / "out" / "metrics.json").read_text())
    assert saved["config_hash"] == m.config_hash
    for key in ("rmse", "rel_l2", "rel_l1", "max_abs", "streak_energy"):
        assert m.metrics[key] >= 0
    if method.startswith("cs_"):
        assert "sinogram_rel_l2" in m.metrics
        assert io.read_matrix(tmp_path / "out" / "matrix.txt").m == 20
    if method == "standard_subsample":
        assert m.info["weighting"] == "1/m"


def test_runs_are_bit_identical(tmp_path):
    outs = []
    for k in range(2):
        raw = small_config(tmp_path, output_dir=str(tmp_path / f"run{k}"),
                           noise={"sigma": 0.01, "noise_seed": 5})
        run(ExperimentConfig.from_dict(raw))
        outs.append({p.name: p.read_bytes() for p in (tmp_path / f"run{k}").glob("*.csv")})
    assert outs[0].keys() == outs[1].keys() and len(outs[0]) >= 3
    assert all(outs[0][k] == outs[1][k] for k in outs[0])


def test_noise_seed_changes_the_data(tmp_path):
    vals = []
    for seed in (1, 2):
        raw = small_config(tmp_path, "full_data", output_dir=str(tmp_path / f"s{seed}"),
                           noise={"sigma": 0.01, "noise_seed": seed})
        run(ExperimentConfig.from_dict(raw))
        vals.append(io.read_csv(tmp_path / f"s{seed}" / "measured.csv"))
    assert not np.array_equal(*vals)


def test_completed_data_does_not_beat_full_data(tmp_path):
    errs = {}
    for method in ("full_data", "cs_tv"):
        raw = small_config(tmp_path, method, output_dir=str(tmp_path / method),
                           solver={"max_iter": 300})
        errs[method] = run(ExperimentConfig.from_dict(raw)).metrics["rel_l2"]
    assert errs["cs_tv"] >= errs["full_data"] - 1e-3


def test_strict_mode_reports_unconverged_columns(tmp_path):
    raw = small_config(tmp_path, solver={"max_iter": 1, "tol": 1e-14, "strict": True})
    with pytest.raises(SolverFailure) as exc:
        run(ExperimentConfig.from_dict(raw))
    assert exc.value.stage == "complete"
    assert exc.value.columns
    assert "complete" in str(exc.value)


# ---------------------------------------------------------------- bench

def test_bench_single_point_gives_one_row():
    table = benchmark_complexity({"N": 16, "m": 8, "d": 2, "max_iter": 2, "repeats": 1})
    assert len(table["rows"]) == 1
    assert table["rows"][0]["seconds"] > 0
    assert table["slope_vs_N"] == {"8": None}


def test_bench_sweep_validation():
    with pytest.raises(ConfigError):
        BenchSweep.from_dict({"N": [16], "m": [8], "bogus": 1})
    with pytest.raises(ConfigError):
        BenchSweep.from_dict({"N": [16], "m": [2], "d": 4})
    s = BenchSweep.from_dict({"N": [16, 32], "m": 8, "d": 2})
    assert s.m == (8,) and s.radial_samples(32) == 32


# ---------------------------------------------------------------- CLI

def test_cli_run_prints_metrics_json(tmp_path, capsys):
    path = write_config(tmp_path, small_config(tmp_path, "full_data"))
    assert main(["run", str(path)]) == 0
    metrics = json.loads(capsys.readouterr().out.strip())
    assert metrics["rel_l2"] < 0.5


def test_cli_exit_codes(tmp_path, capsys):
    bad = write_config(tmp_path, {**small_config(tmp_path), "extra": 1}, "bad.json")
    assert main(["run", str(bad)]) == 2
    assert main(["run", str(tmp_path / "nope.json")]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["certify", str(tmp_path / "nope.txt"), "--smax", "2"]) == 2
    strict = write_config(tmp_path, small_config(
        tmp_path, solver={"max_iter": 1, "tol": 1e-14, "strict": True}), "strict.json")
    assert main(["run", str(strict)]) == 3
    locked = small_config(tmp_path, "full_data", output_dir=str(tmp_path / "locked"))
    (tmp_path / "locked").mkdir()
    (tmp_path / "locked" / LOCK_NAME).write_text("1\n")
    assert main(["run", str(write_config(tmp_path, locked, "locked.json"))]) == 2


def test_cli_certify(tmp_path, capsys):
    A = sample_matrix(10, 8, 3, 0)
    io.write_matrix(tmp_path / "A.txt", A)
    assert main(["certify", str(tmp_path / "A.txt"), "--smax", "2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert (out["m"], out["N"], out["d"], out["s_max"]) == (8, 10, 3, 2)
    assert out["theta"][0] == 0.0 and len(out["witnesses"]) == 2
    assert all(1 <= j <= 10 for w in out["witnesses"] for j in w)
    assert main(["certify", str(tmp_path / "A.txt"), "--smax", "11"]) == 2


def test_cli_bench(tmp_path, capsys):
    path = write_config(tmp_path, {"N": [16], "m": [8], "d": 2, "max_iter": 2, "repeats": 1},
                        "sweep.json")
    assert main(["bench", str(path)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2
    assert json.loads(lines[0])["N"] == 16


def test_console_script_entry_point(tmp_path):
    path = write_config(tmp_path, {**small_config(tmp_path), "extra": 1})
    proc = subprocess.run([sys.executable, "-m", "cspat.cli", "run", str(path)],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert "unknown key" in proc.stderr
