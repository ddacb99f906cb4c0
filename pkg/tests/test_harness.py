"""CLI, config validation, metrics persistence, and density dumps."""

import csv
import json

import numpy as np
import pytest

from fermihart import cli
from fermihart.config import resolve_config
from fermihart.errors import ConfigError, EvenGridSize, OddPoleCount
from fermihart.lattice import make_grid
from fermihart.metrics import MetricsRecord, dump_density, load_density, read_metrics, write_metrics


def record(t, rel=None):
    return MetricsRecord(
        t=t,
        free_energy_per_volume=-0.1 * t,
        free_energy_per_basis=-0.01 * t,
        hartree_energy_per_volume=0.2,
        electrons_per_volume=1.0,
        rel_density_error=rel,
        step_gamma=0.9**t,
        wall_time_matvec_batch=0.01,
        solver_iterations_max=5,
    )


def test_write_metrics_empty_and_roundtrip(tmp_path):
    path = tmp_path / "m.csv"
    write_metrics([], path)
    with open(path) as fh:
        lines = fh.read().strip().splitlines()
    assert len(lines) == 1  # header only
    assert "rel_density_error" not in lines[0]

    recs = [record(1, rel=0.5), record(2, rel=0.25)]
    write_metrics(recs, path, config={"a": 1})
    back = read_metrics(path)
    assert back == recs
    sidecar = json.loads((tmp_path / "m.json").read_text())
    assert sidecar["config"] == {"a": 1}
    assert "version" in sidecar


def test_rel_error_column_only_when_present(tmp_path):
    path = tmp_path / "m.csv"
    write_metrics([record(1), record(2)], path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    assert "rel_density_error" not in header
    back = read_metrics(path)
    assert back[0].rel_density_error is None


def test_dump_density_roundtrip(tmp_path):
    grid = make_grid(1, [3], [3.0])
    rho = np.array([0.25, 0.5, 0.125])
    base = tmp_path / "density"
    dump_density(rho, grid, base)
    with open(base.with_suffix(".csv")) as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 4  # header + 3 lines
    back, grid2 = load_density(base)
    np.testing.assert_array_equal(back, rho)
    assert grid2.sizes == grid.sizes
    header = json.loads(base.with_suffix(".json").read_text())
    assert int(np.prod(header["sizes"])) == rho.size
    # corrupted payload length is rejected
    rho.tofile(base.with_suffix(".f64"))
    np.concatenate([rho, [1.0]]).tofile(base.with_suffix(".f64"))
    with pytest.raises(ValueError):
        load_density(base)


def base_config(**over):
    raw = {
        "grid": {"dims": 1, "sizes": [21], "lengths": [5.0]},
        "physics": {"beta": 5.0, "mu": 0.0, "alpha": 0.5, "zeta": 1.0},
        "run": {"t_max": 10, "seed": 1},
        "estimator": {"n_samples": 2, "n_poles": 16},
    }
    for key, val in over.items():
        raw.setdefault(key, {}).update(val)
    return raw


def test_config_validation():
    with pytest.raises(EvenGridSize):
        resolve_config({"grid": {"dims": 1, "sizes": [4], "lengths": [1.0]}})
    with pytest.raises(OddPoleCount):
        resolve_config(base_config(estimator={"n_poles": 15}))
    with pytest.raises(OddPoleCount):
        resolve_config(base_config(estimator={"n_poles": 18}))
    with pytest.raises(ConfigError):
        resolve_config(base_config(schedule={"kind": "constant", "gamma0": 9.0, "clamp_step": False}))
    # clamp opt-in makes it legal
    cfg = resolve_config(base_config(schedule={"kind": "constant", "gamma0": 9.0, "clamp_step": True}))
    assert cfg.gamma0 == 9.0
    with pytest.raises(ConfigError):
        resolve_config({"grid": {"dims": 1, "sizes": [3], "lengths": [1.0]}, "bogus_section": {}})


def write_config(tmp_path, raw, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return str(path)


def test_cli_bad_config_exits_1(tmp_path):
    missing = str(tmp_path / "nope.json")
    assert cli.main(["run", missing]) == cli.EXIT_CONFIG
    bad = write_config(tmp_path, {"grid": {"dims": 1, "sizes": [4], "lengths": [1.0]}})
    assert cli.main(["run", bad]) == cli.EXIT_CONFIG


def test_cli_scf_then_run_with_validation(tmp_path):
    raw = base_config(output={"directory": str(tmp_path / "out")})
    cfg_path = write_config(tmp_path, raw)
    assert cli.main(["scf", cfg_path]) == 0
    assert (tmp_path / "out" / "scf_density.f64").exists()
    assert (tmp_path / "out" / "scf_summary.json").exists()

    raw["run"]["dense_validation"] = True
    cfg_path = write_config(tmp_path, raw, "cfg2.json")
    assert cli.main(["run", cfg_path]) == 0
    metrics = read_metrics(tmp_path / "out" / "metrics.csv")
    assert len(metrics) == 10
    assert all(m.rel_density_error is not None for m in metrics)
    assert (tmp_path / "out" / "density_final.f64").exists()
    sidecar = json.loads((tmp_path / "out" / "metrics.json").read_text())
    assert sidecar["config"]["seed"] == 1

    # without the reference present, dense_validation is a config error
    raw2 = base_config(output={"directory": str(tmp_path / "fresh")})
    raw2["run"]["dense_validation"] = True
    assert cli.main(["run", write_config(tmp_path, raw2, "cfg3.json")]) == cli.EXIT_CONFIG


def test_cli_run_determinism(tmp_path):
    raw = base_config(output={"directory": str(tmp_path / "a")})
    path = write_config(tmp_path, raw)
    assert cli.main(["run", path]) == 0
    assert cli.main(["--out", str(tmp_path / "b"), "run", path]) == 0
    rows_a = read_metrics(tmp_path / "a" / "metrics.csv")
    rows_b = read_metrics(tmp_path / "b" / "metrics.csv")
    for ra, rb in zip(rows_a, rows_b):
        assert ra.free_energy_per_volume == rb.free_energy_per_volume
        assert ra.electrons_per_volume == rb.electrons_per_volume
    da = (tmp_path / "a" / "density_final.f64").read_bytes()
    db = (tmp_path / "b" / "density_final.f64").read_bytes()
    assert da == db
    # different seed changes the stream
    assert cli.main(["--seed", "99", "--out", str(tmp_path / "c"), "run", path]) == 0
    rows_c = read_metrics(tmp_path / "c" / "metrics.csv")
    assert rows_a[-1].free_energy_per_volume != rows_c[-1].free_energy_per_volume


def test_cli_contour_check(tmp_path):
    raw = {
        "grid": {"dims": 1, "sizes": [41], "lengths": [40.0]},
        "physics": {"beta": 1.0, "alpha": 0.5},
        "contour_check": {"pole_counts": [4, 12, 20], "betas": [1.0], "n_samples": 4},
        "output": {"directory": str(tmp_path / "cc")},
    }
    path = write_config(tmp_path, raw)
    assert cli.main(["contour-check", path, "--assert"]) == 0
    with open(tmp_path / "cc" / "contour_check.csv") as fh:
        rows = list(csv.DictReader(fh))
    errs = [float(r["median_rel_err"]) for r in rows]
    assert errs == sorted(errs, reverse=True)


def test_cli_mu_scan_and_bench(tmp_path):
    raw = base_config(output={"directory": str(tmp_path / "ms")})
    raw["physics"]["n_target"] = 10.0
    raw["mu_scan"] = {"K": 8}
    path = write_config(tmp_path, raw)
    assert cli.main(["mu-scan", path]) == 0
    with open(tmp_path / "ms" / "mu_scan.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 9

    raw["bench"] = {"repeats": 2}
    path = write_config(tmp_path, raw, "bench.json")
    assert cli.main(["bench-matvec", path]) == 0
    assert (tmp_path / "ms" / "bench_matvec.csv").exists()


def test_thread_budget_resolution(monkeypatch):
    monkeypatch.delenv("FERMIHART_THREADS", raising=False)
    for var in cli._THREAD_ENV_VARS:
        monkeypatch.delenv(var, raising=False)
    assert cli._apply_thread_budget(["run", "x.json"]) == 1
    assert cli._apply_thread_budget(["--threads", "4", "run", "x.json"]) == 4
    import os

    assert os.environ["OMP_NUM_THREADS"] == "4"
    # the environment variable overrides the flag
    monkeypatch.setenv("FERMIHART_THREADS", "2")
    assert cli._apply_thread_budget(["--threads", "8", "run", "x.json"]) == 2


def test_csv_bytes_identical_except_wall_time(tmp_path):
    raw = base_config(output={"directory": str(tmp_path / "x")})
    path = write_config(tmp_path, raw)
    assert cli.main(["run", path]) == 0
    assert cli.main(["--out", str(tmp_path / "y"), "run", path]) == 0

    def strip_wall(p):
        with open(p) as fh:
            rows = list(csv.reader(fh))
        k = rows[0].index("wall_time_matvec_batch")
        return [[c for i, c in enumerate(r) if i != k] for r in rows]

    assert strip_wall(tmp_path / "x" / "metrics.csv") == strip_wall(tmp_path / "y" / "metrics.csv")
