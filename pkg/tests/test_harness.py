"""Configuration, ensembles, suites, reports, and the CLI surface."""

import json
import re
import subprocess
import sys

import numpy as np
import pytest

from moilab.errors import ConfigError
from moilab.harness import (
    DEFAULT_TOLERANCES,
    ExperimentConfig,
    generate_ensemble,
    run_suite,
)
from moilab.matrix_io import save_matrix_csv, save_matrix_json
from moilab.rng import SplitMix64


def test_splitmix_reference_values():
    # first outputs for seed 0; reproducible across implementations
    gen = SplitMix64(0)
    assert gen.next_u64() == 0xE220A8397B1DCDAF
    assert gen.next_u64() == 0x6E789E6AA1B965F4
    gen2 = SplitMix64(0x123456789ABCDEF)
    vals = [gen2.uniform() for _ in range(3)]
    assert all(0.0 < v <= 1.0 for v in vals)


def test_config_requires_seed_and_validates():
    with pytest.raises(ConfigError):
        ExperimentConfig(seed=None)
    with pytest.raises(ConfigError):
        ExperimentConfig(seed=1, dimension=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(seed=1, ensemble="bogus")
    with pytest.raises(ConfigError):
        ExperimentConfig(seed=1, tolerances={"derivative_vs_fd": -1.0})


def test_config_from_json(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"seed": 9, "dimension": 3, "order": 2}))
    cfg = ExperimentConfig.from_json(path)
    assert (cfg.seed, cfg.dimension, cfg.order) == (9, 3, 2)
    bad = tmp_path / "bad.json"
    bad.write_text("{\"seed\": 1,")
    with pytest.raises(ConfigError, match="line"):
        ExperimentConfig.from_json(bad)
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"seed": 1, "bogus_field": 2}))
    with pytest.raises(ConfigError, match="bogus_field"):
        ExperimentConfig.from_json(unknown)
    missing = tmp_path / "missing.json"
    missing.write_text(json.dumps({"dimension": 3}))
    with pytest.raises(ConfigError, match="seed"):
        ExperimentConfig.from_json(missing)


def test_ensemble_deterministic_and_normalized():
    cfg = ExperimentConfig(seed=1, dimension=2)
    A1, B1, _ = generate_ensemble(cfg)
    A2, B2, _ = generate_ensemble(cfg)
    assert np.array_equal(A1, A2) and np.array_equal(B1, B2)
    assert np.linalg.norm(B1, 2) == pytest.approx(1.0, rel=1e-12)
    assert np.allclose(A1, A1.conj().T)


def test_ensemble_scalar_dimension():
    cfg = ExperimentConfig(seed=5, dimension=1)
    A, B, _ = generate_ensemble(cfg)
    assert A.shape == (1, 1) and B.shape == (1, 1)


def test_heavy_tail_ensemble_model():
    cfg = ExperimentConfig(seed=2, dimension=8, ensemble="diagonal_heavy_tail", p=2.0)
    A, B, model = generate_ensemble(cfg)
    assert np.allclose(A, np.eye(8))
    assert model.kind == "weighted_diagonal"
    b = np.diagonal(B).real
    assert b[0] == pytest.approx(8.0 ** (1.0 / 3.0))
    assert b[-1] == pytest.approx(1.0)


def test_fixed_matrix_file_ensemble(tmp_path):
    gen = SplitMix64(3)
    X = gen.complex_normals((3, 3))
    A = (X + X.conj().T) / 2
    save_matrix_json(tmp_path / "a.json", A)
    save_matrix_csv(tmp_path / "b.csv", np.eye(3))
    cfg = ExperimentConfig(
        seed=1, dimension=3, ensemble="fixed_matrix_file",
        matrix_a=str(tmp_path / "a.json"), matrix_b=str(tmp_path / "b.csv"),
    )
    A2, B2, _ = generate_ensemble(cfg)
    assert np.allclose(A2, A)
    assert np.allclose(B2, np.eye(3))
    cfg_bad = ExperimentConfig(seed=1, ensemble="fixed_matrix_file")
    with pytest.raises(ConfigError):
        generate_ensemble(cfg_bad)


def test_run_suite_counterexample(tmp_path):
    cfg = ExperimentConfig(seed=7, dims=[16, 64, 256], out_dir=str(tmp_path))
    report = run_suite(cfg, "counterexample")
    assert report.all_passed
    names = [r.name for r in report.records]
    assert "counterexample_heavy_divergence" in names
    csv_path = tmp_path / "counterexample.csv"
    assert csv_path.exists()
    header = csv_path.read_text().splitlines()[0]
    assert header == "d,t,r_heavy,r_bounded"


def test_run_suite_rejects_unknown_suite():
    cfg = ExperimentConfig(seed=7)
    with pytest.raises(ConfigError):
        run_suite(cfg, "nope")


def test_run_suite_derivatives_passes():
    cfg = ExperimentConfig(seed=7, dimension=4, order=2)
    report = run_suite(cfg, "derivatives")
    assert report.all_passed, [(r.name, r.measured) for r in report.records if not r.passed]
    assert all(r.threshold > 0 for r in report.records)


def test_report_json_deterministic(tmp_path):
    cfg = ExperimentConfig(seed=11, dimension=3, order=2)
    r1 = run_suite(cfg, "perturbation")
    r2 = run_suite(cfg, "perturbation")
    j1 = json.loads(r1.to_json())
    j2 = json.loads(r2.to_json())
    j1.pop("wall_time_s")
    j2.pop("wall_time_s")
    assert json.dumps(j1, sort_keys=True) == json.dumps(j2, sort_keys=True)


def _run_cli(args, cwd):
    return subprocess.run(
        [sys.executable, "-m", "moilab.cli", *args],
        capture_output=True, text=True, cwd=cwd,
    )


def test_cli_counterexample_and_exit_codes(tmp_path):
    res = _run_cli(["counterexample", "--p", "2.0", "--dims", "16,64",
                    "--out", str(tmp_path / "t.csv")], cwd=tmp_path)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "t.csv").exists()


def test_cli_config_error_exit_code(tmp_path):
    missing = tmp_path / "nope.json"
    res = _run_cli(["run", "--config", str(missing), "--suite", "counterexample",
                    "--out", str(tmp_path)], cwd=tmp_path)
    assert res.returncode == 2
    assert "configuration error" in res.stderr


def test_cli_ssf_and_deriv(tmp_path):
    gen = SplitMix64(13)
    X = gen.complex_normals((3, 3))
    A = (X + X.conj().T) / 2
    Y = gen.complex_normals((3, 3))
    B = (Y + Y.conj().T) / 2
    save_matrix_json(tmp_path / "a.json", A)
    save_matrix_json(tmp_path / "b.json", B)
    res = _run_cli(
        ["ssf", "--matrix-a", str(tmp_path / "a.json"), "--matrix-b",
         str(tmp_path / "b.json"), "--order", "2", "--out", str(tmp_path / "eta.csv")],
        cwd=tmp_path,
    )
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "eta.csv").exists()
    assert (tmp_path / "eta.csv.json").exists()
    res2 = _run_cli(["deriv", "--f", "gaussian", "--k", "1", "--t", "0.0",
                     "--seed", "5", "--dim", "3"], cwd=tmp_path)
    assert res2.returncode == 0, res2.stderr
    assert "fd_rel_err" in res2.stdout


def test_cli_run_reports_cross_process_identical(tmp_path):
    # two separate processes, same config and output directory: the report is
    # byte identical once the wall-time line is blanked
    cfg = {"seed": 3, "dimension": 3, "order": 2, "dims": [16, 64]}
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    out = tmp_path / "o"
    blank = lambda s: re.sub(rb'"wall_time_s": [0-9.e+-]+', b'"wall_time_s": 0', s)
    captured = []
    for _ in range(2):
        res = _run_cli(["run", "--config", str(cfg_path), "--suite", "counterexample",
                        "--out", str(out)], cwd=tmp_path)
        assert res.returncode == 0, res.stderr
        captured.append(
            (
                blank((out / "report_counterexample.json").read_bytes()),
                (out / "counterexample.csv").read_bytes(),
            )
        )
    assert captured[0][0] == captured[1][0]
    assert captured[0][1] == captured[1][1]


def test_threads_env_var_respected(tmp_path, monkeypatch):
    monkeypatch.setenv("MOI_LAB_THREADS", "2")
    cfg = ExperimentConfig(seed=11, dimension=3, order=2)
    r1 = run_suite(cfg, "perturbation")
    monkeypatch.setenv("MOI_LAB_THREADS", "1")
    r2 = run_suite(cfg, "perturbation")
    a = json.loads(r1.to_json())
    b = json.loads(r2.to_json())
    a.pop("wall_time_s")
    b.pop("wall_time_s")
    assert a == b


def test_default_tolerances_complete():
    cfg = ExperimentConfig(seed=1)
    for name in DEFAULT_TOLERANCES:
        assert cfg.tol(name) == DEFAULT_TOLERANCES[name]
    cfg2 = ExperimentConfig(seed=1, tolerances={"heldout_rel": 5e-4})
    assert cfg2.tol("heldout_rel") == 5e-4
