import json
import os
import subprocess
import sys

import numpy as np
import pytest

from bnu import io
from bnu.cli import EXIT_INPUT, EXIT_OK, EXIT_RUNTIME, main, resolve, worker_count
from bnu.exceptions import InputError, ParseError
from bnu.model import HyperConfig
from bnu.sampler import run
from bnu.simkit import SceneSpec, compose_scene

TINY = ["--K", "2", "--D", "8", "--width", "3", "--height", "3", "--snr_db", "30",
        "--n_iter", "12", "--n_chains", "2"]


# ------------------------------------------------------------------ matrices

def test_load_matrix_plain_and_header(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("1.0,2.0\n3.0,4.0\n")
    assert np.array_equal(io.load_matrix(p), [[1, 2], [3, 4]])
    p.write_text("b1,b2\n1.0,2.0\n")
    assert np.array_equal(io.load_matrix(p), [[1, 2]])


@pytest.mark.parametrize("text,line", [("1,2\n3,4\n5\n", 3), ("1,2\n3,x\n", 2), ("", 1)])
def test_load_matrix_errors_name_line(tmp_path, text, line):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(ParseError, match=f"line {line}"):
        io.load_matrix(p)


def test_save_load_round_trip(tmp_path):
    M = np.random.default_rng(0).normal(size=(4, 5)) * 1e-3
    io.save_matrix(tmp_path / "m.csv", M)
    assert np.array_equal(io.load_matrix(tmp_path / "m.csv"), M)


def test_format_float_shortest():
    assert io.format_float(0.1) == "0.1" and io.format_float(np.float64(2)) == "2.0"


# ------------------------------------------------------------------ config

def test_parse_config_text():
    raw = io.parse_config_text("# c\nn-iter = 5\n\ngamma_w=3 # trailing\n")
    assert raw == {"n_iter": "5", "gamma_w": "3"}
    with pytest.raises(ParseError, match="line 1"):
        io.parse_config_text("no equals sign\n")


@pytest.mark.parametrize("value,kind,expected", [("3", int, 3), ("2.5", float, 2.5), ("true", bool, True),
                                                 ("none", "optional_float", None), ("0", bool, False)])
def test_coerce(value, kind, expected):
    assert io.coerce(value, kind) == expected


def test_coerce_rejects_garbage():
    with pytest.raises(InputError):
        io.coerce("abc", int, "n_iter")


def test_flags_override_file(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("n_iter = 50\ngamma_w = 7\n")
    cmd, out, values = resolve(["unmix", "--config", str(cfg), "--n-iter", "9", "--out", str(tmp_path)])
    assert cmd == "unmix" and values["n_iter"] == 9 and values["gamma_w"] == 7.0 and values["seed"] == 0


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("bogus = 1\n")
    with pytest.raises(InputError):
        resolve(["unmix", "--config", str(cfg), "--out", str(tmp_path)])


def test_worker_count(monkeypatch):
    monkeypatch.delenv("BNU_THREADS", raising=False)
    assert worker_count(8) == 1
    monkeypatch.setenv("BNU_THREADS", "4")
    assert worker_count(8) == 4 and worker_count(2) == 2
    monkeypatch.setenv("BNU_THREADS", "zero")
    with pytest.raises(InputError):
        worker_count(3)


# ------------------------------------------------------------------ results

def test_save_result_files(tmp_path):
    gt = compose_scene(SceneSpec(K=2, D=8, width=3, height=3, snr_db=30, seed=1))
    res = run(gt.Z_noisy, HyperConfig(n_iter=15, n_chains=2), seed=1)
    report = io.save_result(res, tmp_path, ground_truth=gt)
    assert len((tmp_path / "trace.jsonl").read_text().splitlines()) == 15
    rec = json.loads((tmp_path / "trace.jsonl").read_text().splitlines()[0])
    assert {"sweep", "K", "sigma_z2", "log_posterior"} <= set(rec)
    on_disk = json.loads((tmp_path / "report.json").read_text())
    assert {"estimated_K", "map_log_posterior", "theta_F", "theta_S", "mean_sid", "accuracy"} <= set(on_disk)
    assert on_disk["estimated_K"] == report["estimated_K"] == res.estimated_K
    np.testing.assert_allclose(io.load_matrix(tmp_path / "endmembers.csv"), res.endmembers, rtol=0, atol=1e-12)
    assert io.load_matrix(tmp_path / "abundances.csv").shape == (9, res.estimated_K)
    for name in ("K_vs_sweep", "log_posterior_vs_sweep"):
        lines = (tmp_path / "plotdata" / f"{name}.csv").read_text().splitlines()
        assert lines[0] == "x,y" and len(lines) == 16


# ------------------------------------------------------------------ commands

def test_simulate_unmix_evaluate(tmp_path):
    sim, unm, ev = tmp_path / "sim", tmp_path / "unmix", tmp_path / "eval"
    assert main(["simulate", *TINY[:10], "--out", str(sim), "--seed", "3"]) == EXIT_OK
    assert {"Z.csv", "F_true.csv", "S_true.csv", "config.resolved"} <= {p.name for p in sim.iterdir()}
    assert main(["unmix", "--input", str(sim / "Z.csv"), "--n_iter", "10", "--n_chains", "2",
                 "--out", str(unm)]) == EXIT_OK
    assert main(["evaluate", "--estimate", str(unm), "--truth", str(sim), "--out", str(ev)]) == EXIT_OK
    rep = json.loads((ev / "report.json").read_text())
    assert rep["K_true"] == 2 and rep["theta_F"] >= 0
    resolved = (sim / "config.resolved").read_text()
    assert "seed = 3" in resolved and "K = 2" in resolved


def test_pipeline_summary_and_determinism(tmp_path):
    args = ["pipeline", *TINY, "--monte_carlo_runs", "2", "--seed", "5"]
    assert main([*args, "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main([*args, "--out", str(tmp_path / "b")]) == EXIT_OK
    lines = (tmp_path / "a" / "summary.csv").read_text().splitlines()
    assert lines[0] == "sweep_key,sweep_value,metric,value,n_runs"
    assert [ln.split(",")[2] for ln in lines[1:]] == ["accuracy", "rmse_K", "rmse_theta_F", "rmse_theta_S", "rmse_sid"]
    assert all(ln.endswith(",2") for ln in lines[1:])
    assert (tmp_path / "a" / "summary.csv").read_bytes() == (tmp_path / "b" / "summary.csv").read_bytes()
    t = "runs/base/seed6/trace.jsonl"
    assert (tmp_path / "a" / t).read_bytes() == (tmp_path / "b" / t).read_bytes()


def test_pipeline_sweep(tmp_path):
    assert main(["pipeline", *TINY, "--sweep_key", "snr_db", "--sweep_values", "20,40",
                 "--out", str(tmp_path)]) == EXIT_OK
    rows = (tmp_path / "summary.csv").read_text().splitlines()[1:]
    assert len(rows) == 10 and {r.split(",")[1] for r in rows} == {"20.0", "40.0"}


def test_pipeline_parallel_matches_serial(tmp_path, monkeypatch):
    args = ["pipeline", *TINY, "--monte_carlo_runs", "2"]
    assert main([*args, "--out", str(tmp_path / "s")]) == EXIT_OK
    monkeypatch.setenv("BNU_THREADS", "2")
    assert main([*args, "--out", str(tmp_path / "p")]) == EXIT_OK
    assert (tmp_path / "s" / "summary.csv").read_bytes() == (tmp_path / "p" / "summary.csv").read_bytes()


def test_exit_codes(tmp_path, capsys):
    assert main(["frobnicate", "--out", str(tmp_path)]) == EXIT_INPUT
    assert main(["unmix", "--out", str(tmp_path)]) == EXIT_INPUT
    assert main(["unmix", "--input", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == EXIT_INPUT
    assert main(["simulate", "--K", "0", "--out", str(tmp_path)]) == EXIT_INPUT
    assert main(["unmix", "--n_iter", "many", "--out", str(tmp_path)]) == EXIT_INPUT
    assert "bnu: error" in capsys.readouterr().err


def test_runtime_error_exit_code(tmp_path, monkeypatch):
    import bnu.cli as cli

    def boom(values, out):
        raise FloatingPointError("diverged")

    monkeypatch.setitem(cli.HANDLERS, "simulate", boom)
    assert main(["simulate", "--out", str(tmp_path)]) == EXIT_RUNTIME


def test_missing_out_dir_is_created_and_unwritable_fails(tmp_path):
    target = tmp_path / "new" / "deeper"
    assert main(["simulate", "--K", "2", "--D", "5", "--width", "2", "--height", "2", "--out", str(target)]) == EXIT_OK
    assert (target / "Z.csv").exists()
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["simulate", "--out", str(blocker / "sub")]) == EXIT_INPUT


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_read_only_out_dir(tmp_path):
    ro = tmp_path / "ro"
    ro.mkdir()
    ro.chmod(0o500)
    try:
        assert main(["simulate", "--out", str(ro)]) == EXIT_INPUT
    finally:
        ro.chmod(0o700)


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "bnu.cli", "simulate", "--K", "1", "--D", "4", "--width", "2",
                           "--height", "1", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "bnu.cli", "unmix", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 1
