import json
import os
import subprocess
import sys

import numpy as np
import pytest

from lvggm.cli import EXIT_INPUT, EXIT_OK, main
from lvggm.core import read_matrix, write_matrix


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth") / "tree3"
    assert main(["synth", "--model", "tree3", "--seed", "7", "--out", str(out)]) == EXIT_OK
    return out


def test_synth_writes_model_and_covariance(synth_dir):
    for name in ("K.txt", "structure.json", "sigma.txt", "S_true.txt", "spec.json", "K_true.svg"):
        assert (synth_dir / name).exists(), name
    spec = json.loads((synth_dir / "spec.json").read_text())
    assert spec["n_samples"] == 50 * 45
    assert read_matrix(synth_dir / "K.txt").shape == (48, 48)
    assert read_matrix(synth_dir / "sigma.txt").shape == (45, 45)


def test_synth_is_deterministic(synth_dir, tmp_path):
    main(["synth", "--model", "tree3", "--seed", "7", "--no-render", "--out", str(tmp_path)])
    assert (tmp_path / "sigma.txt").read_bytes() == (synth_dir / "sigma.txt").read_bytes()


def test_fit_and_eval(synth_dir, tmp_path):
    out = tmp_path / "fit"
    rc = main(["fit", "--input", str(synth_dir / "sigma.txt"), "--loss", "sm", "--lambda", "0.3",
               "--gamma", "0.5", "--k", "15", "--outer-iters", "5", "--out", str(out)])
    assert rc == EXIT_OK
    for name in ("S.txt", "atoms.json", "estimate.json", "K_complete.txt", "K_complete.svg"):
        assert (out / name).exists(), name
    est = json.loads((out / "estimate.json").read_text())
    K = read_matrix(out / "K_complete.txt")
    assert K.shape[0] == 45 + len(json.loads((out / "atoms.json").read_text())["atoms"])
    assert main(["eval", "--estimate", str(out), "--truth", str(synth_dir)]) == EXIT_OK
    metrics = json.loads((out / "metrics.json").read_text())
    assert {"precision", "recall", "f1", "jaccards", "nnz", "atoms"} <= set(metrics)
    assert "objective_trace" in est


def test_fit_baseline_and_eval(synth_dir, tmp_path):
    out = tmp_path / "base"
    rc = main(["fit-baseline", "--input", str(synth_dir / "sigma.txt"), "--lambda", "0.1",
               "--gamma", "0.5", "--iters", "5", "--out", str(out)])
    assert rc == EXIT_OK
    assert (out / "L.txt").exists()
    assert main(["eval", "--estimate", str(out), "--truth", str(synth_dir)]) == EXIT_OK


def test_grid_selects_and_is_thread_independent(synth_dir, tmp_path, monkeypatch):
    args = ["grid", "--input", str(synth_dir / "sigma.txt"), "--lambdas", "0.2,0.4",
            "--gammas", "0.5", "--k", "15", "--outer-iters", "3", "--select", "nnz=88,atoms=3",
            "--truth", str(synth_dir), "--baseline"]
    monkeypatch.setenv("LVGGM_THREADS", "1")
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    monkeypatch.setenv("LVGGM_THREADS", "2")
    assert main(args + ["--threads", "2", "--out", str(tmp_path / "b")]) == EXIT_OK
    a = (tmp_path / "a" / "grid.csv").read_bytes()
    assert a == (tmp_path / "b" / "grid.csv").read_bytes()
    assert a.decode().count("\n") == 1 + 4
    sel = json.loads((tmp_path / "a" / "selected.json").read_text())
    assert sel["selected_lvggm"]["cell"] in (0, 1)
    assert sel["selected_baseline"]["method"] == "baseline"


def test_certify_flat_with_decomposition(tmp_path):
    assert main(["certify", "--flat", "40,10,2", "--decompose", "--out", str(tmp_path)]) == EXIT_OK
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["passed"]
    d = summary["decomposition"]
    assert d["support_S_exact"] and d["atom_supports_exact"]
    assert max(d["max_error_S"], d["max_error_L"]) < 1e-2
    cert = json.loads((tmp_path / "certificate.json").read_text())
    assert cert["pass"] and "margins" in cert


def test_render(tmp_path):
    path = tmp_path / "m.txt"
    write_matrix(path, np.array([[1.0, -2.0], [-2.0, 0.0]]))
    assert main(["render", "--matrix", str(path), "--split", "1", "--out", str(tmp_path / "m.svg")]) == EXIT_OK
    svg = (tmp_path / "m.svg").read_text()
    assert svg.startswith("<svg") and svg.count("<rect") == 1 + 3


def test_run_config_with_override(tmp_path):
    cfg = tmp_path / "exp.toml"
    cfg.write_text(
        "[synth]\nmodel = \"tree3\"\nseed = 1\n\n"
        "[fit]\nloss = \"sm\"\nlambda = 0.3\ngamma = 0.5\nk = 15\nouter_iters = 3\n\n"
        "[output]\nrender = false\n")
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--set", "fit.lambda=0.4", "--out", str(out)]) == EXIT_OK
    assert json.loads((out / "config.json").read_text())["fit"]["lambda"] == 0.4
    assert (out / "fit" / "metrics.json").exists()
    assert not (out / "fit" / "K_complete.svg").exists()


@pytest.mark.parametrize("body, line", [
    ("[synth]\nmodel = \"tree3\"\nsede = 3\n", 3),
    ("[synth]\nmodel = \"tree3\"\n\n[fit]\nlambda = \"big\"\n", 5),
    ("[synth]\nmodel = tree3\n", 2),
    ("[nonsense]\nx = 1\n", 1),
])
def test_config_errors_name_the_line(tmp_path, capsys, body, line):
    cfg = tmp_path / "bad.toml"
    cfg.write_text(body)
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_INPUT
    assert f"bad.toml:{line}:" in capsys.readouterr().err


def test_headerless_matrix_is_rejected(tmp_path, capsys):
    path = tmp_path / "m.txt"
    np.savetxt(path, np.eye(2))
    assert main(["render", "--matrix", str(path), "--out", str(tmp_path / "m.svg")]) == EXIT_INPUT
    assert "line 1" in capsys.readouterr().err


def test_bad_override_and_missing_input(tmp_path, capsys):
    cfg = tmp_path / "ok.toml"
    cfg.write_text("[output]\nrender = false\n")
    assert main(["run", str(cfg), "--set", "fit.lambda"]) == EXIT_INPUT
    assert main(["fit", "--input", str(tmp_path / "nope.txt"), "--lambda", "1", "--gamma", "1",
                 "--k", "2", "--out", str(tmp_path / "o")]) == EXIT_INPUT
    assert main(["grid", "--input", str(tmp_path / "nope.txt"), "--lambdas", "1", "--gammas", "1",
                 "--k", "2", "--select", "edges=3", "--out", str(tmp_path / "o")]) == EXIT_INPUT


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "lvggm.cli", "--help"], capture_output=True, text=True,
                          env={**os.environ})
    assert proc.returncode == 0 and "certify" in proc.stdout
