import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from vdmlab.cli import main
from vdmlab.config import ConfigError, load_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _rows(path):
    lines = Path(path).read_text().splitlines()
    return lines[0].split(","), [l.split(",") for l in lines[1:]]


def test_vdm_plot(tmp_path):
    assert main(["vdm-plot", "--spec", "le:1,0.99", "--from", "0", "--to", "5", "--n", "501", "--out", str(tmp_path)]) == 0
    header, rows = _rows(tmp_path / "vdm_curve.csv")
    assert header == ["loss", "delta", "ddelta_dloss"]
    assert len(rows) == 501
    assert float(rows[0][0]) == 0.0 and float(rows[0][2]) == pytest.approx(100.0, rel=1e-12)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["subcommand"] == "vdm-plot"
    assert manifest["outputs"] == ["vdm_curve.csv"]
    assert manifest["config"]["spec"] == "le:1.0,0.99"
    assert {"seed", "version", "duration_s"} <= set(manifest)


def test_vdm_plot_ap(tmp_path):
    assert main(["vdm-plot", "--spec", "ap:10,1,1,1", "--out", str(tmp_path)]) == 0
    _, rows = _rows(tmp_path / "vdm_curve.csv")
    assert float(rows[0][2]) == 11.0


def test_vdm_plot_domain_error_exit_3(tmp_path, capsys):
    assert main(["vdm-plot", "--spec", "le:1,1.9", "--from", "0", "--out", str(tmp_path)]) == 3
    assert "got loss 0.0" in capsys.readouterr().err


def test_parse_error_exit_2_names_token(tmp_path, capsys):
    assert main(["vdm-plot", "--spec", "le:1,zz", "--out", str(tmp_path)]) == 2
    assert "'zz'" in capsys.readouterr().err


def test_usage_errors_exit_2(tmp_path):
    assert main([]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--variant", "nope"])
    assert exc.value.code == 2
    assert main(["scan", "--out", str(tmp_path)]) == 2


def test_io_error_exit_5(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["vdm-plot", "--spec", "identity", "--out", str(blocker)]) == 5
    assert main(["scan", "--weights", str(tmp_path / "missing.bin"), "--out", str(tmp_path / "o")]) == 5


def test_env_var_sets_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("VDMLAB_OUT", str(tmp_path / "env"))
    assert main(["vdm-plot", "--spec", "identity", "--n", "3"]) == 0
    assert (tmp_path / "env" / "vdm_curve.csv").exists()
    # an explicit flag wins
    assert main(["vdm-plot", "--spec", "identity", "--n", "3", "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "vdm_curve.csv").exists()


def test_simulate_fig1(tmp_path):
    assert main(["simulate", "--variant", "fig1", "--out", str(tmp_path)]) == 0
    for name in ("original.csv", "deformed.csv"):
        header, rows = _rows(tmp_path / name)
        assert header[:3] == ["step", "p1", "p2"]
        assert len(rows) == 401
    ends = json.loads((tmp_path / "endpoints.json").read_text())
    assert ends["deformed"]["lambda_max"] < ends["original"]["lambda_max"]


def test_simulate_identity_twins(tmp_path):
    assert main(["simulate", "--variant", "fig1", "--vdm", "identity", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "original.csv").read_bytes() == (tmp_path / "deformed.csv").read_bytes()


def test_simulate_overrides_recorded(tmp_path):
    args = ["simulate", "--variant", "complex", "--lr", "0.01", "--steps", "5", "--p0", "1,2", "--out", str(tmp_path)]
    assert main(args) == 0
    cfg = json.loads((tmp_path / "manifest.json").read_text())["config"]
    assert cfg == {"variant": "complex", "vdm": "le:1.0,0.9", "lr": 0.01, "steps": 5, "p0": [1.0, 2.0]}
    _, rows = _rows(tmp_path / "original.csv")
    assert len(rows) == 6


def test_train_smoke_config(tmp_path):
    assert main(["train", "--config", str(CONFIGS / "smoke.cfg"), "--out", str(tmp_path)]) == 0
    header, rows = _rows(tmp_path / "train_log.csv")
    assert header == ["epoch", "batch_loss_mean", "deformed_loss_mean", "ddelta_mean", "train_acc", "test_acc", "lr"]
    assert float(rows[0][1]) == math.log(2)
    assert (tmp_path / "weights.bin").read_bytes()[:4] == b"VDMW"


def test_train_flag_overrides(tmp_path):
    args = ["train", "--config", str(CONFIGS / "smoke.cfg"), "--vdm", "le:1,0.9", "--epochs", "1", "--seed", "4", "--out", str(tmp_path)]
    assert main(args) == 0
    cfg = json.loads((tmp_path / "manifest.json").read_text())["config"]
    assert cfg["train"]["vdm"] == "le:1.0,0.9" and cfg["train"]["epochs"] == 1 and cfg["train"]["seed"] == 4
    _, rows = _rows(tmp_path / "train_log.csv")
    assert len(rows) == 2


def test_train_domain_error_exit_3(tmp_path):
    args = ["train", "--config", str(CONFIGS / "smoke.cfg"), "--vdm", "le:1,5", "--out", str(tmp_path)]
    assert main(args) == 3
    assert json.loads((tmp_path / "train_status.json").read_text())["status"] == "domain_error"


def test_scan_after_train(tmp_path):
    cfg = str(CONFIGS / "smoke.cfg")
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "t")]) == 0
    # zero init: only output biases move, so most groups have zero norm and are flagged
    with pytest.warns(UserWarning, match="zero-norm"):
        code = main(["scan", "--weights", str(tmp_path / "t" / "weights.bin"), "--config", cfg, "--n", "5", "--out", str(tmp_path / "s")])
    assert code == 0
    header, rows = _rows(tmp_path / "s" / "scan.csv")
    assert header == ["alpha", "loss"] and len(rows) == 5


def test_scan_surface(tmp_path):
    assert main(["scan", "--surface", "eig-round", "--point", "0.3,-0.7", "--n", "7", "--out", str(tmp_path)]) == 0
    _, rows = _rows(tmp_path / "scan.csv")
    assert float(rows[3][0]) == 0.0


def test_check_theorem2(tmp_path, capsys):
    assert main(["check", "--suite", "theorem2", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("PASS  theorem2-bound")
    reports = json.loads((tmp_path / "check_theorem2.json").read_text())
    assert len(reports) >= 20
    assert all({"check", "point", "lhs", "rhs", "residual", "pass"} <= set(r) for r in reports)


def test_check_failure_exit_4(tmp_path, monkeypatch):
    from vdmlab import checks

    monkeypatch.setitem(checks.SUITES, "gradcheck", (lambda: checks.CheckResult("forced", False, "broken"),))
    assert main(["check", "--suite", "gradcheck", "--out", str(tmp_path)]) == 4


def test_sweep(tmp_path):
    assert main(["sweep", "--n-inits", "2", "--multipliers", "2", "--vdms", "scale:2", "--out", str(tmp_path)]) == 0
    _, rows = _rows(tmp_path / "sweep.csv")
    assert len(rows) == 4
    assert rows[0][5:8] == rows[1][5:8]


def test_manifest_replay(tmp_path):
    assert main(["montecarlo", "--n", "3", "--seed", "11", "--vdm", "ap:10,1,1,1", "--out", str(tmp_path / "a")]) == 0
    assert main(["--from-manifest", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "b")]) == 0
    for name in ("montecarlo.csv", "montecarlo.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_config_parsing():
    cfg = load_config(text="[train]\nmilestones = 3, 5\nlr = 0.5\n[model]\nwidths = 2,4,4,3\n")
    assert cfg["train"]["milestones"] == [3, 5] and cfg["train"]["lr"] == 0.5
    assert cfg["model"]["widths"] == [2, 4, 4, 3]
    assert cfg["data"]["generator"] == "two-gaussians"
    with pytest.raises(ConfigError):
        load_config(text="[train]\nlearning_rate = 1\n")
    with pytest.raises(ConfigError):
        load_config(text="[optimizer]\nlr = 1\n")
    with pytest.raises(ConfigError):
        load_config(text="[train]\nepochs = ten\n")


def test_bad_config_exit_2(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[train]\nbogus = 1\n")
    assert main(["train", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "vdmlab", "vdm-plot", "--spec", "halfsq", "--n", "3", "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "vdm_curve.csv").read_text().splitlines()[1:] == ["0.0,0.0,0.0", "2.5,3.125,2.5", "5.0,12.5,5.0"]
