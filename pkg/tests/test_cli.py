import csv
import json

import numpy as np
import pytest

from vitqmc.cli import main, parse_grid
from vitqmc.config import ConfigError
from vitqmc.fssa import write_dataset

from helpers import synthetic_scaling

DESK = ["--set", "optimizer.lr_initial=0.02", "--set", "optimizer.lr_peak=0.2",
        "--set", "optimizer.lr_warmup=20"]
SMALL = ["--set", "sampler.n_chains=64", "--set", "sampler.samples_per_iteration=512"]


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_parse_grid():
    assert parse_grid("-1:1:0.5") == [-1.0, -0.5, 0.0, 0.5, 1.0]
    assert parse_grid("0.5, 2") == [0.5, 2.0]
    with pytest.raises(ConfigError):
        parse_grid("1:2:0")


def test_exact_free_spin(tmp_path, capsys):
    out = tmp_path / "e.json"
    assert main(["exact", "--set", "model.N=1", "--set", "model.J=0.0", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["energy"] == pytest.approx(-1.0)


def test_configuration_errors_exit_2(tmp_path, capsys):
    assert main(["exact", "--set", "model.N=20"]) == 2
    assert main(["train", "--set", "optimizer.momentum=0.9", "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"model": {"N": 4,}}')
    assert main(["exact", "--config", str(bad)]) == 2
    assert "line 1" in capsys.readouterr().err


def test_train_writes_run_directory_and_resumes(tmp_path, capsys):
    run = tmp_path / "run"
    args = ["train", "--out", str(run), "--set", "model.N=10", "--set", "model.J=0.0",
            "--set", "optimizer.max_iter=100", *DESK, *SMALL]
    assert main(args) == 0
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["config"]["ansatz"]["hyperparameters"]["embed_dim"] == 14
    assert manifest["ansatz"]["parameter_count"] > 0 and "conventions" in manifest
    assert len(_rows(run / "energy_trace.csv")) == 100
    assert (run / "acceptance.csv").exists() and (run / "checkpoint" / "params.bin").exists()
    report = tmp_path / "exact.json"
    assert main(["exact", "--set", "model.N=10", "--set", "model.J=0.0", "--checkpoint",
                 str(run / "checkpoint"), "--out", str(report)]) == 0
    assert json.loads(report.read_text())["checkpoint"]["relative_energy_error"] < 1e-3
    assert main(["train", "--resume", str(run), "--set", "optimizer.max_iter=103"]) == 0
    assert [int(r["iteration"]) for r in _rows(run / "energy_trace.csv")][-3:] == [100, 101, 102]
    assert main(["observe", str(run)]) == 0
    assert len(_rows(run / "observables.csv")) == 1


def test_sweep_grid(tmp_path, capsys):
    out = tmp_path / "sweep"
    assert main(["sweep", "--out", str(out), "--J-grid=-1,1", "--alpha-grid=1,3", "--set", "model.N=8",
                 "--set", "optimizer.max_iter=3", "--set", "ansatz.type=\"rbm\"", *SMALL]) == 0
    rows = _rows(out / "sweep.csv")
    assert len(rows) == 4 and {r["q"] for r in rows} == {"0.0", repr(np.pi)}
    assert (out / "sweep_m2.svg").exists()


def test_fssa_command(tmp_path, capsys):
    data = tmp_path / "m2.csv"
    write_dataset(data, synthetic_scaling(seed=5))
    out = tmp_path / "fit"
    assert main(["fssa", str(data), "--out", str(out), "--guess", "1.01", "1.2", "0.1"]) == 0
    fit = json.loads((out / "fit.json").read_text())
    assert fit["J_c"] == pytest.approx(1.0, abs=1e-3)
    assert fit["normalization"] == pytest.approx(3.0347, abs=1e-4)
    assert (out / "collapse.svg").exists() and len(_rows(out / "collapsed.csv")) == 180
    (tmp_path / "bad.csv").write_text("N,J,value,error\n8,oops\n")
    assert main(["fssa", str(tmp_path / "bad.csv"), "--out", str(out), "--guess", "1", "1", "0.1"]) == 2
