import os

import pytest

from amclab import channel as chan
from amclab.cli import main

TINY = [
    "--set", "train.n_train=32", "--set", "train.n_val=16", "--set", "train.batch_size=16",
    "--set", "model.d_model=16", "--set", "model.n_heads=2", "--set", "model.n_layers=1",
    "--set", "eval.velocities=40 100", "--set", "eval.pairs_per_velocity=30",
    "--set", "eval.traces_per_velocity=2", "--set", "eval.trace_ttis=50", "--set", "eval.seeds=0",
]


def read(p):
    with open(p, "rb") as f:
        return f.read()


def test_usage_errors_exit_1(capsys):
    assert main([]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["gen-data", "--count", "2", "--out", "x", "--bogus"]) == 1
    assert main(["gen-data", "--count", "2", "--out", "x", "--set", "nope.key=1"]) == 1


def test_runtime_errors_exit_2(tmp_path):
    assert main(["inspect", str(tmp_path / "missing.amct")]) == 2
    bad = tmp_path / "bad.amct"
    bad.write_bytes(b"XXXX" + bytes(60))
    assert main(["inspect", str(bad)]) == 2
    assert main(["evaluate", "--test-dir", str(tmp_path)] + TINY) == 2


def test_grad_check_tiny(capsys):
    assert main(["grad-check", "--tiny"]) == 0
    out = capsys.readouterr().out
    assert "max_rel_err=" in out and "cases=14" in out
    assert main(["grad-check", "--tiny", "--tol", "1e-12"]) != 0


def test_gen_data_byte_identical_and_inspect(tmp_path, capsys):
    a, b = tmp_path / "a.amct", tmp_path / "b.amct"
    args = ["gen-data", "--kind", "dataset", "--count", "20", "--speed-range", "10:80", "--seed", "3"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert read(a) == read(b)
    header, pairs = chan.read_file(str(a))
    assert len(pairs) == 20 and header.seed == 3
    capsys.readouterr()
    assert main(["inspect", str(a)]) == 0
    out = capsys.readouterr().out
    for field in ("kind", "seed", "speed_range", "config_digest"):
        assert field in out


def test_simulate_and_report_byte_identical(tmp_path, capsys):
    tr = tmp_path / "t.amct"
    assert main(["gen-data", "--kind", "traces", "--velocity", "60", "--ttis", "80", "--count", "2",
                 "--seed", "1", "--out", str(tr)]) == 0
    outs = []
    for name in ("s1.csv", "s2.csv"):
        out = tmp_path / name
        assert main(["simulate", "--trace", str(tr), "--tm", "2", "--td", "3", "--out", str(out)]) == 0
        outs.append(read(out))
    assert outs[0] == outs[1]
    assert outs[0].startswith(b"# config_digest=")
    capsys.readouterr()
    assert main(["simulate", "--trace", str(tr), "--predictor", "genie", "--out", str(tmp_path / "g.csv")]) == 0
    assert "bler" in capsys.readouterr().out


def test_experiment_and_report(tmp_path, capsys):
    assert main(["experiment", "cost-report", "--out", str(tmp_path)] + TINY) == 0
    csv = tmp_path / "cost-report.csv"
    assert csv.exists() and (tmp_path / "cost-report.txt").exists()
    r1, r2, dat = tmp_path / "r1.txt", tmp_path / "r2.txt", tmp_path / "r.dat"
    assert main(["report", str(csv), "--out", str(r1), "--gnuplot", str(dat)]) == 0
    assert main(["report", str(csv), "--out", str(r2)]) == 0
    assert read(r1) == read(r2) and dat.exists()


def test_train_evaluate_round_trip(tmp_path, capsys):
    ck = tmp_path / "m.amck"
    assert main(["train", "--epochs", "1", "--seed", "2", "--out", str(ck)] + TINY) == 0
    loss = (tmp_path / "m.amck.loss.csv").read_text().splitlines()
    assert loss[0].startswith("# config_digest=") and loss[1] == "epoch,train_nmse,val_nmse"
    capsys.readouterr()
    assert main(["inspect", str(ck)]) == 0
    assert "transformer" in capsys.readouterr().out
    out = tmp_path / "eval.csv"
    assert main(["evaluate", "--checkpoint", str(ck), "--out", str(out)] + TINY) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 3 and "nmse_db" in lines[0]
    # mismatched history length is a runtime error
    assert main(["evaluate", "--checkpoint", str(ck), "--set", "timing.L=8"] + TINY) == 2


def test_out_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv("AMCLAB_OUT_DIR", str(tmp_path))
    assert main(["gen-data", "--count", "3", "--out", "rel.amct"]) == 0
    assert os.path.exists(tmp_path / "rel.amct")
