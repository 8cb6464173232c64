import json

import pytest

from mcside import cli
from mcside import experiments as ex
from mcside.io import read_matrix

TINY = {"m": 8, "n": 20, "r": 4, "S": 2, "d": 2}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY))
    return path


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_scenario_writes_outputs(tmp_path, config, capsys):
    out = tmp_path / "out"
    code = run("scenario1", "--config", config, "--grid", "0.7", "--trials", "2", "--jobs", "1",
               "--out-dir", out, "--plot")
    assert code == 0
    for name in ("spec.json", "trials.csv", "aggregate.csv", "timing.csv", "nmse.png", "rnmse.png"):
        assert (out / name).exists()
    assert "proposed" in capsys.readouterr().out
    assert run("report", out) == 0


def test_invalid_arguments_exit_one(tmp_path, config):
    with pytest.raises(SystemExit) as info:
        run("scenario1", "--trials", "0")
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        run("scenario1", "--baseline-only", "--proposed-only")
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        run("nope")
    assert info.value.code == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"sweep": "x"}))
    assert run("scenario1", "--config", bad, "--out-dir", tmp_path / "o") == 1
    assert run("scenario1", "--config", tmp_path / "missing.json") == 1
    assert run("scenario2", "--grid", "5", "--config", config, "--out-dir", tmp_path / "o2", "--trials", "1",
               "--jobs", "1", "--baseline-only") == 0


def test_trial_failure_exit_two(tmp_path, config, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("forced")

    monkeypatch.setattr(ex, "complete", boom)
    code = run("scenario1", "--config", config, "--grid", "0.7", "--trials", "1", "--jobs", "1",
               "--out-dir", tmp_path / "f")
    assert code == 2
    assert "forced" in (tmp_path / "f" / "trials.csv").read_text()


def test_generate_then_complete(tmp_path):
    data = tmp_path / "data"
    assert run("generate", "scenario1", "--out-dir", data, "--grid-index", "6") == 0
    manifest = json.loads((data / "manifest.json").read_text())
    assert manifest["p"] == 0.8 and manifest["r"] == 12
    out = tmp_path / "res"
    assert run("complete", "--observed", data / "observed.txt", "--pattern", data / "pattern.txt",
               "--bprime", data / "Bprime.txt", "--rank", "12", "--out-dir", out) == 0
    X = read_matrix(out / "X_hat.txt")
    M = read_matrix(data / "M.txt")
    assert ex.nmse(M, X) < 0.1
    summary = json.loads((out / "summary.json").read_text())
    assert summary["dimensions"]["tangent_dimension"] == 240
    assert run("complete", "--observed", data / "observed.txt", "--pattern", data / "pattern.txt",
               "--rank", "12", "--out-dir", out) == 1
    assert run("generate", "scenario1", "--grid-index", "99", "--out-dir", data) == 1


def test_seed_changes_results(tmp_path, config):
    args = ["scenario1", "--config", config, "--grid", "0.7", "--trials", "1", "--jobs", "1", "--baseline-only"]
    run(*args, "--out-dir", tmp_path / "a", "--seed", "1")
    run(*args, "--out-dir", tmp_path / "b", "--seed", "2")
    assert (tmp_path / "a" / "trials.csv").read_bytes() != (tmp_path / "b" / "trials.csv").read_bytes()
