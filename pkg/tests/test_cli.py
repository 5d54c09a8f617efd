import csv
import json
import math

import numpy as np
import pytest

from mcbell import cli
from mcbell.correlations import MultiCopyDistribution
from conftest import DATA


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_chshn_table(capsys, tmp_path):
    path = tmp_path / "t.csv"
    code, out, _ = run(capsys, "chshn", "--table", "1..3,100", "--csv", str(path))
    assert code == 0
    assert "0.8284" in out and "0.0094" in out
    rows = list(csv.DictReader(path.open()))
    assert [int(r["n"]) for r in rows] == [1, 2, 3, 100]
    assert float(rows[0]["eta_asym"]) == pytest.approx(1 / math.sqrt(2))


def test_threshold_on_fixture(capsys):
    code, out, _ = run(capsys, "threshold", "--functional", str(DATA / "csym_n2.txt"), "--n", "2")
    doc = json.loads(out)
    assert code == 0 and doc["L"] == 0 and doc["L_provenance"] == "exact"
    assert doc["eta"] == pytest.approx((28 * math.sqrt(2) - 21) / 23, abs=1e-12)
    assert doc["run"]["seed"] == 0


def test_distribution_roundtrip(capsys, tmp_path):
    path = tmp_path / "d.json"
    assert run(capsys, "distribution", "--n", "2", "--out", str(path))[0] == 0
    dist = MultiCopyDistribution.from_json(json.loads(path.read_text()))
    assert dist.n == 2 and np.allclose(dist.table.sum(axis=(0, 1)), 1)


def test_deflated_distribution(capsys):
    code, out, _ = run(capsys, "distribution", "--n", "1", "--eta", "0.5")
    doc = json.loads(out)
    assert code == 0 and doc["o"] == 2 and len(doc["entries"]) == 16


def test_local_bound(capsys):
    code, out, _ = run(capsys, "local-bound", "--chshn", "2")
    assert code == 0 and json.loads(out)["L"] == 10


def test_lp_separate_at_eta(capsys, tmp_path):
    path = tmp_path / "f.txt"
    code, out, _ = run(capsys, "lp-separate", "--n", "1", "--eta", "0.9", "--functional-out", str(path))
    doc = json.loads(out)
    assert code == 0 and doc["lp"]["objective"] > 0
    assert doc["profile"]["eta_sym"] == pytest.approx(2 * (math.sqrt(2) - 1), abs=1e-9)
    assert path.exists()


def test_gilbert_small(capsys, tmp_path):
    log = tmp_path / "log.json"
    code, out, _ = run(capsys, "gilbert", "--n", "1", "--eta", "0.9", "--oracle", "exact", "--out", str(log))
    assert code == 0 and "[C]" in out
    doc = json.loads(log.read_text())
    assert doc["separated"] and doc["profile"]["eta_sym"] < 0.9


def test_reproduce_chsh(capsys, tmp_path):
    code, out, _ = run(capsys, "reproduce", "chsh", "--out-dir", str(tmp_path))
    assert code == 0 and out.count("PASS") == 2
    assert (tmp_path / "chsh.json").exists() and (tmp_path / "chsh.txt").exists()


def test_usage_errors(capsys, tmp_path):
    assert run(capsys, "distribution", "--n", "9")[0] == cli.EXIT_USAGE
    assert run(capsys, "local-bound")[0] == cli.EXIT_USAGE
    bad = tmp_path / "bad.txt"
    bad.write_text("m 2\no 2\n[C]\n1 2\n")
    code, _, err = run(capsys, "threshold", "--functional", str(bad), "--n", "1")
    assert code == cli.EXIT_USAGE and "line" in err
    assert run(capsys, "threshold", "--functional", str(tmp_path / "missing.txt"), "--n", "1")[0] == cli.EXIT_USAGE
    # a two-copy functional against a single-copy behavior
    assert run(capsys, "threshold", "--functional", str(DATA / "csym_n2.txt"), "--n", "1")[0] == cli.EXIT_USAGE
    with pytest.raises(SystemExit):
        cli.main(["nope"])


def test_invariant_exit(capsys, monkeypatch):
    def broken(*a, **k):
        raise AssertionError("weights are not a probability vector")

    monkeypatch.setattr(cli, "gilbert_distance", broken)
    code, _, err = run(capsys, "gilbert", "--n", "1", "--eta", "0.9")
    assert code == cli.EXIT_INVARIANT and "invariant" in err


def test_miss_exit(capsys, monkeypatch):
    monkeypatch.setattr(cli, "reproduce", lambda *a, **k: {
        "ok": False, "checks": [{"name": "x", "value": 1, "expected": "0", "kind": "eq", "tol": 0, "pass": False}]})
    code, out, err = run(capsys, "reproduce", "chsh")
    assert code == cli.EXIT_MISS and "FAIL" in out and "misses" in err
