import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from scatterlab.cli import EXIT_INVALID, EXIT_OK, EXIT_UNSTABLE, run

BARRIER = json.dumps({"kind": "square_barrier", "params": {"h": 1, "a": 0, "b": 1}})
ZERO = json.dumps({"kind": "zero"})
DECAY = json.dumps({"kind": "power_decay", "params": {"c": 1.0, "alpha": 0.6}})


@pytest.fixture
def spec_file(tmp_path):
    p = tmp_path / "barrier.json"
    p.write_text(BARRIER)
    return str(p)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_waveop_example(spec_file, tmp_path):
    out = tmp_path / "w.csv"
    assert run(["waveop", "--spec", spec_file, "--band", "0.8", "1.2", "--schedule", "geometric:5:8", "--out", str(out)]) == EXIT_OK
    rows = read_csv(out)
    assert len(rows) == 8
    assert list(rows[0]) == ["t", "cauchy_increment", "dist_to_limit", "norm_defect", "config_hash", "tol"]
    d = [float(r["dist_to_limit"]) for r in rows]
    assert d[-1] < d[0]


def test_scatter_zero_whole_line(tmp_path):
    out = tmp_path / "s.csv"
    assert run(["scatter", "--spec", ZERO, "--lambda", "2.0", "--geometry", "whole", "--out", str(out)]) == EXIT_OK
    (row,) = read_csv(out)
    assert float(row["Re t1"]) == 1.0 and float(row["Im t1"]) == 0.0
    assert float(row["Re r1"]) == 0.0 and float(row["Im r1"]) == 0.0


def test_multilinear_json_report(tmp_path):
    out = tmp_path / "m.json"
    assert run(["multilinear-check", "--n", "3", "--corpus", "seed:7", "--samples", "10", "--format", "json", "--out", str(out)]) == EXIT_OK
    payload = json.loads(out.read_text())
    assert payload["config_hash"] and payload["tol"] == 1e-10
    recs = payload["records"]
    assert len(recs) == 20 and {r["star"] for r in recs} == {True, False}
    assert all(r["lhs"] <= r["rhs"] for r in recs)
    assert len({r["corpus_id"] for r in recs}) == 1


@pytest.mark.parametrize("argv", [
    ["scatter", "--lambda", "1.0"],                        # no spec
    ["scatter", "--spec", "{not json", "--lambda", "1"],    # malformed
    ["scatter", "--spec", "/nonexistent.json", "--lambda", "1"],
    ["scatter", "--spec", '{"kind": "bogus"}', "--lambda", "1"],
    ["norms", "--spec", ZERO, "--frobnicate"],              # unknown flag
    ["teleport"],                                           # unknown subcommand
    ["waveop", "--spec", BARRIER, "--band", "0.8", "1.2", "--schedule", "linear:1:2"],
    ["multilinear-check", "--corpus", "file:x"],
])
def test_validation_errors_exit_2(argv, capsys):
    assert run(argv) == EXIT_INVALID


def test_strict_flags_instability():
    argv = ["waveop", "--spec", DECAY, "--band", "0.8", "1.2", "--schedule", "geometric:5:3", "--unmodified"]
    assert run(argv) == EXIT_OK
    assert run(argv + ["--strict"]) == EXIT_UNSTABLE


def test_every_table_carries_hash_and_tol(tmp_path):
    cases = [
        ["norms", "--spec", BARRIER],
        ["mfun", "--spec", ZERO, "--E", "1.0", "--eps", "0.01"],
        ["eigen", "--spec", BARRIER, "--z", "2+0.1i", "--x-max", "2", "--dx", "0.5"],
        ["spectral-table", "--spec", BARRIER, "--n", "3"],
        ["scatter", "--spec", BARRIER, "--lambda", "1.0", "1.5"],
        ["dirac", "--spec", BARRIER, "--mode", "scatter", "--E", "1.0", "2.0"],
        ["dirac", "--spec", BARRIER, "--mode", "ivp", "--X", "2"],
        ["evolve", "--spec", BARRIER, "--t", "0.5", "--x-max", "20", "--dx", "0.1"],
    ]
    for k, argv in enumerate(cases):
        out = tmp_path / f"{k}.csv"
        assert run(argv + ["--tol", "1e-8", "--out", str(out)]) == EXIT_OK, argv
        rows = read_csv(out)
        assert rows and all(r["tol"] == "1e-08" and len(r["config_hash"]) == 12 for r in rows)


def test_mfun_free_closed_form(tmp_path):
    out = tmp_path / "m.csv"
    run(["mfun", "--spec", ZERO, "--E", "2.0", "--out", str(out)])
    last = read_csv(out)[-1]
    assert float(last["eps"]) == 0.0 and last["stable_flag"] == "1"
    assert complex(float(last["Re m"]), float(last["Im m"])) == pytest.approx(1j * np.sqrt(2), rel=1e-8)


def test_bit_identical_reruns(tmp_path):
    spec = json.dumps({"kind": "random_decaying", "params": {"g_power": 0.7, "n_cells": 20}})
    argv = lambda seed: ["scatter", "--spec", spec, "--seed", seed, "--lambda", "1.0", "2.0", "--geometry", "whole"]
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    assert run(argv("3") + ["--out", str(a)]) == EXIT_OK
    assert run(argv("3") + ["--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    assert run(argv("4") + ["--out", str(c)]) == EXIT_OK
    assert a.read_bytes() != c.read_bytes()


def test_json_and_csv_agree(tmp_path):
    base = ["norms", "--spec", BARRIER]
    run(base + ["--out", str(tmp_path / "n.csv")])
    run(base + ["--format", "json", "--out", str(tmp_path / "n.json")])
    rows = read_csv(tmp_path / "n.csv")
    recs = json.loads((tmp_path / "n.json").read_text())["records"]
    assert [float(r["lp"]) for r in rows] == [r["lp"] for r in recs]


def test_no_partial_file_on_failure(tmp_path):
    out = tmp_path / "x.csv"
    assert run(["scatter", "--spec", "{bad", "--lambda", "1", "--out", str(out)]) == EXIT_INVALID
    assert not out.exists() and not list(tmp_path.iterdir())


def test_module_entry_point_and_pipe():
    # closing the read end early must not produce a traceback
    p = subprocess.run(f"{sys.executable} -m scatterlab eigen --spec '{BARRIER}' --z 2+0.1i --x-max 200 --dx 0.01 | head -1",
                       shell=True, capture_output=True, text=True)
    assert p.stdout.startswith("x,Re u,Im u")
    assert "Traceback" not in p.stderr
