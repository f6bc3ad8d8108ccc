import json

import pytest

from pseudomarket.cli import EX_USAGE, main

GEN = json.dumps({"n": 12, "m": 2, "cap_min": 20, "cap_max": 20, "n_types": 2})
TIGHT = json.dumps({"n": 24, "m": 2, "cap_min": 3, "cap_max": 6, "n_types": 3})


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_gen_writes_economy(tmp_path):
    out = tmp_path / "e.json"
    assert main(["gen", "--gen", GEN, "--seed", "1", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["n"] == 12


def test_run_twice_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--gen", TIGHT, "--seed", "7", "--out", str(a)]) == 0
    assert main(["run", "--gen", TIGHT, "--seed", "7", "--out", str(b)]) == 0
    assert _files(a) == _files(b)
    header = json.loads((a / "output.json").read_text())
    assert {"version", "seed", "config_hash"} <= set(header)


def test_verify_passing_run(tmp_path, capsys):
    run = tmp_path / "run"
    assert main(["run", "--gen", GEN, "--seed", "3", "--out", str(run)]) == 0
    assert main(["verify", "--out", str(run)]) == 0
    report = json.loads(capsys.readouterr().out.split("\n", 1)[1])
    assert report["status"] == "pass"


def test_verify_detects_tampering(tmp_path):
    run = tmp_path / "run"
    assert main(["run", "--gen", GEN, "--seed", "3", "--out", str(run)]) == 0
    lines = (run / "trace.jsonl").read_text().splitlines()
    last = json.loads(lines[-1])
    last["budget"] = "2"
    lines[-1] = json.dumps(last)
    (run / "trace.jsonl").write_text("\n".join(lines) + "\n")
    assert main(["verify", "--out", str(run)]) == 1


def test_montecarlo_zero_trials_is_usage_error(tmp_path):
    assert main(["montecarlo", "--gen", GEN, "--seed", "1", "--trials", "0", "--out", str(tmp_path)]) == EX_USAGE


def test_montecarlo_writes_report_and_margins(tmp_path):
    assert main(["montecarlo", "--gen", TIGHT, "--seed", "1", "--trials", "3", "--shuffle", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "mc_report.json").read_text())
    assert report["summary"]["trials"] == 3
    assert (tmp_path / "margins.csv").read_text().startswith("trial,k,good,margin")


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["frobnicate"],
        ["run", "--seed", "1"],
        ["run", "--gen", "{not json", "--seed", "1", "--out", "x"],
        ["run", "--gen", GEN, "--eps-b", "3/2", "--seed", "1", "--out", "x"],
        ["round"],
    ],
)
def test_usage_errors(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == EX_USAGE


def test_missing_seed_is_printed(tmp_path, capsys):
    assert main(["gen", "--gen", GEN, "--out", str(tmp_path / "e.json")]) == 0
    assert capsys.readouterr().err.startswith("seed: ")


def test_check_assumptions(capsys):
    assert main(["check-assumptions", "--gen", GEN, "--seed", "1", "--eps-n", "1/2", "--eps-f", "1"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["holds"] is False and doc["actual_min"] == 20


def test_round_stored_equilibrium(tmp_path, capsys):
    run = tmp_path / "run"
    assert main(["run", "--gen", TIGHT, "--seed", "2", "--eps-n", "1", "--eps-f", "1", "--out", str(run)]) == 0
    capsys.readouterr()
    assert main(["round", "--out", str(run)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["excess_norm"] <= doc["bound"]
