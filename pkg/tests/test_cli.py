import json
import subprocess
import sys

import pytest

from sleepmis.cli import main, parse_overrides, UsageError
from sleepmis.harness import Cell, SweepSpec, run_cell, run_sweep
from sleepmis.graph import ParameterError
from sleepmis.records import REPORT_FIELDS


def test_run_example(capsys):
    code = main(["run", "--alg", "1", "--model", "gnp", "--n", "1024", "--avg-deg", "16",
                 "--seed", "1"])
    rec = json.loads(capsys.readouterr().out)
    assert code == 0 and rec["independent"] and rec["n"] == 1024 and rec["alg"] == "alg1"


def test_run_alg2_avg_energy_to_file(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("SLEEPMIS_OUT_DIR", str(tmp_path))
    code = main(["run", "--alg", "2", "--avg-energy", "--n", "500", "--avg-deg", "6",
                 "--out", "r.jsonl"])
    assert code == 0
    lines = (tmp_path / "r.jsonl").read_text().splitlines()
    assert len(lines) == 1 and json.loads(lines[0])["alg"] == "alg2+avg"


def test_verify_schedules(capsys):
    assert main(["verify", "--schedules", "--max-t", "4096"]) == 0
    assert json.loads(capsys.readouterr().out)["failed"] == []


def test_verify_small_graphs(capsys):
    assert main(["verify", "--small-graphs", "--max-n", "3", "--seeds", "1"]) == 0


def test_report_empty(capsys):
    assert main(["report"]) == 0
    assert capsys.readouterr().out == ",".join(REPORT_FIELDS) + "\n"


def test_report_over_run_output(tmp_path, capsys):
    p = tmp_path / "r.jsonl"
    for s in range(2):
        main(["run", "--n", "300", "--avg-deg", "4", "--seed", str(s), "--out", str(p)])
    capsys.readouterr()
    assert main(["report", str(p), "--out", str(tmp_path / "rep.csv")]) == 0
    rows = (tmp_path / "rep.csv").read_text().splitlines()
    assert len(rows) == 2 and rows[1].split(",")[3] == "2"


@pytest.mark.parametrize("argv", [
    ["run", "--bogus"],
    ["frobnicate"],
    ["run", "--alg", "3", "--n", "10"],
    ["run"],
    ["run", "--n", "10", "--set", "nope=1"],
    ["run", "--n", "10", "--set", "c=abc"],
    ["verify"],
    ["report", "/no/such/file.jsonl"],
    ["generate", "--model", "gnp", "--n", "10"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2


def test_config_file_and_set(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("# desk tweaks\nc = 3\nC_deg=5\n")
    code = main(["run", "--n", "200", "--avg-deg", "4", "--config", str(cfg), "--set", "c=4"])
    rec = json.loads(capsys.readouterr().out)
    assert code == 0 and rec["config"]["c"] == 4 and rec["config"]["C_deg"] == 5


def test_parse_overrides_types():
    assert parse_overrides(["c=3", "cap_factor=1.5"]) == {"c": 3, "cap_factor": 1.5}
    with pytest.raises(UsageError):
        parse_overrides(["c"])


def test_generate_roundtrip(tmp_path, capsys):
    out = tmp_path / "g.txt"
    assert main(["generate", "--model", "random_regular", "--n", "50", "--d", "4",
                 "--out", str(out)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["m"] == 100
    assert main(["run", "--graph", str(out)]) == 0


def test_sweep(tmp_path, capsys):
    out = tmp_path / "s.jsonl"
    code = main(["sweep", "--ns", "256", "512", "--seeds", "2", "--alg", "1", "2",
                 "--avg-deg", "6", "--out", str(out)])
    assert code == 0
    recs = [json.loads(l) for l in out.read_text().splitlines()]
    assert len(recs) == 8 and {r["graph"]["seed"] for r in recs} == {0, 1}


def test_console_script_entry():
    r = subprocess.run([sys.executable, "-m", "sleepmis.cli", "verify", "--schedules",
                        "--max-t", "64"], capture_output=True, text=True)
    assert r.returncode == 0


def test_sweep_spec_validation():
    with pytest.raises(ParameterError):
        SweepSpec(ns=[64], seeds=0)
    with pytest.raises(ParameterError):
        SweepSpec(ns=[])
    with pytest.raises(ParameterError):
        SweepSpec(ns=[64], algs=["7"])


def test_sweep_cells_and_same_graph():
    spec = SweepSpec(ns=[64, 128], seeds=3, algs=["1", "2"], same_graph=True)
    cells = list(spec.cells())
    assert len(cells) == 12 and {c.graph_seed for c in cells} == {0}


def test_sweep_parallel_matches_serial():
    spec = SweepSpec(ns=[200, 400], seeds=2, params={"avg_degree": 5})
    a = [r.to_json(with_clock=False) for r in run_sweep(spec, 1)]
    b = [r.to_json(with_clock=False) for r in run_sweep(spec, 2)]
    assert a == b


def test_run_cell_replay():
    c = Cell("2", "gnp", (("avg_degree", 6), ("n", 300)), 4, 9)
    assert run_cell(c).to_json(with_clock=False) == run_cell(c).to_json(with_clock=False)
