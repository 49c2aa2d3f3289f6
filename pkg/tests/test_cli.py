import json
import subprocess
import sys
from pathlib import Path

import pytest

from bitprob.cli import main

ROOT = Path(__file__).parent.parent
PROGRAMS = ROOT / "programs"


def run(capsys, *args):
    code = main(list(args))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_uniform_json(capsys):
    code, out, _ = run(capsys, "run", str(PROGRAMS / "uniform.hb"), "--bits", "2", "--format", "json")
    assert code == 0
    rec = json.loads(out)
    assert rec["query"] == "pr"
    assert rec["config"] == {"bits": 2, "pieces": 16, "piece_kind": "exponential"}
    assert rec["posterior"] == [{"value": v, "prob": 0.25} for v in (0.0, 0.25, 0.5, 0.75)]
    assert "stats" not in rec


def test_csv_and_out_file(capsys, tmp_path):
    dest = tmp_path / "u.csv"
    code, out, _ = run(capsys, "run", str(PROGRAMS / "uniform.hb"), "--bits", "1",
                       "--format", "csv", "--out", str(dest))
    assert code == 0 and out == ""
    assert dest.read_text().splitlines() == ["value,prob", "0.0,0.5", "0.5,0.5"]
    code, out, _ = run(capsys, "run", str(PROGRAMS / "gene_expression.hb"), "--bits", "5",
                       "--pieces", "4", "--set", "T=2", "--format", "csv")
    lines = out.splitlines()
    assert code == 0 and lines[0] == "expectation" and 0 < float(lines[1]) < 1


def test_zero_evidence_exit(capsys, tmp_path):
    prog = tmp_path / "bad.hb"
    prog.write_text("a = flip(0.5)\nobserve(a)\nobserve(!a)\nreturn pr(a)\n")
    code, _, err = run(capsys, "run", str(prog))
    assert code == 2
    assert "zero evidence" in err


def test_program_errors_exit_one(capsys, tmp_path):
    prog = tmp_path / "bad.hb"
    prog.write_text("a = flip(0.5)\nreturn pr(b)\n")
    code, _, err = run(capsys, "run", str(prog))
    assert code == 1 and "scope error at 2:11" in err and "'b'" in err
    code, _, err = run(capsys, "run", str(tmp_path / "missing.hb"))
    assert code == 1


def test_conjugate_stats_match_flip_accounting(capsys):
    bits, pieces = 16, 64
    code, out, _ = run(capsys, "run", str(PROGRAMS / "conjugate.hb"), "--bits", str(bits),
                       "--pieces", str(pieces), "--stats")
    assert code == 0
    rec = json.loads(out)
    depth = pieces.bit_length() - 1
    # three Gaussians, each a selector tree plus one exponential per piece
    assert rec["stats"]["flips"] == 3 * ((pieces - 1) + pieces * (bits - depth))
    assert set(rec["stats"]) == {"flips", "nodes_formula", "nodes_evidence", "evidence_wmc", "millis"}
    assert rec["stats"]["evidence_wmc"] > 0
    assert abs(rec["expectation"] - 17 / 3) < 1e-3


def test_output_is_deterministic(capsys):
    args = ("run", str(PROGRAMS / "tug_of_war.hb"), "--bits", "5", "--pieces", "4")
    _, a, _ = run(capsys, *args)
    _, b, _ = run(capsys, *args)
    assert a == b


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "bitprob", "run", str(PROGRAMS / "uniform.hb"),
                           "--bits", "1", "--piece-kind", "linear"],
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["config"]["piece_kind"] == "linear"


def test_bad_flags_rejected(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "x.hb", "--format", "xml"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit):
        main(["run", "x.hb", "--set", "T"])
