import csv
import json
from pathlib import Path

import pytest

from realsep import cli, search
from realsep.cli import main

EXAMPLES = Path(__file__).resolve().parents[1] / "examples"


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def _value(out, name):
    line = next(l for l in out.splitlines() if l.startswith(name))
    return float(line.split("=")[1].split()[0])


def test_bounds_minus2_witness(capsys, tmp_path):
    js = tmp_path / "rep.json"
    code, out, _ = _run(capsys, "bounds", "--f", str(EXAMPLES / "minus2-3-3.json"), "--level", "2",
                        "--json", str(js))
    assert code == 0
    assert _value(out, "F_c") == 12.0
    assert _value(out, "F_q ") == pytest.approx(14.07, abs=0.005)
    assert _value(out, "F_r") == pytest.approx(13.677, abs=0.02)
    rep = json.loads(js.read_text())
    assert rep["F_c"] == 12.0 and rep["sdp_status"] == "optimal"
    assert rep["F_r"] == pytest.approx(_value(out, "F_r"), abs=1e-9)


def test_bounds_family_with_negative_parameter(capsys):
    code, out, _ = _run(capsys, "bounds", "--family", "-0.577,0.577,0.577")
    assert code == 0
    assert _value(out, "F_q ") == pytest.approx(4.0, abs=1e-9)
    assert _value(out, "F_r") == pytest.approx(3.7367, abs=0.02)
    assert _value(out, "F_c") == pytest.approx(3.464, abs=1e-3)


def test_bounds_rejects_zero_witness(capsys):
    code, _, err = _run(capsys, "bounds", "--f", str(EXAMPLES / "zero.json"))
    assert code == 2
    assert "f must be nonzero" in err


@pytest.mark.parametrize("argv", [
    ["bounds", "--f", "missing.json"],
    ["bounds", "--f", str(EXAMPLES / "minus2-3-3.json"), "--level", "7"],
    ["bounds", "--f", str(EXAMPLES / "minus2-3-3.json"), "--sign", "1,2,1"],
    ["bounds"],
    ["reproduce", "no-such-target"],
])
def test_input_errors_exit_two(capsys, argv):
    assert _run(capsys, *argv)[0] == 2


def test_bounds_solver_failure_exits_three(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"sdp_max_iter": 2}))
    code, out, _ = _run(capsys, "bounds", "--f", str(EXAMPLES / "minus2-3-3.json"),
                        "--config", str(cfg))
    assert code == 3
    assert "F_c" in out


def test_bad_config_key(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"nonsense": 1}))
    code, _, err = _run(capsys, "survey", "--points", "0", "--config", str(cfg),
                        "--out-dir", str(tmp_path))
    assert code == 2 and "unknown config keys" in err


def test_reproduce_single_target(capsys, tmp_path):
    js = tmp_path / "r.json"
    code, out, _ = _run(capsys, "reproduce", "fr-13677", "--json", str(js))
    assert code == 0
    assert out.startswith("PASS  fr-13677")
    assert "gap" in out
    assert json.loads(js.read_text())[0]["passed"] is True


def test_survey_zero_points(capsys, tmp_path):
    code, _, _ = _run(capsys, "survey", "--points", "0", "--out-dir", str(tmp_path))
    assert code == 0
    rows = list(csv.reader((tmp_path / "survey.csv").open()))
    assert rows == [search.SURVEY_COLUMNS]
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert set(man["outputs"]) == {"survey.csv", "survey.json"}
    for entry in man["outputs"].values():
        assert entry["sha256"] == cli.sha256_file(entry["path"])


def test_survey_digests_are_reproducible(capsys, tmp_path):
    digests = []
    for run in ("a", "b"):
        d = tmp_path / run
        assert _run(capsys, "survey", "--points", "2", "--seed", "7", "--threads", "1",
                    "--out-dir", str(d))[0] == 0
        digests.append(json.loads((d / "manifest.json").read_text())["outputs"]["survey.csv"]["sha256"])
    assert digests[0] == digests[1]


def test_scan_small(capsys, tmp_path):
    code, out, _ = _run(capsys, "scan", "--samples", "3", "--seed", "7", "--refine-top", "0",
                        "--out-dir", str(tmp_path))
    assert code == 0
    summary = json.loads((tmp_path / "scan.json").read_text())
    assert summary["samples"] == 3 and summary["config"]["seed"] == 7
    rows = list(csv.reader((tmp_path / "scan.csv").open()))
    assert len(rows) == 4
    assert float(rows[1][2]) == summary["best_ratio"]


def test_threads_environment_default(monkeypatch):
    monkeypatch.setenv(search.THREADS_ENV, "3")
    assert search.default_threads() == 3
    monkeypatch.delenv(search.THREADS_ENV)
    assert search.default_threads() >= 1


def test_manifest_write_is_atomic(tmp_path):
    out = tmp_path / "x.txt"
    out.write_text("data")
    m = cli.RunManifest("test", {"k": 1}, 0)
    m.add_output(out)
    m.write(tmp_path / "manifest.json")
    assert [p.name for p in tmp_path.iterdir() if p.name.startswith(".manifest")] == []
    assert json.loads((tmp_path / "manifest.json").read_text())["outputs"]["x.txt"]["sha256"]
