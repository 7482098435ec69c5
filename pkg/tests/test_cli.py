import json

import pytest

from netdiag.cli import main
from netdiag.report import REPORT_FILES, explain, read_rows


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--rows", "2500", "--seed", "3", "--out", str(out)]) == 0
    return out / "synth.csv"


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory, data):
    out = tmp_path_factory.mktemp("run")
    assert main(["run", "--data", str(data), "--seed", "3", "--out", str(out)]) == 0
    return out


def error_line(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_synth_writes_truth(data):
    assert (data.parent / "synth_truth.csv").exists()
    assert len(read_rows(data)) == 2500


def test_run_writes_report(run_dir):
    for name in REPORT_FILES:
        assert (run_dir / name).exists(), name
    doc = json.loads((run_dir / "report.json").read_text())
    assert doc["rows"]["total"] == 2500
    assert "output_dir" not in doc["config"]
    assert doc["anomaly_count"] == len(read_rows(run_dir / "anomalies.csv"))
    counts = read_rows(run_dir / "cause_counts.csv")
    for source in ("clustering", "diagnosis"):
        assert sum(int(r["count"]) for r in counts if r["source"] == source) == doc["anomaly_count"]
    cm = read_rows(run_dir / "confusion.csv")
    assert [r["true\\predicted"] for r in cm] == ["Bad", "OK", "Good"]


def test_explain(run_dir, capsys):
    row = read_rows(run_dir / "anomalies.csv")[0]
    assert main(["explain", row["row_id"], "--out", str(run_dir)]) == 0
    text = capsys.readouterr().out
    assert f"row {row['row_id']}: true {row['true']}" in text
    assert text.strip().splitlines()[-1].startswith("=> ")
    assert f"diagnosis: {row['diagnosis']}" in text


def test_explain_multiline_rule(run_dir):
    rows = read_rows(run_dir / "anomalies.csv")
    rules = {r["node_id"]: r for r in read_rows(run_dir / "cause_rules.csv")}
    deep = next(r for r in rows if rules[r["cause_node"]]["rule"].count(" and ") >= 1)
    lines = explain(run_dir, int(deep["row_id"])).splitlines()
    assert any(line.startswith("If ") for line in lines)
    assert any(line.startswith("  and ") for line in lines)


def test_explain_unknown_row(run_dir, capsys):
    anomalies = {int(r["row_id"]) for r in read_rows(run_dir / "anomalies.csv")}
    normal = next(i for i in range(2500) if i not in anomalies)
    assert main(["explain", str(normal), "--out", str(run_dir)]) == 5
    assert error_line(capsys) == {"error": "UnknownRow", "exit_code": 5,
                                  "message": f"row {normal} is not an anomaly in {run_dir}"}


def test_sweep_depth(data, tmp_path):
    code = main(["sweep-depth", "--data", str(data), "--depths", "1-3", "--folds", "3",
                 "--repeats", "2", "--svg", "--out", str(tmp_path)])
    assert code == 0
    rows = read_rows(tmp_path / "depth_sweep.csv")
    assert [int(r["depth"]) for r in rows] == [1, 2, 3]
    assert all(int(r["n_scores"]) == 6 for r in rows)
    assert (tmp_path / "depth_sweep.svg").exists()


@pytest.mark.parametrize("depths", ["x-3", "0-2", ""])
def test_sweep_bad_depths(data, tmp_path, capsys, depths):
    assert main(["sweep-depth", "--data", str(data), "--depths", depths, "--out", str(tmp_path)]) == 2
    assert error_line(capsys)["error"] == "InvalidConfig"


def test_config_error_exit_code(tmp_path, data, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("seeed: 1\n")
    assert main(["run", "--config", str(cfg), "--data", str(data), "--out", str(tmp_path)]) == 2
    assert error_line(capsys)["exit_code"] == 2


def test_data_error_exit_codes(tmp_path, capsys):
    assert main(["run", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 3
    assert error_line(capsys)["error"] == "FileNotFound"
    bad = tmp_path / "bad.csv"
    bad.write_text("TDR,Abs_RTT_avg\n1,2\n")
    assert main(["run", "--data", str(bad), "--out", str(tmp_path)]) == 3
    assert error_line(capsys)["error"] == "MissingColumn"
    assert main(["run", "--out", str(tmp_path)]) == 2


def test_pipeline_error_exit_code(tmp_path, capsys):
    assert main(["synth", "--rows", "1500", "--out", str(tmp_path), "--config",
                 str(_write(tmp_path, "synth: {radio_rate: 0.0, tcp_rate: 0.0}\n"))]) == 0
    assert main(["run", "--data", str(tmp_path / "synth.csv"), "--out", str(tmp_path)]) == 4
    err = error_line(capsys)
    assert err["error"] == "SingleClass" and err["message"].startswith("[cause_tree]")


def _write(tmp_path, text):
    path = tmp_path / "cfg.yaml"
    path.write_text(text)
    return path


def test_synth_rows_and_seed(tmp_path):
    assert main(["synth", "--rows", "1000", "--seed", "1", "--out", str(tmp_path / "a")]) == 0
    assert main(["synth", "--rows", "1000", "--seed", "2", "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "synth.csv").read_bytes()
    assert len(a.decode().strip().splitlines()) == 1001
    assert a != (tmp_path / "b" / "synth.csv").read_bytes()


def test_explain_text_matches_rule_file(run_dir):
    rules = {r["node_id"]: r for r in read_rows(run_dir / "cause_rules.csv")}
    for row in read_rows(run_dir / "anomalies.csv")[:25]:
        lines = explain(run_dir, int(row["row_id"])).splitlines()
        rule = rules[row["cause_node"]]
        body = [ln for ln in lines[2:] if ln.startswith(("If ", "  and ", "(all"))]
        assert " and ".join(ln.replace("  and ", "", 1) for ln in body) == rule["rule"]
        assert lines[-1] == f"=> {rule['class']} (probability {rule['probability']}, support {rule['support']})"
