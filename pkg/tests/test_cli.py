import csv
import io
import json
import subprocess
import sys

import pytest

from reactordb.cli import main


def bench(tmp_path, *extra):
    prof = tmp_path / "p.jsonl"
    trace = tmp_path / "t.txt"
    out = tmp_path / "e.csv"
    argv = ["bench", "--benchmark", "smallbank", "--scale-factor", "2", "--strategy", "s3", "--executors", "2",
            "--formulation", "fully-sync", "--txn-size", "2", "--txns-per-worker", "30", "--epochs", "2",
            "--profile-out", str(prof), "--trace", str(trace), "--out", str(out), *extra]
    return main(argv), prof, trace, out


def test_bench_check_trace_and_cost_pipeline(tmp_path, capsys):
    rc, prof, trace, out = bench(tmp_path)
    assert rc == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["committed"] > 0 and summary["checks"] == {"smallbank_conservation": True}
    assert set(summary["breakdown_us"]) >= {"sync_execution", "c_s_total", "c_r_total"}
    assert len(list(csv.reader(open(out)))) == 3

    assert main(["check-trace", str(trace)]) == 0
    text = capsys.readouterr().out
    assert "reactor model: serializable" in text and "classic projection: serializable" in text

    cal = tmp_path / "cal.json"
    assert main(["cost", "calibrate", "--profiles", str(prof), "--out", str(cal)]) == 0
    capsys.readouterr()
    assert main(["cost", "estimate", "--calibration", str(cal), "--sizes", "1-3", "--formulation", "opt",
                 "--containers", "2"]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0] == ["formulation", "size", "predicted_us"]
    assert [r[1] for r in rows[1:]] == ["1", "2", "3"]
    assert all(float(r[2]) > 0 for r in rows[1:])

    assert main(["cost", "decompose", "--profiles", str(prof)]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0][0] == "txn_id" and rows[0][-1] == "total" and len(rows) > 1


def test_bench_with_plan_file(tmp_path, capsys):
    plan = {"strategy_label": "custom", "router": "round_robin",
            "containers": [{"id": 0, "executors": [{"id": 0}, {"id": 1}]}],
            "reactor_map": [{"range": {"prefix": "wh", "start": 0, "stop": 1}, "container": 0}]}
    p = tmp_path / "plan.json"
    p.write_text(json.dumps(plan))
    rc = main(["bench", "--benchmark", "noop", "--config", str(p), "--epochs", "2", "--epoch-ms", "20"])
    assert rc == 0
    assert json.loads(capsys.readouterr().out)["plan"] == "custom"


def test_check_trace_flags_cycle(tmp_path, capsys):
    t = tmp_path / "bad.txt"
    t.write_text("1 1 0 a kv x w\n2 2 0 b kv y w\n3 1 1 b kv y r\n4 2 1 a kv x w\n5 1 c\n6 2 c\n")
    assert main(["check-trace", str(t)]) == 1
    assert "NOT serializable" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["check-trace", "/nonexistent/trace"],
    ["bench", "--config", "{not json"],
    ["bench", "--benchmark", "smallbank", "--formulation", "lazy"],
    ["cost", "calibrate", "--profiles", "/nonexistent/p"],
])
def test_bad_input_exits_two(argv, capsys):
    assert main(argv) == 2
    assert "reactordb: error:" in capsys.readouterr().err


def test_argparse_rejects_bad_delay():
    with pytest.raises(SystemExit) as err:
        main(["bench", "--delay-us", "5:1"])
    assert err.value.code == 2


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "reactordb.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "check-trace" in r.stdout
