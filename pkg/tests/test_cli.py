import csv
import subprocess
import sys

import pytest

from resbp.cli import main
from resbp.experiments import BENCH_COLUMNS, TRACE_COLUMNS
from resbp.factor_graph import gen_potts_grid, read_model


def kv(text):
    return dict(line.split("=", 1) for line in text.strip().splitlines())


def test_gen_grid_then_run_all_ones(tmp_path, capsys):
    model = tmp_path / "g.fg"
    assert main(["gen-grid", "--n", "2", "--c", "0", "--seed", "1", "--out", str(model)]) == 0
    assert read_model(model) == gen_potts_grid(2, 0.0, 1)
    capsys.readouterr()
    beliefs = tmp_path / "b.csv"
    assert main(["run", "--model", str(model), "--schedule", "rbp0l",
                 "--beliefs", str(beliefs)]) == 0
    out = kv(capsys.readouterr().out)
    assert out["converged"] == "true"
    assert out["messages_computed"] == "0"
    rows = list(csv.reader(beliefs.open()))
    assert rows[0] == ["variable_id", "state", "probability"]
    assert len(rows) == 1 + 4 * 2


def test_unknown_schedule_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as err:
        main(["run", "--model", "x.fg", "--schedule", "nope"])
    assert err.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_bad_flag_value_is_usage_error(tmp_path):
    model = tmp_path / "g.fg"
    main(["gen-grid", "--n", "2", "--out", str(model)])
    with pytest.raises(SystemExit) as err:
        main(["run", "--model", str(model), "--damping", "1.5"])
    assert err.value.code == 2


def test_missing_and_malformed_model(tmp_path, capsys):
    assert main(["run", "--model", str(tmp_path / "missing.fg")]) == 1
    bad = tmp_path / "bad.fg"
    bad.write_text("FACTORGRAPH 1\n1\n2\n1\n1 0\n1\n")
    assert main(["exact", "--model", str(bad), "--csv", str(tmp_path / "m.csv")]) == 1
    assert "line" in capsys.readouterr().err


def test_bench_writes_rows_and_summary(tmp_path, capsys):
    out = tmp_path / "bench.csv"
    assert main(["bench", "--n", "4", "--c", "2", "--instances", "3", "--seed-base", "5",
                 "--schedules", "rbp0l,rbp1l", "--csv", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert list(rows[0]) == list(BENCH_COLUMNS)
    assert len(rows) == 3 * 2
    assert [r["seed"] for r in rows] == ["5", "5", "6", "6", "7", "7"]
    assert "rbp0l" in capsys.readouterr().out


def test_trace_and_exact(tmp_path, capsys):
    model = tmp_path / "g.fg"
    main(["gen-grid", "--n", "4", "--c", "2", "--seed", "3", "--out", str(model)])
    trace = tmp_path / "t.csv"
    assert main(["trace", "--model", str(model), "--csv", str(trace)]) == 0
    assert trace.read_text().splitlines()[0] == ",".join(TRACE_COLUMNS)
    marg = tmp_path / "m.csv"
    assert main(["exact", "--model", str(model), "--csv", str(marg)]) == 0
    assert "log_z=" in capsys.readouterr().out
    assert len(marg.read_text().splitlines()) == 1 + 16 * 2


def test_trace_divergence_exit_code(tmp_path):
    model = tmp_path / "g.fg"
    main(["gen-grid", "--n", "10", "--c", "5", "--seed", "0", "--out", str(model)])
    assert main(["trace", "--model", str(model), "--max-sweeps", "1",
                 "--csv", str(tmp_path / "t.csv")]) == 3


def test_identical_invocations_give_identical_files(tmp_path):
    paths = []
    for k in range(2):
        model = tmp_path / f"g{k}.fg"
        main(["gen-grid", "--n", "3", "--c", "4", "--seed", "9", "--out", str(model)])
        paths.append(model)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_help_lists_defaults():
    out = subprocess.run([sys.executable, "-m", "resbp", "bench", "--help"],
                         capture_output=True, text=True, check=True).stdout
    for flag in ("--n", "--c", "--instances", "--seed-base", "--schedules", "--tol",
                 "--max-sweeps", "--damping", "--jobs", "--csv"):
        assert flag in out
    assert "default: 0.001" in out and "default: 1000" in out
