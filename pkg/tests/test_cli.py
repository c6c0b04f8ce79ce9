import csv
import io
import json
import subprocess
import sys

import pytest

from cf_certify.cli import EXIT_APPLICABILITY, EXIT_OK, EXIT_USAGE, EXIT_VERIFY, main

CORRUPTED = {
    "label": "corrupted",
    "base": {"kind": "StdNormal", "dof": None},
    "eps": 1.0,
    "eps_order": 1,
    "remainder_const": 1e-9,
    "correction": None,
}


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def parse_csv(text):
    body = [line for line in text.splitlines() if not line.startswith("#")]
    reader = csv.DictReader(io.StringIO("\n".join(body)))
    return [{k: float(v) for k, v in row.items()} for row in reader]


def test_bound_correlation_row(capsys):
    code, out, _ = run(capsys, "bound", "--stat", "corr", "--n", "50", "--alpha", "0.05", "--theorem", "3", "--no-timestamp")
    assert code == EXIT_OK
    (row,) = parse_csv(out)
    assert row["estimate"] == pytest.approx(1.6223784606199354, abs=1e-13)
    assert row["radius"] == pytest.approx(0.009224886604730245, rel=1e-11)
    assert row["u_alpha"] == pytest.approx(1.6448536269514729, abs=1e-12)
    assert row["window_lo"] == pytest.approx(9.7507e-4, rel=1e-4)
    assert row["interval_lo"] <= row["estimate"] <= row["interval_hi"]


def test_bound_small_n_is_usage_error(capsys):
    code, _, err = run(capsys, "bound", "--stat", "corr", "--n", "6", "--alpha", "0.05")
    assert code == EXIT_USAGE
    assert "n >= 7 required" in err


def test_bound_alpha_outside_window(capsys):
    code, _, err = run(capsys, "bound", "--stat", "corr", "--n", "50", "--alpha", "0.0001", "--theorem", "2")
    assert code == EXIT_APPLICABILITY
    assert "0.000975" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["bound", "--stat", "t0sq", "--p", "2", "--q", "3", "--n", "40", "--alpha", "0.05", "--theorem", "1"],
        ["bound", "--stat", "t0sq", "--p", "2", "--q", "3", "--n", "40", "--alpha", "0.05", "--theorem", "3"],
        ["bound", "--stat", "custom", "--alpha", "0.05"],
        ["bound", "--stat", "corr", "--alpha", "0.05"],
        ["bound", "--stat", "corr", "--n", "50", "--alpha", "1.5"],
    ],
)
def test_missing_or_bad_arguments(capsys, argv):
    assert run(capsys, *argv)[0] == EXIT_USAGE


def test_bound_hotelling_all_theorems(capsys):
    common = ["bound", "--stat", "t0sq", "--p", "2", "--q", "3", "--n", "40", "--alpha", "0.05", "--no-timestamp"]
    rows = {}
    for theorem, extra in [("1", ["--c", "5"]), ("2", ["--c-tilde", "5"]), ("3", ["--c-tilde", "5"])]:
        code, out, _ = run(capsys, *common, "--theorem", theorem, *extra)
        assert code == EXIT_OK
        (rows[theorem],) = parse_csv(out)
    # T3 maps the chi-squared quantile back through b, T2 stays on the limit scale
    assert rows["2"]["estimate"] == pytest.approx(12.591587243743977, rel=1e-10)
    assert rows["3"]["estimate"] != rows["2"]["estimate"]
    assert all(r["radius"] > 0 for r in rows.values())


def test_lower_tail_flips_levels(capsys):
    _, upper, _ = run(capsys, "bound", "--stat", "corr", "--n", "50", "--alpha", "0.95", "--no-timestamp")
    _, lower, _ = run(capsys, "bound", "--stat", "corr", "--n", "50", "--alpha", "0.05", "--lower-tail", "--no-timestamp")
    assert parse_csv(upper)[0]["estimate"] == parse_csv(lower)[0]["estimate"]


def test_table_three_rows(capsys):
    code, out, _ = run(capsys, "table", "--stat", "corr", "--n", "50", "--alpha", "0.01", "0.05", "0.10", "--no-timestamp")
    assert code == EXIT_OK
    rows = parse_csv(out)
    assert [r["alpha"] for r in rows] == [0.01, 0.05, 0.10]
    grid = parse_csv(run(capsys, "table", "--stat", "corr", "--n", "50", "--alpha-grid", "0.01", "0.1", "0.045", "--no-timestamp")[1])
    assert [r["alpha"] for r in grid] == [0.01, 0.055, 0.1]


def test_table_empty_alpha_list(capsys):
    assert run(capsys, "table", "--stat", "corr", "--n", "50")[0] == EXIT_USAGE


def test_table_json_document(capsys):
    code, out, _ = run(capsys, "table", "--stat", "corr", "--n", "50", "--alpha", "0.01", "0.05", "--format", "json")
    assert code == EXIT_OK
    doc = json.loads(out)
    assert set(doc) == {"metadata", "columns", "rows"}
    assert "timestamp" in doc["metadata"] and doc["metadata"]["model"]["eps_order"] == 2
    assert [c["name"] for c in doc["columns"]][:2] == ["alpha", "u_alpha"]
    assert len(doc["rows"]) == 2


def test_csv_and_json_agree_exactly(capsys):
    argv = ["table", "--stat", "corr", "--n", "23", "--alpha-grid", "0.01", "0.3", "0.0137", "--no-timestamp"]
    csv_rows = parse_csv(run(capsys, *argv)[1])
    doc = json.loads(run(capsys, *argv, "--format", "json")[1])
    names = [c["name"] for c in doc["columns"]]
    json_rows = [dict(zip(names, r)) for r in doc["rows"]]
    assert csv_rows == json_rows


def test_csv_uses_plain_decimal_format(capsys):
    out = run(capsys, "bound", "--stat", "corr", "--n", "50", "--alpha", "0.05", "--no-timestamp")[1]
    data = [line for line in out.splitlines() if not line.startswith("#")][1]
    assert ";" not in data and " " not in data
    assert all(format(float(v), ".17g") == v for v in data.split(","))


def test_output_is_deterministic(capsys, tmp_path):
    argv = ["table", "--stat", "corr", "--n", "50", "--alpha", "0.01", "0.05", "--no-timestamp"]
    first = run(capsys, *argv)[1]
    assert first == run(capsys, *argv)[1]
    out = tmp_path / "t.csv"
    assert run(capsys, *argv, "--out", str(out))[0] == EXIT_OK
    # identical apart from the echoed command line
    strip = lambda t: [line for line in t.splitlines() if not line.startswith("# command_line")]
    assert strip(out.read_text()) == strip(first)


def test_custom_model_round_trip(capsys, tmp_path):
    path = tmp_path / "m.json"
    path.write_text(json.dumps({**CORRUPTED, "remainder_const": 0.01, "label": "shifted normal"}))
    code, out, _ = run(capsys, "bound", "--stat", "custom", "--model", str(path), "--theorem", "1", "--alpha", "0.05", "--no-timestamp")
    assert code == EXIT_OK
    assert parse_csv(out)[0]["radius"] == pytest.approx(0.1160445868018385, rel=1e-11)


def test_bad_model_file(capsys, tmp_path):
    path = tmp_path / "m.json"
    path.write_text("{not json")
    assert run(capsys, "bound", "--stat", "custom", "--model", str(path), "--alpha", "0.05")[0] == EXIT_USAGE
    assert run(capsys, "bound", "--stat", "custom", "--model", str(tmp_path / "missing.json"), "--alpha", "0.05")[0] == EXIT_USAGE


def test_verify_correlation_inside(capsys, tmp_path):
    dump = tmp_path / "s.bin"
    code, out, err = run(capsys, "verify", "--stat", "corr", "--n", "50", "--alpha", "0.05", "--samples", "1000000", "--seed", "1", "--dump", str(dump), "--no-timestamp")
    assert code == EXIT_OK
    report = json.loads(out)
    (v,) = report["verdicts"]
    assert v["inside"] is True
    assert "inside" in err
    assert dump.stat().st_size == 32 + 8 * 10**6


def test_verify_exact_gap(capsys):
    code, out, _ = run(capsys, "verify", "--stat", "corr", "--n", "20", "--alpha", "0.05", "--samples", "100000", "--exact", "--no-timestamp")
    assert code == EXIT_OK
    exact = json.loads(out)["exact"]
    assert exact["bound"] == pytest.approx(2.2 / 17.5**2, rel=1e-14)
    assert 0 < exact["gap"] <= exact["bound"] and exact["ok"]


def test_verify_corrupted_model_fails(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(CORRUPTED))
    code, out, err = run(capsys, "verify", "--stat", "corr", "--n", "50", "--model", str(path), "--theorem", "1", "--alpha", "0.01", "0.05", "--samples", "1000000", "--no-timestamp")
    assert code == EXIT_VERIFY
    assert all(not v["inside"] for v in json.loads(out)["verdicts"])
    assert "OUTSIDE" in err


def test_verify_is_reproducible(capsys):
    argv = ["verify", "--stat", "t0sq", "--p", "2", "--q", "3", "--n", "40", "--c-tilde", "5", "--alpha", "0.05", "--samples", "20000", "--seed", "3", "--streams", "3", "--no-timestamp"]
    first = run(capsys, *argv)
    assert first[0] == EXIT_OK
    assert first[1] == run(capsys, *argv)[1]


def test_verify_custom_is_usage_error(capsys, tmp_path):
    path = tmp_path / "m.json"
    path.write_text(json.dumps(CORRUPTED))
    assert run(capsys, "verify", "--stat", "custom", "--model", str(path), "--alpha", "0.05")[0] == EXIT_USAGE


def test_transform_forward_and_inverse(capsys):
    code, out, _ = run(capsys, "transform", "--stat", "corr", "--n", "50", "--values", "1", "--no-timestamp")
    assert code == EXIT_OK
    assert parse_csv(out)[0]["forward"] == pytest.approx(1.0052632, abs=1e-7)
    out = run(capsys, "transform", "--stat", "corr", "--n", "50", "--direction", "inverse", "--values", "0", "--no-timestamp")[1]
    assert parse_csv(out)[0]["inverse"] == 0.0


def test_transform_check_column(capsys):
    out = run(capsys, "transform", "--stat", "corr", "--n", "50", "--values", "-5", "-1", "0", "2.5", "5", "--check", "--no-timestamp")[1]
    rows = parse_csv(out)
    assert len(rows) == 5 and all(r["roundtrip_error"] <= 1e-10 for r in rows)


def test_transform_hotelling_domain(capsys):
    argv = ["transform", "--stat", "t0sq", "--p", "2", "--q", "3", "--n", "40", "--direction", "inverse"]
    assert run(capsys, *argv, "--values", "5")[0] == EXIT_OK
    assert run(capsys, *argv, "--values", "-100")[0] == EXIT_APPLICABILITY


def test_console_script_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "cf_certify.cli", "bound", "--stat", "corr", "--n", "50", "--alpha", "0.05", "--no-timestamp"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert parse_csv(proc.stdout)[0]["estimate"] == pytest.approx(1.6223784606199354, abs=1e-13)
    usage = subprocess.run([sys.executable, "-m", "cf_certify.cli", "bound"], capture_output=True, text=True)
    assert usage.returncode == 2
