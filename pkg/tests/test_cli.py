import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from nancova import ParseError, TestReport
from nancova.cli import EXIT_DATA, EXIT_DEGENERATE, EXIT_OK, EXIT_USAGE, format_report, main, read_csv_dataset, run_test

DATA = Path(__file__).parent / "data" / "worked_example.csv"
WORKED = ["--data", str(DATA), "--group", "treatment", "--outcome", "change", "--covariates", "baseline"]


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def run_json(tmp_path, *extra):
    out = tmp_path / "report.json"
    assert main(["test", *WORKED, "--out", str(out), *extra]) == EXIT_OK
    return json.loads(out.read_text())


class TestCommandTest:
    @pytest.mark.parametrize("method", ["fa1", "ca", "fa2", "eb", "wild"])
    def test_round_trip(self, tmp_path, method):
        doc = run_json(tmp_path, "--method", method, "--boot", "300", "--seed", "4")
        rep = TestReport.from_dict(doc)
        data = read_csv_dataset(DATA, "treatment", "change", ["baseline"])
        fresh = run_test(data, method, n_boot=300, seed=4)
        fresh.config.update(doc["config"])
        assert rep == fresh
        assert doc["config"]["method"] == method and doc["config"]["data"] == str(DATA)
        if method in ("eb", "wild"):
            assert doc["config"]["seed"] == 4 and doc["n_boot"] == 300

    def test_worked_example_summary(self, capsys):
        assert main(["test", *WORKED, "--method", "ca", "--format", "text"]) == EXIT_OK
        text = capsys.readouterr().out
        placebo = next(line for line in text.splitlines() if "placebo" in line).split()
        active = next(line for line in text.splitlines() if "active" in line).split()
        assert placebo[1:] == ["0.38", "0.52", "0.37"]
        assert active[1:] == ["0.62", "0.48", "0.63"]
        assert "gamma: 0.74" in text

    def test_json_carries_full_precision(self, tmp_path):
        doc = run_json(tmp_path, "--method", "fa2")
        w = doc["what"][doc["labels"].index("placebo")]
        assert w != round(w, 2)
        assert abs(w - 0.3652) < 5e-4

    def test_row_order_irrelevant(self, tmp_path):
        with open(DATA) as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        perm = np.random.default_rng(0).permutation(len(body))
        shuffled = write_csv(tmp_path / "shuffled.csv", header, [body[i] for i in perm])
        a = read_csv_dataset(DATA, "treatment", "change", ["baseline"])
        b = read_csv_dataset(shuffled, "treatment", "change", ["baseline"])
        for method in ("fa1", "ca", "fa2", "eb"):
            ra, rb = run_test(a, method, n_boot=500, seed=1), run_test(b, method, n_boot=500, seed=1)
            assert ra.labels == rb.labels
            assert ra.statistic == pytest.approx(rb.statistic, rel=1e-12)
            assert ra.p_value == pytest.approx(rb.p_value, rel=1e-12)
            np.testing.assert_allclose(ra.qhat, rb.qhat, rtol=0, atol=1e-15)
            if method == "eb":
                assert ra.p_value == rb.p_value
                assert ra.critical_value == pytest.approx(rb.critical_value, rel=1e-12)

    def test_zero_statistic_eb(self, tmp_path, capsys):
        pairs = [(1, 1), (2, 3), (3, 2), (4, 5), (5, 4)]
        rows = [["a", y, x] for y, x in pairs] + [["b", y, x] for y, x in pairs[::-1]]
        path = write_csv(tmp_path / "tied.csv", ["g", "y", "x"], rows)
        args = ["test", "--data", str(path), "--group", "g", "--outcome", "y", "--covariates", "x"]
        assert main([*args, "--method", "eb", "--boot", "200", "--seed", "1"]) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["statistic"] == 0.0 and doc["p_value"] == 1.0


class TestErrors:
    def test_missing_column(self, capsys):
        args = ["test", "--data", str(DATA), "--group", "treatment", "--outcome", "change", "--covariates", "age"]
        assert main(args) == EXIT_DATA
        assert "column 'age'" in capsys.readouterr().err
        with pytest.raises(ParseError, match="age"):
            read_csv_dataset(DATA, "treatment", "change", ["age"])

    def test_bad_number(self, tmp_path):
        path = write_csv(tmp_path / "bad.csv", ["g", "y"], [["a", 1], ["a", "high"], ["b", 2], ["b", 3]])
        with pytest.raises(ParseError) as info:
            read_csv_dataset(path, "g", "y")
        assert info.value.row == 3 and info.value.column == "y"

    def test_missing_file(self, tmp_path):
        assert main(["test", "--data", str(tmp_path / "nope.csv"), "--group", "g", "--outcome", "y"]) == EXIT_DATA

    def test_singleton_group(self, tmp_path):
        path = write_csv(tmp_path / "one.csv", ["g", "y"], [["a", 1], ["b", 2], ["b", 3]])
        assert main(["test", "--data", str(path), "--group", "g", "--outcome", "y", "--method", "fa1"]) == EXIT_DATA

    def test_constant_covariate(self, tmp_path, capsys):
        rows = [["a", 1, 5], ["a", 2, 5], ["a", 4, 5], ["b", 3, 5], ["b", 6, 5]]
        path = write_csv(tmp_path / "const.csv", ["g", "y", "x"], rows)
        code = main(["test", "--data", str(path), "--group", "g", "--outcome", "y", "--covariates", "x", "--method", "ca"])
        assert code == EXIT_DEGENERATE
        assert "fa1" in capsys.readouterr().err

    def test_usage(self):
        assert main([]) == EXIT_USAGE
        assert main(["test", *WORKED, "--method", "nope"]) == EXIT_USAGE
        assert main(["test", *WORKED[:-2], "--covariates", "change"]) == EXIT_USAGE


class TestCommandSimulate:
    def test_smoke(self, tmp_path, capsys):
        out, js = tmp_path / "smoke.csv", tmp_path / "smoke.json"
        assert main(["simulate", "smoke", "--out", str(out), "--json", str(js)]) == EXIT_OK
        rates = json.loads(js.read_text())["results"]
        assert all(r["rate"] in (0.0, 100.0) for r in rates.values())
        assert out.read_text().startswith("scenario,sizes,method")
        assert "Wald interval" in capsys.readouterr().out

    def test_schema_error(self, tmp_path, capsys):
        path = tmp_path / "bad.yaml"
        path.write_text("kind: ordinal\nsizes: [10, 10]\nmethods: [eb, magic]\n")
        assert main(["simulate", str(path)]) == EXIT_USAGE
        err = capsys.readouterr().err
        assert "magic" in err and "'fa1', 'ca', 'fa2', 'eb', 'wild'" in err

    def test_overrides(self, tmp_path):
        js = tmp_path / "r.json"
        assert main(["simulate", "table4_row1", "--n-sim", "3", "--n-boot", "50", "--seed", "8", "--json", str(js)]) == EXIT_OK
        doc = json.loads(js.read_text())
        assert doc["scenario"]["n_sim"] == 3 and doc["scenario"]["seed"] == 8

    def test_module_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "nancova", "test", *WORKED, "--method", "fa1", "--format", "text"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0 and "p-value" in proc.stdout


def test_format_report_rounds_for_display():
    data = read_csv_dataset(DATA, "treatment", "change", ["baseline"])
    text = format_report(run_test(data, "fa2"))
    assert "0.37" in text and "0.63" in text and "df = " in text
