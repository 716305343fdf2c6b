"""End-to-end command-line interface tests."""

import json
import random
import subprocess
import sys

import pytest

from freshcache import serialize_scenario
from freshcache.cli import main
from freshcache.scenario_io import serialize_rates, serialize_scheme

from conftest import REFERENCE_ASSIGNMENT, REFERENCE_RATES
from conftest import random_scenario

from freshcache import CacheScheme


@pytest.fixture()
def scheme_file(tmp_path, reference_scheme):
    path = tmp_path / "scheme.yaml"
    path.write_text(serialize_scheme(reference_scheme))
    return str(path)


@pytest.fixture()
def rates_file(tmp_path):
    path = tmp_path / "rates.yaml"
    path.write_text(serialize_rates(REFERENCE_RATES))
    return str(path)


class TestSolveCommand:
    def test_exhaustive_csv(self, capsys):
        code = main(["solve", "--scenario", "table1", "--threads", "1"])
        captured = capsys.readouterr()
        assert code == 0
        lines = captured.out.splitlines()
        assert lines[0].startswith("file_index,")
        assert "objective_sum=0.531856" in captured.out
        value = float(next(l for l in lines if l.startswith("objective_sum=")).split("=")[1])
        assert value >= 0.5319 - 5e-4

    def test_json_format(self, capsys):
        code = main(["solve", "--scenario", "table1", "--threads", "1", "--format", "json"])
        captured = capsys.readouterr()
        assert code == 0
        doc = json.loads(captured.out)
        assert doc["objective_sum"] == pytest.approx(0.531856298, abs=1e-6)
        assert doc["evaluated_count"] == 40110
        assignment = {(e["user"], e["file"]): e["relay"] for e in doc["assignment"]}
        assert assignment == REFERENCE_ASSIGNMENT
        assert doc["trace"][-1][1] == doc["objective_sum"]

    def test_out_and_trace_files(self, tmp_path, capsys):
        out = tmp_path / "result.csv"
        trace = tmp_path / "trace.csv"
        code = main(
            [
                "solve", "--scenario", "table1", "--threads", "1",
                "--out", str(out), "--trace", str(trace),
            ]
        )
        capsys.readouterr()
        assert code == 0
        assert out.read_text().startswith("file_index,")
        trace_lines = trace.read_text().splitlines()
        assert trace_lines[0] == "iteration,best_objective_sum"
        assert len(trace_lines) >= 2

    def test_sampled_mode(self, capsys):
        code = main(
            ["solve", "--scenario", "table1", "--mode", "sampled", "--budget", "2000", "--seed", "7"]
        )
        captured = capsys.readouterr()
        assert code == 0
        value = float(
            next(l for l in captured.out.splitlines() if l.startswith("objective_sum=")).split("=")[1]
        )
        assert value >= 0.52

    def test_infeasible_scenario_exit_code(self, tmp_path, capsys):
        doc = """
files:
  - {id: 1, server_rate: 2.0}
  - {id: 2, server_rate: 3.0}
users:
  - id: 1
    holdings:
      - {file: 1, user_rate: 4.0, request_prob: 0.5}
      - {file: 2, user_rate: 5.0, request_prob: 0.5}
    relay_prefs: [1.0]
relays:
  - {id: 1, capacity: 1, rate_budget: 6.0}
"""
        path = tmp_path / "tight.yaml"
        path.write_text(doc)
        code = main(["solve", "--scenario", str(path), "--threads", "1"])
        captured = capsys.readouterr()
        assert code == 3
        assert "error" in captured.err

    def test_parse_error_exit_code(self, tmp_path, capsys):
        path = tmp_path / "broken.yaml"
        path.write_text("files: [\n")
        code = main(["solve", "--scenario", str(path)])
        captured = capsys.readouterr()
        assert code == 2
        assert "error" in captured.err

    def test_missing_file_exit_code(self, tmp_path, capsys):
        code = main(["solve", "--scenario", str(tmp_path / "absent.yaml")])
        captured = capsys.readouterr()
        assert code == 5
        assert "error" in captured.err


class TestAllocateCommand:
    def test_rate_table_and_kkt_reports(self, scheme_file, capsys):
        code = main(["allocate", "--scenario", "table1", "--scheme", scheme_file])
        captured = capsys.readouterr()
        assert code == 0
        lines = captured.out.splitlines()
        assert lines[0] == "file_index,user_index,relay_index,relay_rate"
        assert "7,3,3,4.5573" in lines
        assert "1,1,1,2.4832" in lines
        relay_lines = [l for l in lines if l.startswith("relay=")]
        assert len(relay_lines) == 3
        assert all("satisfied=True" in l for l in relay_lines)
        assert all("water_level=" in l for l in relay_lines)

    def test_invalid_scheme_exit_code(self, tmp_path, capsys):
        partial = dict(REFERENCE_ASSIGNMENT)
        del partial[(1, 1)]
        path = tmp_path / "partial.yaml"
        path.write_text(serialize_scheme(CacheScheme(partial)))
        code = main(["allocate", "--scenario", "table1", "--scheme", str(path)])
        capsys.readouterr()
        assert code == 2


class TestFreshnessCommand:
    def test_per_user_and_objective(self, scheme_file, rates_file, capsys):
        code = main(
            ["freshness", "--scenario", "table1", "--scheme", scheme_file, "--rates", rates_file]
        )
        captured = capsys.readouterr()
        assert code == 0
        lines = captured.out.splitlines()
        assert "user=3 freshness=0.128353" in lines
        assert "objective_sum=0.531855" in lines
        assert "objective_mean=0.132964" in lines


class TestSimulateCommand:
    def test_csv_output(self, scheme_file, rates_file, capsys):
        code = main(
            [
                "simulate", "--scenario", "table1", "--scheme", scheme_file,
                "--rates", rates_file, "--horizon", "2000", "--seed", "1",
            ]
        )
        captured = capsys.readouterr()
        assert code == 0
        lines = captured.out.splitlines()
        assert lines[0] == "user_index,file_index,relay_index,relay_rate,analytic,estimate,half_width_95,cycles"
        assert len([l for l in lines if "," in l and not l.startswith("user_index")]) == 10
        assert any(l.startswith("aggregate_sum_estimate=") for l in lines)
        assert any(l.startswith("analytic_sum=0.531855") for l in lines)


class TestVerifyCommand:
    def test_table1_passes(self, capsys):
        code = main(["verify", "--scenario", "table1"])
        captured = capsys.readouterr()
        assert code == 0
        lines = captured.out.splitlines()
        assert "objectives_match=True" in lines
        assert "assignments_match=True" in lines
        assert lines[-1] == "verify=PASS"
        # relay 1 holds five entries, above the grid oracle's guard
        assert any(l.startswith("grid_check relay=1 skipped") for l in lines)
        assert any(l.startswith("grid_check relay=2 closed=") and l.endswith("ok=True") for l in lines)

    def test_scale_guard_exit_code(self, tmp_path, capsys):
        rng = random.Random(13)
        scenario = random_scenario(rng, n_files=12, n_users=2, n_relays=3)
        path = tmp_path / "big.yaml"
        path.write_text(serialize_scenario(scenario))
        code = main(["verify", "--scenario", str(path)])
        captured = capsys.readouterr()
        assert code == 4
        assert "error" in captured.err


class TestSweepCommand:
    def test_user_scale_strictly_increases(self, capsys):
        code = main(
            ["sweep", "--scenario", "table1", "--scale", "user", "--factors", "0.5,1,1.5", "--threads", "1"]
        )
        captured = capsys.readouterr()
        assert code == 0
        lines = captured.out.splitlines()
        assert lines[0] == "factor,objective_sum"
        values = [float(l.split(",")[1]) for l in lines[1:]]
        assert len(values) == 3
        assert values[0] < values[1] < values[2]

    def test_server_scale_strictly_decreases(self, capsys):
        code = main(
            ["sweep", "--scenario", "table1", "--scale", "server", "--factors", "1,1.5,2", "--threads", "1"]
        )
        captured = capsys.readouterr()
        assert code == 0
        values = [float(l.split(",")[1]) for l in captured.out.splitlines()[1:]]
        assert values[0] > values[1] > values[2]

    def test_bad_factors_exit_code(self, capsys):
        code = main(["sweep", "--scenario", "table1", "--scale", "user", "--factors", "1,a"])
        capsys.readouterr()
        assert code == 2


class TestDeterminism:
    def test_sampled_output_independent_of_threads(self):
        runs = []
        for threads in ("1", "4"):
            proc = subprocess.run(
                [
                    sys.executable, "-m", "freshcache.cli",
                    "solve", "--scenario", "table1", "--mode", "sampled",
                    "--budget", "500", "--seed", "7", "--threads", threads,
                ],
                capture_output=True,
                check=True,
            )
            runs.append(proc.stdout)
        assert runs[0] == runs[1]

    def test_exhaustive_output_independent_of_threads(self):
        runs = []
        for threads in ("1", "3"):
            proc = subprocess.run(
                [
                    sys.executable, "-m", "freshcache.cli",
                    "solve", "--scenario", "table1", "--threads", threads, "--format", "json",
                ],
                capture_output=True,
                check=True,
            )
            runs.append(proc.stdout)
        assert runs[0] == runs[1]
