#!/usr/bin/env python3
"""
Tests for cli_reports.py

Config parsing and diagnostics, node-value files, deterministic reports
and the command-line entry point.
"""

import json
import os
import sys
import textwrap

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from cli_reports import (  # noqa: E402
    ExperimentRunner,
    dumps_report,
    load_config,
    main,
    read_node_values,
    write_node_values,
)
from domain_grid import build_ball_grid  # noqa: E402
from errors import ConfigError  # noqa: E402

SCHEMA_PATH = os.path.join(os.path.dirname(__file__), "..", "docs", "report_schema.json")

SMALL_GRID = """
grid:
  dim: 3
  radial_count: 8
  angular_count: 24
  radial_rule: legendre
"""


@pytest.fixture
def write_config(tmp_path):
    """Write a YAML experiment into tmp_path with outputs kept there too."""

    def write(body, name="experiment.yml", outputs=True):
        text = textwrap.dedent(body)
        if outputs:
            text += "outputs:\n  report_path: reports/report.json\n  tables_path: reports/tables\n"
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    return write


@pytest.fixture
def schema():
    with open(SCHEMA_PATH, "r", encoding="utf-8") as handle:
        return json.load(handle)


def check_required(report, schema):
    for key in schema["required"]:
        assert key in report, key
    for section in ("config", "grid", "kernel"):
        for key in schema["properties"][section]["required"]:
            assert key in report[section], f"{section}.{key}"
    for key in schema["definitions"][report["command"]]["required"]:
        assert key in report["results"], f"results.{key}"


class TestLoadConfig:
    """Test config loading and validation."""

    def test_defaults(self, write_config):
        config = load_config(write_config("name: defaults\n", outputs=False))
        assert config.name == "defaults"
        assert config.grid.radial_rule == "geometric"
        assert config.grid.octaves == 10
        assert config.kernel.s == 0.5
        assert config.solve.method == "direct"
        assert config.tolerances.alpha_solution == 0.05

    def test_classical_defaults_to_s_one(self, write_config):
        config = load_config(write_config("kernel:\n  variant: classical\n"))
        assert config.kernel.s == 1.0

    def test_full_experiment(self, write_config):
        config = load_config(
            write_config(
                """
                name: full
                kernel:
                  variant: rfl
                  s: 0.75
                potential:
                  c0: 0.5
                  singularities:
                    - point: [0.0, 0.0, 0.0]
                      beta: 1.0
                measure:
                  density: 2.0
                  atoms:
                    - point: [0.1, 0.0, 0.0]
                      mass: 3
                ladders:
                  cutoffs: [1, 2, 4, 8]
                seed: 4
                """
            )
        )
        assert config.potential.singularities[0].beta == 1.0
        assert config.measure.atoms[0].mass == 3.0
        assert config.ladders.cutoffs == [1.0, 2.0, 4.0, 8.0]
        assert config.seed == 4

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "absent.yml"))

    @pytest.mark.parametrize(
        "body, field, line",
        [
            ("name: a\ncolour: red\n", "colour", 2),
            ("grid:\n  radial_count: many\n", "grid.radial_count", 2),
            ("grid:\n  radial_count: 2.5\n", "grid.radial_count", 2),
            ("kernel:\n  variant: rfl\n  s: 1.5\n", "kernel.s", 3),
            ("kernel:\n  variant: classical\n  s: 0.5\n", "kernel.variant", 2),
            ("kernel:\n  variant: spectral\n", "kernel.variant", 2),
            ("potential:\n  singularities:\n    - point: [0.0, 0.0]\n", "potential.singularities[0].point", 3),
            ("measure:\n  density_file: nowhere.csv\n", "measure.density_file", 2),
            ("solve:\n  method: newton\n", "solve.method", 2),
            ("tolerances:\n  zero_ratio: -1\n", "tolerances.zero_ratio", 2),
        ],
    )
    def test_errors_name_field_and_line(self, write_config, body, field, line):
        with pytest.raises(ConfigError) as excinfo:
            load_config(write_config(body, outputs=False))
        assert excinfo.value.field == field
        assert excinfo.value.line == line
        assert field in str(excinfo.value)

    def test_yaml_syntax_error_has_line(self, write_config):
        with pytest.raises(ConfigError) as excinfo:
            load_config(write_config("name: a\ngrid: [1, 2\nseed: 3\n", outputs=False))
        assert excinfo.value.line is not None

    def test_shipped_configs_load(self):
        config_dir = os.path.join(os.path.dirname(__file__), "..", "configs")
        for name in sorted(os.listdir(config_dir)):
            if name.endswith(".yml"):
                assert load_config(os.path.join(config_dir, name)).name


class TestNodeValues:
    """Test per-node CSV files."""

    def test_round_trip(self, tmp_path):
        grid = build_ball_grid(3, 8, 24)
        values = np.linspace(0.0, 1.0, grid.size) ** 3
        path = str(tmp_path / "values.csv")
        write_node_values(path, grid, values)
        np.testing.assert_array_equal(read_node_values(path, grid), values)

    def test_other_grid(self, tmp_path):
        grid = build_ball_grid(3, 8, 24)
        path = str(tmp_path / "values.csv")
        write_node_values(path, grid, np.ones(grid.size))
        with pytest.raises(ConfigError):
            read_node_values(path, build_ball_grid(3, 8, 26))

    def test_missing_nodes(self, tmp_path):
        grid = build_ball_grid(3, 8, 24)
        path = tmp_path / "values.csv"
        path.write_text(f"# grid_hash={grid.grid_hash.hex()}\nnode,value\n0,1.0\n")
        with pytest.raises(ConfigError):
            read_node_values(str(path), grid)

    def test_written_header_is_a_comment(self, tmp_path):
        grid = build_ball_grid(3, 4, 6)
        path = tmp_path / "values.csv"
        write_node_values(str(path), grid, np.zeros(grid.size))
        lines = path.read_text().splitlines()
        assert lines[0].startswith("# grid_hash=")
        assert lines[1] == "# node,value"
        assert lines[2] == "0,0"

    def test_bare_column_header_is_skipped(self, tmp_path):
        grid = build_ball_grid(3, 4, 6)
        rows = "\n".join(f"{i},{2.0 * i}" for i in range(grid.size))
        path = tmp_path / "values.csv"
        path.write_text(f"# grid_hash={grid.grid_hash.hex()}\nnode,value\n{rows}\n")
        np.testing.assert_array_equal(read_node_values(str(path), grid), 2.0 * np.arange(grid.size))

    def test_malformed_rows(self, tmp_path):
        grid = build_ball_grid(3, 4, 6)
        path = tmp_path / "values.csv"
        for body in ("", "0,abc\n", "0,1.0,2.0\n"):
            path.write_text(f"# grid_hash={grid.grid_hash.hex()}\n{body}")
            with pytest.raises(ConfigError):
                read_node_values(str(path), grid)


class TestDumpsReport:
    """Test the deterministic JSON writer."""

    def test_sorted_keys_and_precision(self):
        third = np.float64(1.0 / 3.0)
        text = dumps_report({"b": 0.1, "a": [third, np.int64(2), np.bool_(True)]})
        assert text.index('"a"') < text.index('"b"')
        assert repr(1.0 / 3.0) in text
        assert json.loads(text) == {"a": [1.0 / 3.0, 2, True], "b": 0.1}
        assert json.loads(text)["a"][0] == float(third)
        assert text.endswith("}\n")

    def test_matches_json_module(self):
        report = {"z": {"y": [1.5, 2]}, "a": "text"}
        assert dumps_report(report) == json.dumps(report, indent=2, sort_keys=True) + "\n"

    def test_nested_non_finite_as_null(self):
        text = dumps_report({"ladder": [(1.0, np.nan), (0.5, -np.inf)]})
        assert json.loads(text) == {"ladder": [[1.0, None], [0.5, None]]}

    def test_non_finite_as_null(self):
        assert json.loads(dumps_report({"x": float("nan"), "y": np.inf})) == {"x": None, "y": None}

    def test_tuple_keys_and_arrays(self):
        text = dumps_report({"values": np.array([1.0, 2.0]), "point": (0.0, 1.0)})
        assert json.loads(text) == {"point": [0.0, 1.0], "values": [1.0, 2.0]}


class TestExperimentRunner:
    """Test the pipeline subcommands end to end."""

    def test_assemble_is_deterministic(self, write_config, tmp_path, schema):
        path = write_config(SMALL_GRID + "cache_dir: cache\n")
        report_path = tmp_path / "reports" / "report.json"

        ExperimentRunner(load_config(path)).run("assemble")
        first = report_path.read_bytes()
        ExperimentRunner(load_config(path)).run("assemble")
        assert report_path.read_bytes() == first
        assert any(name.endswith(".grnk") for name in os.listdir(tmp_path / "cache"))
        check_required(json.loads(first), schema)

    def test_torsion_solve(self, write_config, tmp_path, schema):
        path = write_config(
            """
            grid:
              radial_count: 24
              angular_count: 48
              radial_rule: legendre
            kernel:
              variant: classical
            measure:
              density: 1.0
            """
        )
        report = ExperimentRunner(load_config(path)).run("solve")
        assert report["results"]["u_at_origin"] == pytest.approx(1.0 / 6.0, rel=1e-2)
        assert report["results"]["vu_l1"] == 0.0
        check_required(report, schema)
        table = (tmp_path / "reports" / "tables" / "solve_solution.csv").read_text()
        assert table.startswith("node,radius,u\n")

    def test_iterative_solve(self, write_config):
        path = write_config(
            SMALL_GRID + "potential:\n  c0: 1.0\nmeasure:\n  density: 1.0\nsolve:\n  method: iterative\n"
        )
        results = ExperimentRunner(load_config(path)).run("solve")["results"]
        assert results["method"] == "iterative"
        assert results["vu_estimate"]["lhs"] <= results["vu_estimate"]["rhs"]

    def test_l1_rejects_atoms(self, write_config):
        path = write_config(SMALL_GRID + "measure:\n  atoms:\n    - point: [0.0, 0.0, 0.0]\nsolve:\n  method: l1\n")
        with pytest.raises(ConfigError):
            ExperimentRunner(load_config(path)).run("solve")

    def test_bounded_solver_rejects_infinite_potential(self, write_config):
        body = SMALL_GRID + (
            "potential:\n  singularities:\n    - point: [0.0, 0.0, 0.0]\n      beta: 3.5\n"
            "measure:\n  density: 1.0\n"
        )
        with pytest.raises(ConfigError) as excinfo:
            ExperimentRunner(load_config(write_config(body))).run("solve")
        assert excinfo.value.field == "solve.method"

    def test_reduced_measure(self, write_config, schema):
        path = write_config(
            """
            potential:
              singularities:
                - point: [0.0, 0.0, 0.0]
                  beta: 1.5
            measure:
              density: 1.0
              atoms:
                - point: [0.0, 0.0, 0.0]
                  mass: 1.0
            """
        )
        report = ExperimentRunner(load_config(path)).run("csola")
        results = report["results"]
        assert results["mu_reduced"]["atoms"] == []
        assert results["mu_reduced"]["density_mass"] == pytest.approx(4.0 * np.pi / 3.0, rel=1e-3)
        assert results["z_points"] == [[0.0, 0.0, 0.0]]
        assert not results["is_solution"]
        check_required(report, schema)

    def test_ztest(self, write_config, tmp_path, schema):
        path = write_config(
            """
            potential:
              singularities:
                - point: [0.0, 0.0, 0.0]
                  beta: 1.5
            """
        )
        report = ExperimentRunner(load_config(path)).run("ztest")
        results = report["results"]
        assert results["z_points"] == [[0.0, 0.0, 0.0]]
        assert results["consistent"]
        assert all(results["verdicts"][0]["verdicts"].values())
        assert results["integral_ladders"][0]["verdict"] is True
        assert results["flags"] == []
        check_required(report, schema)
        assert (tmp_path / "reports" / "tables" / "ztest_verdicts.csv").exists()

    def test_scaling(self, write_config, schema):
        path = write_config(
            """
            measure:
              density: 1.0
              atoms:
                - point: [0.0, 0.0, 0.0]
                  mass: 2.0
            ladders:
              rho_ladder: [0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625]
            """
        )
        report = ExperimentRunner(load_config(path)).run("scaling")
        results = report["results"]
        assert results["near_support"][-1]["ratio"] == pytest.approx(2.0, abs=1e-2)
        assert results["kernel_local_slope"] == pytest.approx(0.0, abs=0.05)
        check_required(report, schema)

    def test_unknown_command(self, write_config):
        with pytest.raises(ConfigError):
            ExperimentRunner(load_config(write_config(SMALL_GRID))).run("plot")


class TestMain:
    """Test the command-line entry point."""

    def test_success(self, write_config, tmp_path):
        path = write_config(SMALL_GRID)
        assert main(["assemble", "--config", path]) == 0
        assert (tmp_path / "reports" / "report.json").exists()

    def test_config_error_exit_code(self, write_config, capsys):
        path = write_config("grid:\n  radial_count: many\n", outputs=False)
        assert main(["assemble", "--config", path]) == 1
        assert "grid.radial_count" in capsys.readouterr().err

    def test_config_is_required(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["assemble"])
        assert excinfo.value.code == 2

    def test_overrides(self, write_config, tmp_path, mocker):
        run = mocker.patch("cli_reports.ExperimentRunner.run", autospec=True)
        path = write_config(SMALL_GRID)
        assert main(["ztest", "--config", path, "--seed", "9", "--cache-dir", str(tmp_path / "c")]) == 0
        runner, command = run.call_args.args
        assert command == "ztest"
        assert runner.config.seed == 9
        assert runner.config.cache_dir == str(tmp_path / "c")

    def test_report_independent_of_cache_dir(self, write_config, tmp_path):
        path = write_config(SMALL_GRID)
        report_path = tmp_path / "reports" / "report.json"
        reports = []
        for name in ("first", "second"):
            assert main(["assemble", "--config", path, "--cache-dir", str(tmp_path / name)]) == 0
            reports.append(report_path.read_bytes())
        assert reports[0] == reports[1]
        assert "cache_dir" not in json.loads(reports[0])["config"]
        assert str(tmp_path) not in reports[0].decode("utf-8")

    def test_ztest_on_coarse_grid(self, write_config, tmp_path):
        """An under-resolved integral ladder is flagged and the run still succeeds."""
        path = write_config(
            """
            grid:
              radial_count: 12
              angular_count: 24
              radial_rule: legendre
            potential:
              singularities:
                - point: [0.0, 0.0, 0.0]
                  beta: 1.5
            ladders:
              rho_ladder: [0.5, 0.01, 0.005]
            """
        )
        assert main(["ztest", "--config", path]) == 0
        report = json.loads((tmp_path / "reports" / "report.json").read_text())
        ladder = report["results"]["integral_ladders"][0]
        assert ladder["flagged"] is True
        assert ladder["verdict"] is None
