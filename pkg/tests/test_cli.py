"""Tests for the command-line driver: configs, subcommands, CSV/SVG output."""

import json
import math

import numpy as np
import pytest

from sdgflow import cli
from sdgflow.cli import ConfigError, RunConfig
from sdgflow.verify import ConvergenceRow, ConvergenceTable


MESH_FILE = "6 2\n0 0\n1 0\n1 1\n0 1\n0 0.5\n1 0.5\n4 0 1 5 4\n4 4 5 2 3\n"


# -- config handling ------------------------------------------------------


def test_config_validation_aggregates_problems():
    bad = RunConfig(k=7, epsilon=-1.0, mesh="weird", levels=())
    with pytest.raises(ConfigError) as err:
        bad.validate()
    msg = str(err.value)
    for frag in ("k must be", "epsilon must be", "mesh must be", "level"):
        assert frag in msg


def test_config_rejects_unsorted_levels():
    with pytest.raises(ConfigError, match="increasing"):
        RunConfig(levels=(8, 4)).validate()


def test_config_from_preset_narrowing():
    from sdgflow import cases

    config = cli.config_from_preset(cases.preset("table4"), k=2)
    assert config.k == 2
    assert config.epsilon == 1e-8
    assert config.mesh == "square"
    assert config.levels == (2, 4, 8, 16, 32)


def test_build_config_precedence(tmp_path):
    # Preset expands first, JSON config next, flags last.
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"k": 2, "levels": [4, 8]}))
    parser_args = _parse(["solve", "--preset", "table1", "--config", str(cfg),
                          "--k", "3"])
    config = cli.build_config(parser_args)
    assert config.k == 3  # flag wins
    assert config.levels == (4, 8)  # JSON wins over preset
    assert config.epsilon == 1.0  # preset value survives


def test_build_config_rejects_unknown_keys(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"order": 2}))
    with pytest.raises(ConfigError, match="unknown config key"):
        cli.build_config(_parse(["solve", "--config", str(cfg)]))


def _parse(argv):
    import argparse

    parser = argparse.ArgumentParser()
    subs = parser.add_subparsers(dest="command")
    sub = subs.add_parser("solve")
    cli._add_run_flags(sub)
    return parser.parse_args(argv)


# -- runs -----------------------------------------------------------------


def test_run_single_reports_errors_and_sizes():
    report = cli.run_single(RunConfig(k=1, levels=(4,)))
    assert set(report.errors) == {"u", "L", "p", "super", "z2_scaled"}
    assert all(v > 0.0 for v in report.errors.values())
    assert report.ndof == sum(report.dims) + 1
    assert report.h == 0.25
    text = report.summary()
    assert "err_u" in text and "unknowns" in text


def test_run_single_zero_case():
    # Zero data: solution norms vanish, error norms equal the exact norms.
    report = cli.run_single(RunConfig(k=1, levels=(4,), case="zero"))
    assert report.norms["u"] < 1e-10
    assert report.norms["p"] < 1e-10
    assert report.errors["u"] > 0.1  # == norm of the exact solution


def test_run_single_is_deterministic():
    config = RunConfig(k=1, levels=(4,), mesh="distorted")
    a = cli.run_single(config)
    b = cli.run_single(config)
    assert a.errors == b.errors


def test_run_convergence_orders():
    table = cli.run_convergence(RunConfig(k=1, levels=(4, 8, 16)))
    assert len(table.rows) == 3
    assert not table.rows[0].orders
    assert 1.5 < table.order("u") < 2.5


# -- output formats -------------------------------------------------------


def _demo_table():
    table = ConvergenceTable(k=1, eps=1.0, family="square")
    for i, n in enumerate((4, 8)):
        table.add(ConvergenceRow(
            level=n, h=1.0 / n, ndof=10 * n,
            errors={"u": 10.0 ** -i, "L": 2.0 * 10.0 ** -i, "p": 3.0 * 10.0 ** -i,
                    "super": 4.0 * 10.0 ** -i, "z2_scaled": 5.0 * 10.0 ** -i}))
    return table


def test_csv_round_trip():
    table = _demo_table()
    text = cli.table_to_csv(table)
    assert text.splitlines()[0] == cli.CSV_COLUMNS
    rows = cli.parse_csv(text)
    assert len(rows) == 2
    assert rows[0]["ord_u"] is None
    assert rows[1]["level"] == 8
    # Values round-trip exactly at the emitted precision.
    assert rows[1]["err_u"] == float(f"{table.rows[1].errors['u']:.2e}")
    assert rows[1]["ord_u"] == float(f"{table.rows[1].orders['u']:.2f}")


def test_empty_table_outputs():
    table = ConvergenceTable(k=1, eps=1.0, family="square")
    assert cli.table_to_csv(table) == cli.CSV_COLUMNS + "\n"
    svg = cli.table_to_svg(table)
    assert svg.startswith("<svg") and "empty table" in svg


def test_svg_plot_contents():
    svg = cli.table_to_svg(_demo_table())
    assert svg.startswith("<svg") and svg.endswith("</svg>")
    assert "polyline" in svg
    assert "slope 1" in svg and "slope 2" in svg
    assert "err_u" in svg and "err_p" in svg


def test_emit_outputs_writes_files(tmp_path):
    csv_path = tmp_path / "out.csv"
    svg_path = tmp_path / "out.svg"
    cli.emit_outputs(_demo_table(), str(csv_path), str(svg_path))
    assert csv_path.read_text().startswith(cli.CSV_COLUMNS)
    assert svg_path.read_text().startswith("<svg")


# -- main entry point -----------------------------------------------------


def test_main_solve_and_converge(tmp_path, capsys):
    csv_path = tmp_path / "t.csv"
    code = cli.main(["converge", "--k", "1", "--levels", "4,8",
                     "--out-csv", str(csv_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == cli.CSV_COLUMNS
    assert csv_path.exists()

    code = cli.main(["solve", "--k", "1", "--levels", "4"])
    assert code == 0
    assert "err_u" in capsys.readouterr().out


def test_main_solve_same_config_is_byte_identical(tmp_path):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        assert cli.main(["solve", "--k", "1", "--levels", "4",
                         "--out-csv", str(p)]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_main_mesh_check_and_file_import(tmp_path, capsys):
    assert cli.main(["mesh", "check", "--mesh", "square", "--levels", "2,4"]) == 0
    assert "OK" in capsys.readouterr().out

    mesh_path = tmp_path / "two.txt"
    mesh_path.write_text(MESH_FILE)
    code = cli.main(["solve", "--k", "1", "--mesh", "file",
                     "--mesh-file", str(mesh_path)])
    assert code == 0


def test_main_preset_list(capsys):
    assert cli.main(["preset", "list"]) == 0
    out = capsys.readouterr().out
    for i in range(1, 9):
        assert f"table{i}:" in out


def test_main_config_error_exit_code(capsys):
    assert cli.main(["solve", "--k", "9"]) == 2
    assert "config" in capsys.readouterr().err


def test_main_mesh_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("3 1\n0 0\n1 0\n0 1\n3 0 2 1\n")  # clockwise polygon
    code = cli.main(["mesh", "check", "--mesh", "file",
                     "--mesh-file", str(bad), "--levels", "2"])
    assert code == 3
    assert "mesh" in capsys.readouterr().err


def test_main_runtime_error_exit_code(capsys):
    code = cli.main(["solve", "--mesh", "file", "--mesh-file", "/nope/missing"])
    assert code == 1
