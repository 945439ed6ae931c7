import json

import pytest

from geodemo.cli import main
from fixtures import write_config, write_external_fixtures, write_planted_csv


@pytest.fixture(scope="module")
def inputs(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli_inputs")
    table, schema = write_planted_csv(base)
    externals = write_external_fixtures(base)
    return base, table, schema, externals


def test_run_all_exit_zero(inputs, tmp_path, capsys):
    base, table, schema, externals = inputs
    out = tmp_path / "out"
    config = write_config(base, table, schema, out, externals=externals)
    assert main(["run-all", "--config", str(config)]) == 0
    assert "pipeline complete" in capsys.readouterr().out
    assert (out / "manifest.json").is_file()


def test_validate_input_reports_counts(inputs, tmp_path, capsys):
    base, table, schema, _ = inputs
    code = main([
        "validate-input", "--table", str(table), "--schema", str(schema),
        "--out-dir", str(tmp_path / "o"),
    ])
    assert code == 0
    assert "370 districts x 11 measures" in capsys.readouterr().out
    assert (tmp_path / "o" / "ingest_report.csv").is_file()


def test_flags_override_config(inputs, tmp_path):
    base, table, schema, _ = inputs
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    config = write_config(base, table, schema, out_a, run_kselect="never")
    assert main(["fit", "--config", str(config), "--out-dir", str(out_b), "--k", "7"]) == 0
    assert (out_b / "assignments.csv").is_file()
    assert not (out_a / "assignments.csv").exists()


def test_fit_without_k_or_selection_is_config_error(inputs, tmp_path, capsys):
    base, table, schema, _ = inputs
    config = write_config(base, table, schema, tmp_path / "o", k="", run_kselect="never")
    assert main(["fit", "--config", str(config)]) == 2
    assert "error:" in capsys.readouterr().err


def test_fit_uses_persisted_k_selection(inputs, tmp_path):
    base, table, schema, _ = inputs
    out = tmp_path / "o"
    out.mkdir()
    (out / "k_selection.json").write_text(json.dumps({"chosen_k": 3}))
    config = write_config(base, table, schema, out, k="", run_kselect="never")
    assert main(["fit", "--config", str(config)]) == 0
    model = json.loads((out / "model.json").read_text())
    assert model["k"] == 3


def test_missing_table_exits_3(tmp_path, capsys):
    code = main([
        "fit", "--table", str(tmp_path / "absent.csv"),
        "--schema", str(tmp_path / "absent.ini"),
        "--out-dir", str(tmp_path / "o"), "--k", "2", "--seed", "1",
    ])
    assert code == 3


def test_degenerate_data_exits_4(tmp_path):
    table = tmp_path / "t.csv"
    table.write_text(
        "district_code,district_name,a,b\n"
        "E06000001,X,5,1\nE06000002,Y,5,2\nE06000003,Z,5,3\n"
    )
    schema = tmp_path / "s.ini"
    schema.write_text(
        "[measures]\na = Social/Qualifications/AsIs/percentage\n"
        "b = Social/EmploymentStatus/AsIs/percentage\n"
    )
    code = main([
        "fit", "--table", str(table), "--schema", str(schema),
        "--out-dir", str(tmp_path / "o"), "--k", "2", "--seed", "1",
    ])
    assert code == 4  # constant column


def test_bad_config_value_exits_2(tmp_path, capsys):
    config = tmp_path / "c.ini"
    config.write_text("[pipeline]\ncorrelation_threshold = 2.0\n")
    assert main(["run-all", "--config", str(config)]) == 2


def test_evaluate_requires_persisted_model(tmp_path, capsys):
    assert main(["evaluate", "--out-dir", str(tmp_path / "empty")]) == 3
    assert "fit" in capsys.readouterr().err


def test_export_geojson_requires_boundaries(inputs, tmp_path, capsys):
    base, table, schema, _ = inputs
    config = write_config(base, table, schema, tmp_path / "o", run_kselect="never")
    assert main(["export-geojson", "--config", str(config)]) == 2


def test_subcommand_prints_summary(inputs, tmp_path, capsys):
    base, table, schema, _ = inputs
    out = tmp_path / "o"
    config = write_config(base, table, schema, out, run_kselect="never")
    assert main(["fit", "--config", str(config)]) == 0
    assert "wcss=" in capsys.readouterr().out
    assert main(["profile", "--config", str(config)]) == 0
    assert "at-risk clusters" in capsys.readouterr().out
