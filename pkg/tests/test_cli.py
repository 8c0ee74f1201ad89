import json

import pytest

from wgmbench.cli import SOLVE_COLUMNS, main


def test_solve_csv_to_stdout(capsys):
    assert main(["solve", "--scenario", "solve_210um"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("# wgmbench mode_table")
    assert lines[1] == ",".join(SOLVE_COLUMNS)
    assert len(lines) == 2 + 2 * 2  # TE/TM x two radial orders
    fsr = float(lines[2].split(",")[SOLVE_COLUMNS.index("fsr_hz")])
    assert fsr == pytest.approx(313.3e9, rel=1e-3)


def test_solve_json(tmp_path):
    out = tmp_path / "modes.json"
    assert main(["solve", "--scenario", "solve_210um", "--format", "json", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["kind"] == "mode_table" and len(data["rows"]) == 4


def test_synth_fit_report_pipeline(tmp_path, capsys):
    series = tmp_path / "series"
    assert main(["synth", "--scenario", "backscatter_doublet", "--out", str(series), "--seed", "99"]) == 0
    report = tmp_path / "fit.json"
    assert main(["fit", str(series), "--out", str(report)]) == 0
    text = capsys.readouterr().out
    assert "median doublet splitting" in text
    data = json.loads(report.read_text())
    assert data["series"] == "series"
    assert data["summary"]["trajectories"] == 1
    assert data["summary"]["median_splitting_hz"] == pytest.approx(539e3, rel=0.05)

    plots = tmp_path / "plots"
    assert main(["report", str(report), "--out", str(plots)]) == 0
    assert sorted(p.name for p in plots.iterdir()) == ["stack.csv", "trajectories.csv"]
    header = (plots / "trajectories.csv").read_text().splitlines()[1]
    assert header == "pzt_voltage_v,mode000_shift_hz"
    assert main(["report", str(report), "--out", str(plots), "--format", "json"]) == 0
    assert json.loads((plots / "plot_data.json").read_text())["kind"] == "plot_data"


def _error(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("wgmbench: error[")
    return err[0]


def test_exit_code_validation(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("wavelength: 8.0e-07\nsphere: {refractive_index: 1.45}\n")
    assert main(["solve", "--scenario", str(bad)]) == 2
    assert "error[E_VALIDATION] sphere.radius" in _error(capsys)


def test_exit_code_io(tmp_path, capsys):
    assert main(["fit", str(tmp_path / "nothing"), "--out", str(tmp_path / "r.json")]) == 3
    assert "error[E_IO]" in _error(capsys)


def test_exit_code_schema(tmp_path, capsys):
    r = tmp_path / "r.json"
    r.write_text(json.dumps({"schema_version": "9.0", "kind": "fit_report"}))
    assert main(["report", str(r), "--out", str(tmp_path / "o")]) == 4
    assert "schema_version" in _error(capsys)


def test_exit_code_compute(tmp_path, capsys):
    sc = tmp_path / "s.yaml"
    sc.write_text(
        "wavelength: 8.0e-07\n"
        "sphere: {radius: 1.0e-05, refractive_index: 1.45, attenuation_db_per_m: 0.003}\n"
        "solve: {radial_orders: 5, l_values: [20]}\n"
    )
    assert main(["solve", "--scenario", str(sc)]) == 5
    assert "n=5, l=20" in _error(capsys)


def test_bad_seed_is_usage_error(capsys):
    assert main(["synth", "--scenario", "backscatter_doublet", "--out", "x", "--seed", "-1"]) == 2
