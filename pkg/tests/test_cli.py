import csv

import pytest
import yaml

from cfdfin.cli import main


def _config(tmp_path, **overrides):
    raw = {"schema_version": 1, "name": "cli", "seed": 1,
           "data": {"synthetic": {"n_years": 2, "n_parks": 2}},
           "contracts": ["merchant", "2cfd_hourly"], "output": {"dir": "out"}}
    raw.update(overrides)
    path = tmp_path / "scenario.yaml"
    path.write_text(yaml.safe_dump(raw))
    return path


def test_run_writes_under_config_dir(tmp_path, monkeypatch):
    monkeypatch.delenv("CFDFIN_OUTPUT_ROOT", raising=False)
    assert main(["run", str(_config(tmp_path))]) == 0
    assert (tmp_path / "out" / "cli" / "lcoe.csv").is_file()


def test_output_root_env_and_seed_override(tmp_path, monkeypatch):
    root = tmp_path / "elsewhere"
    monkeypatch.setenv("CFDFIN_OUTPUT_ROOT", str(root))
    cfg = _config(tmp_path)
    assert main(["run", str(cfg), "--seed", "2"]) == 0
    a = (root / "cli" / "risk_summary.csv").read_bytes()
    assert main(["run", str(cfg)]) == 0
    b = (root / "cli" / "risk_summary.csv").read_bytes()
    assert a != b
    assert '"seed": 1' in (root / "cli" / "manifest.json").read_text()


def test_validate(tmp_path, capsys):
    assert main(["validate", str(_config(tmp_path))]) == 0
    assert "ok: cli, 2 parks" in capsys.readouterr().out


@pytest.mark.parametrize("overrides", [
    {"surprise": 1},
    {"costs": {"capex": 1500, "tax": 0.3}},
    {"contracts": ["2cfd_weekly"]},
    {"contracts": []},
    {"schema_version": 2},
    {"grid": {"capex": [2000, 1000], "opex": [50]}},
])
def test_config_errors_exit_1(tmp_path, overrides, capsys):
    assert main(["validate", str(_config(tmp_path, **overrides))]) == 1
    assert "error:" in capsys.readouterr().err


def test_missing_config_and_missing_data(tmp_path):
    assert main(["run", str(tmp_path / "absent.yaml")]) == 1
    files = {"files": {"price": "p.csv", "fleet": "f.csv", "parks": [{"id": "A", "path": "a.csv", "capacity_mw": 3}]}}
    assert main(["run", str(_config(tmp_path, data=files))]) == 1


def test_malformed_data_exits_2(tmp_path):
    (tmp_path / "p.csv").write_text("timestamp,price_eur_mwh\n2020-01-01T00:00Z,oops\n")
    (tmp_path / "f.csv").write_text("timestamp,generation_mwh,capacity_mw\n2020-01-01T00:00Z,1,2\n")
    (tmp_path / "a.csv").write_text("timestamp,generation_mwh\n2020-01-01T00:00Z,1\n")
    files = {"files": {"price": "p.csv", "fleet": "f.csv", "parks": [{"id": "A", "path": "a.csv", "capacity_mw": 3}]}}
    assert main(["run", str(_config(tmp_path, data=files))]) == 2


def test_unfinanceable_costs_exit_3_and_leave_nothing(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("CFDFIN_OUTPUT_ROOT", raising=False)
    assert main(["run", str(_config(tmp_path, costs={"capex": 1e7}))]) == 3
    err = capsys.readouterr().err
    assert "park P01" in err and "contract 2cfd_hourly" in err
    assert not (tmp_path / "out" / "cli").exists() or not any((tmp_path / "out" / "cli").iterdir())


def test_synth_export(tmp_path):
    out = tmp_path / "data"
    assert main(["synth", str(_config(tmp_path)), "--out", str(out)]) == 0
    assert (out / "data.yaml").is_file()
    with open(out / "price.csv", newline="") as fh:
        assert next(csv.reader(fh)) == ["timestamp", "price_eur_mwh"]


def test_grid_without_section_exits_1(tmp_path):
    assert main(["grid", str(_config(tmp_path))]) == 1
