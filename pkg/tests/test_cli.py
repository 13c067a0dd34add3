import json

import pytest

from cutfrac.cli import RunConfig, main, parse_config
from cutfrac.errors import ParameterError


def test_defaults_from_empty_file(tmp_path):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text("{}")
    cfg = parse_config(cfg_file)
    assert cfg.tau1 == 0.01 and cfg.tau2 == 0.001 and cfg.nx == [10]


def test_flags_override_file(tmp_path):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"tau2": 0.01, "nx": 8}))
    cfg = parse_config(cfg_file, tau2=0.0)
    assert cfg.tau2 == 0.0 and cfg.nx == [8]


@pytest.mark.parametrize("bad", [{"tau1": -1}, {"tau2": -0.1}, {"nx": 1}, {"unknown": 3}])
def test_invalid_configs(tmp_path, bad):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps(bad))
    with pytest.raises(ParameterError):
        parse_config(cfg_file)


def test_malformed_json(tmp_path):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text("{nope")
    with pytest.raises(ParameterError):
        parse_config(cfg_file)


def test_output_dir_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("CUTFRAC_OUT", str(tmp_path))
    assert RunConfig().output_dir == tmp_path


def test_run_writes_artifacts(tmp_path, capsys):
    assert main(["run", "example1", "--nx", "10", "--vtk", "--csv", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "L2 error" in out and "dofs=163" in out
    assert (tmp_path / "example1_nx10.vtk").exists()
    assert (tmp_path / "example1_nx10.csv").exists()


def test_run_reports_point_balance(tmp_path, capsys):
    assert main(["run", "example4", "--nx", "8", "--out", str(tmp_path)]) == 0
    assert "balance upwind" in capsys.readouterr().out


def test_deterministic_runs_bitwise_identical(tmp_path):
    for k in (1, 2):
        assert main(["run", "example2", "--nx", "8", "--csv", "--deterministic",
                     "--out", str(tmp_path / str(k))]) == 0
    a = (tmp_path / "1" / "example2_nx8.csv").read_bytes()
    b = (tmp_path / "2" / "example2_nx8.csv").read_bytes()
    assert a == b


def test_run_from_json_file(tmp_path):
    from cutfrac.presets import preset_json

    path = tmp_path / "dom.json"
    path.write_text(json.dumps(preset_json("example3")))
    assert main(["run", str(path), "--nx", "6", "--out", str(tmp_path)]) == 0


def test_unknown_preset_is_usage_error():
    with pytest.raises(SystemExit) as err:
        main(["run", "example42"])
    assert err.value.code == 2


def test_converge_needs_three_levels(tmp_path, capsys):
    assert main(["converge", "example2", "--nx", "5,10", "--out", str(tmp_path)]) == 2


def test_converge_table(tmp_path, capsys):
    assert main(["converge", "example2", "--nx", "10,20,40", "--enforce", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "converge_example2.csv").read_text().splitlines()
    assert lines[0] == "nx,h,dofs,l2,energy,rate_l2,rate_energy"
    assert len(lines) == 4


def test_check_command(tmp_path, capsys):
    assert main(["check", "example5", "--nx", "8", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") == 6


def test_variant_option(tmp_path, capsys):
    assert main(["run", "example4", "--variant", "diff", "--nx", "8", "--out", str(tmp_path)]) == 0
    assert "example4/diff" in capsys.readouterr().out


def test_run_with_check_flag(tmp_path, capsys):
    assert main(["run", "example4", "--nx", "8", "--check", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "balance upwind" in out and "PASS discrete coercivity identity" in out
