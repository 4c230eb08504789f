import json
from pathlib import Path

import pytest

import qugrid.cli as cli
from qugrid.config import (SCHEMA_VERSION, apply_override, parse_scenario,
                           parse_scenario_dict)
from qugrid.errors import ParseError, ValidationError
from qugrid.network import TopologyKind

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "qugrid" / "scenarios"


def minimal(**extra):
    data = {"schema_version": SCHEMA_VERSION, "name": "t", "duration_s": 60.0}
    data.update(extra)
    return data


# -------------------------------------------------------------------- parsing

def test_shipped_baseline_parses():
    config = parse_scenario(SCENARIOS / "baseline_star5.json")
    assert config.n_nodes == 5
    assert config.duration_s == 3600.0
    assert config.topology_kind is TopologyKind.STAR


def test_all_shipped_scenarios_parse():
    files = sorted(SCENARIOS.glob("*.json"))
    assert len(files) >= 12
    for path in files:
        parse_scenario(path)


def test_unknown_key_rejected_with_path():
    with pytest.raises(ValidationError) as err:
        parse_scenario_dict(minimal(links={"loss_prob": 0.1, "latencyy_ms": 1.0}))
    assert "latencyy_ms" in str(err.value)


def test_out_of_range_loss_prob():
    with pytest.raises(ValidationError) as err:
        parse_scenario_dict(minimal(links={"loss_prob": 1.5}))
    assert err.value.path == "links.loss_prob"


def test_wrong_schema_version():
    with pytest.raises(ValidationError):
        parse_scenario_dict({"schema_version": 99})


def test_priority_tiers_must_sum_to_one():
    with pytest.raises(ValidationError) as err:
        parse_scenario_dict(minimal(physical={"priority_tiers": [["a", 0.5], ["b", 0.4]]}))
    assert err.value.path == "physical.priority_tiers"


def test_attack_window_validation():
    with pytest.raises(ValidationError):
        parse_scenario_dict(minimal(attacks=[{
            "kind": "fdi", "intensity": "S3", "windows": [[10, 5]],
            "participants": [1], "targets": [2]}]))


def test_unknown_attack_kind():
    with pytest.raises(ValidationError) as err:
        parse_scenario_dict(minimal(attacks=[{"kind": "zero_day"}]))
    assert "zero_day" in str(err.value)


def test_sweep_axis_validation():
    with pytest.raises(ValidationError):
        parse_scenario_dict(minimal(sweep={"axis": "bogus", "values": [1]}))


def test_missing_file_is_parse_error(tmp_path):
    with pytest.raises(ParseError):
        parse_scenario(tmp_path / "nope.json")


def test_invalid_json_is_parse_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ParseError):
        parse_scenario(path)


def test_apply_override_nested_and_typed():
    data = minimal()
    apply_override(data, "links.loss_prob", "0.25")
    apply_override(data, "defense.tier", "quantum")
    assert data["links"]["loss_prob"] == 0.25
    assert data["defense"]["tier"] == "quantum"


# ------------------------------------------------------------------------ cli

def write_tiny(tmp_path, **extra):
    data = minimal(topology={"kind": "star", "n_nodes": 4}, duration_s=30.0, **extra)
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(data))
    return path


def test_cli_validate_ok(tmp_path, capsys):
    path = write_tiny(tmp_path)
    assert cli.main(["validate", "--scenario", str(path)]) == 0
    assert "ok:" in capsys.readouterr().out


def test_cli_validate_failure_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(minimal(links={"loss_prob": 2.0})))
    assert cli.main(["validate", "--scenario", str(path)]) == 1


def test_cli_run_writes_outputs(tmp_path):
    path = write_tiny(tmp_path)
    out = tmp_path / "out"
    assert cli.main(["run", "--scenario", str(path), "--out", str(out)]) == 0
    for name in ("timeseries.csv", "messages.csv", "summary.json"):
        assert (out / name).exists()


def test_cli_run_deterministic_bytes(tmp_path):
    path = write_tiny(tmp_path)
    assert cli.main(["run", "--scenario", str(path), "--seed", "7",
                     "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["run", "--scenario", str(path), "--seed", "7",
                     "--out", str(tmp_path / "b")]) == 0
    assert ((tmp_path / "a" / "summary.json").read_bytes()
            == (tmp_path / "b" / "summary.json").read_bytes())
    assert ((tmp_path / "a" / "messages.csv").read_bytes()
            == (tmp_path / "b" / "messages.csv").read_bytes())


def test_cli_run_override(tmp_path):
    path = write_tiny(tmp_path)
    out = tmp_path / "ovr"
    assert cli.main(["run", "--scenario", str(path), "--out", str(out),
                     "--override", "defense.tier=quantum"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["tier"] == "quantum"


def test_cli_run_unwritable_out(tmp_path):
    path = write_tiny(tmp_path)
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    code = cli.main(["run", "--scenario", str(path), "--out", str(blocker / "x")])
    assert code == 2


def test_cli_sweep_parallel_matches_serial(tmp_path):
    data = minimal(topology={"kind": "star", "n_nodes": 4}, duration_s=30.0,
                   sweep={"axis": "defense_tier", "values": ["none", "quantum"],
                          "seeds": [1, 2]})
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps(data))
    assert cli.main(["sweep", "--scenario", str(path),
                     "--out", str(tmp_path / "s1"), "--parallel", "1"]) == 0
    assert cli.main(["sweep", "--scenario", str(path),
                     "--out", str(tmp_path / "s8"), "--parallel", "8"]) == 0
    assert ((tmp_path / "s1" / "sweep_summary.csv").read_bytes()
            == (tmp_path / "s8" / "sweep_summary.csv").read_bytes())


def test_cli_sweep_cell_layout(tmp_path):
    data = minimal(topology={"kind": "star", "n_nodes": 4}, duration_s=30.0,
                   sweep={"axis": "n_nodes", "values": [4, 5], "seeds": [1]})
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps(data))
    out = tmp_path / "cells"
    assert cli.main(["sweep", "--scenario", str(path), "--out", str(out)]) == 0
    assert (out / "n_nodes=4" / "seed=1" / "summary.json").exists()
    assert (out / "n_nodes=5" / "seed=1" / "summary.json").exists()
    assert (out / "sweep_summary.csv").exists()


def test_cli_sweep_partial_failure(tmp_path):
    # an unwritable cell fails that cell, reports it, and exits 3
    data = minimal(topology={"kind": "star", "n_nodes": 4}, duration_s=20.0,
                   sweep={"axis": "seed", "values": [1, 2], "seeds": [1]})
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps(data))
    out = tmp_path / "partial"
    out.mkdir()
    (out / "seed=2").write_text("")  # file blocks the cell directory
    code = cli.main(["sweep", "--scenario", str(path), "--out", str(out)])
    assert code == 3
    assert (out / "seed=1" / "seed=1" / "summary.json").exists()


def test_cli_analytic_curves(tmp_path):
    out = tmp_path / "curves"
    assert cli.main(["analytic", "--curves", "swap_scaling", "--out", str(out)]) == 0
    text = (out / "swap_scaling.csv").read_text().splitlines()
    assert text[0] == "qber_per_hop,hops,qber_e2e,key_rate_factor"
    assert len(text) == 1 + 4 * 8


def test_cli_analytic_scenario_mode(tmp_path):
    assert cli.main(["analytic", "--scenario",
                     str(SCENARIOS / "fig5_distillation.json"),
                     "--out", str(tmp_path / "d")]) == 0
    assert (tmp_path / "d" / "distillation.csv").exists()


def test_cli_run_analytic_scenario(tmp_path):
    out = tmp_path / "swap"
    assert cli.main(["run", "--scenario", str(SCENARIOS / "fig4_swap_scaling.json"),
                     "--out", str(out)]) == 0
    assert (out / "swap_scaling.csv").exists()


def test_cli_out_root_env(tmp_path, monkeypatch):
    path = write_tiny(tmp_path)
    monkeypatch.setenv("QUGRID_OUT_ROOT", str(tmp_path / "root"))
    assert cli.main(["run", "--scenario", str(path)]) == 0
    # output lands under the env root, named after the scenario's name field
    assert (tmp_path / "root" / "t" / "summary.json").exists()
