import json
import math
import subprocess
import sys

import pytest

from dwlattice import io
from dwlattice.cli import COMMANDS, STOCHASTIC, run_command


# -- config ---------------------------------------------------------------------

def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "empty.toml"
    p.write_text("")
    assert io.parse_config(p) == io.parse_config(None) == io.defaults()


def test_defaults_round_trip_through_toml(tmp_path):
    p = tmp_path / "d.toml"
    p.write_text(io.defaults_toml())
    assert io.parse_config(p) == io.defaults()


@pytest.mark.parametrize("text, fragment", [
    ("[controls]\nbogus = 1\n", "unknown key controls.bogus"),
    ("[nope]\nx = 1\n", "unknown section [nope]"),
    ("[controls]\nv_half = \"deep\"\n", "controls.v_half"),
    ("[controls]\ndx = 0.5\n", "controls.dx"),
    ("[noise]\nsigma_shot = -3.0\n", "noise.sigma_shot"),
    ("[grid]\nn = 4\n", "grid"),
    ("[experiment]\nthetas = 2\n", "experiment.thetas"),
    ("[experiment]\nselective_pulse = \"right\"\n", "experiment.selective_pulse"),
])
def test_config_errors_name_the_key(tmp_path, text, fragment):
    p = tmp_path / "bad.toml"
    p.write_text(text)
    with pytest.raises(io.ConfigError) as exc:
        io.parse_config(p)
    assert fragment in str(exc.value)


def test_syntax_error_reports_location(tmp_path):
    p = tmp_path / "broken.toml"
    p.write_text("[controls]\nv_half = = 3\n")
    with pytest.raises(io.ConfigError, match=r"line 2"):
        io.parse_config(p)


def test_int_accepted_for_float_but_not_reverse():
    assert io.parse_config(None, {"controls": {"v_half": 70}})["controls"]["v_half"] == 70.0
    with pytest.raises(io.ConfigError, match="grid.n"):
        io.parse_config(None, {"grid": {"n": 64.0}})


def test_presets_parse():
    for name in ("fig3", "fig4", "fig4b", "fig5", "ramsey", "echo"):
        cfg = io.parse_config(name)
        assert cfg["experiment"]["name"]


def test_search_path_env(tmp_path, monkeypatch):
    (tmp_path / "mine.toml").write_text("[grid]\nn = 64\n")
    monkeypatch.setenv(io.CONFIG_PATH_ENV, str(tmp_path))
    assert io.parse_config("mine")["grid"]["n"] == 64
    with pytest.raises(io.ConfigError, match="not found"):
        io.parse_config("absent")


# -- output ---------------------------------------------------------------------

def test_csv_round_trip_and_format(tmp_path):
    rows = [(0.1, 1, "a"), (1 / 3, -2, "b")]
    p = io.emit_series(tmp_path / "x.csv", ["f", "i", "s"], rows)
    raw = p.read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    header, body = io.read_series(p)
    assert header == ["f", "i", "s"]
    assert float(body[1][0]) == 1 / 3  # repr keeps every bit


def test_csv_header_only(tmp_path):
    p = io.emit_series(tmp_path / "empty.csv", ["a", "b"], [])
    assert p.read_text() == "a,b\n"


@pytest.mark.parametrize("bad", [math.nan, math.inf])
def test_csv_rejects_non_finite_without_writing(tmp_path, bad):
    with pytest.raises(ValueError, match="non-finite"):
        io.emit_series(tmp_path / "bad.csv", ["a"], [(1.0,), (bad,)])
    assert not (tmp_path / "bad.csv").exists()


def test_csv_rejects_ragged_rows(tmp_path):
    with pytest.raises(ValueError, match="row 1"):
        io.emit_series(tmp_path / "r.csv", ["a", "b"], [(1, 2), (3,)])


def test_json_non_finite_becomes_null(tmp_path):
    p = io.write_json(tmp_path / "s.json", {"b": math.inf, "a": [1.0, math.nan]})
    assert json.loads(p.read_text()) == {"a": [1.0, None], "b": None}


# -- cli ------------------------------------------------------------------------

def test_commands_listed():
    assert set(STOCHASTIC) <= set(COMMANDS)


def test_missing_seed_is_usage_error(tmp_path):
    for cmd in STOCHASTIC:
        assert run_command([cmd, "--out", str(tmp_path)]) == 2


def test_unknown_command_and_bad_set(tmp_path):
    assert run_command(["fly"]) == 2
    assert run_command(["potential", "--out", str(tmp_path), "--set", "novalue"]) == 2


def test_potential_writes_outputs(tmp_path):
    out = tmp_path / "pot"
    assert run_command(["potential", "--out", str(out), "--dx", "-0.45", "--samples", "64"]) == 0
    header, rows = io.read_series(out / "potential.csv")
    assert header == ["x_over_lambda", "v_m0_ER", "v_mminus1_ER", "beff_kHz"]
    assert len(rows) == 64
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["error"] is None
    assert manifest["outputs"]["potential.csv"] == io.sha256_file(out / "potential.csv")
    assert manifest["config"]["controls"]["dx"] == -0.45


def test_validation_error_exit_code_and_manifest(tmp_path):
    out = tmp_path / "bad"
    assert run_command(["potential", "--out", str(out), "--dx", "0.3"]) == 1
    manifest = json.loads((out / "manifest.json").read_text())
    assert "controls.dx" in manifest["error"]
    assert run_command(["potential", "--out", str(out), "--set", "controls.bogus=1"]) == 1


def test_calibrate_command(tmp_path):
    out = tmp_path / "cal"
    assert run_command(["calibrate", "--out", str(out), "--splitting", "20000", "--set", "grid.n=64"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["converged"] is True


def test_rabi_deterministic(tmp_path):
    args = ["--seed", "3", "--set", "experiment.points=50", "--set", "experiment.max_duration=300.0",
            "--set", "noise.sigma_spatial=800.0"]
    assert run_command(["rabi", "--out", str(tmp_path / "a")] + args) == 0
    assert run_command(["rabi", "--out", str(tmp_path / "b")] + args) == 0
    assert (tmp_path / "a" / "rabi.csv").read_bytes() == (tmp_path / "b" / "rabi.csv").read_bytes()
    assert run_command(["rabi", "--out", str(tmp_path / "c"), "--seed", "4"] + args[2:]) == 0
    assert (tmp_path / "a" / "rabi.csv").read_bytes() != (tmp_path / "c" / "rabi.csv").read_bytes()


def test_print_defaults_and_entry_point():
    r = subprocess.run([sys.executable, "-m", "dwlattice.cli", "--print-defaults"], capture_output=True, text=True)
    assert r.returncode == 0 and "[controls]" in r.stdout
