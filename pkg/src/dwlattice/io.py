"""Configuration files, CSV/JSON emission and run manifests."""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from dwlattice.constants import DEFAULT_B0, BiasField, PhysicalConstants

CONFIG_PATH_ENV = "DWLATTICE_CONFIG_PATH"
PRESET_DIR = Path(__file__).with_name("presets")

_C = PhysicalConstants()

DEFAULTS = {
    "constants": {
        "wavelength": _C.wavelength,
        "alpha_s": _C.alpha_s,
        "alpha_v": _C.alpha_v,
        "gF_muB": _C.gF_muB,
        "q_quad": _C.q_quad,
        "b0": DEFAULT_B0,
    },
    "controls": {"v_half": 80.0, "v_lambda": 20.0, "dx": -0.5, "pol_phase": 0.0, "total_scale": 1.0},
    "noise": {"sigma_shot": 0.0, "diffusion": 0.0, "sigma_spatial": 0.0},
    "grid": {"n": 256, "length": 1.0},
    "schedule": {
        "dt": 0.02,
        "start_depth": 100.0,
        "start_dx": -0.62,
        "intensity_ratio": 0.95,
        "pol_phase": -math.pi / 2,
        "step1_duration": 300.0,
        "step2_duration": 100.0,
        "step1_shape": "minimum_jerk",
        "step2_shape": "linear",
    },
    "experiment": {
        "name": "",
        "scan_start": -0.5,
        "scan_stop": -0.3,
        "points": 21,
        "splitting": 32e3,
        "pulse_time": 30.0,
        "span": 40e3,
        "rabi": 15.8e3,
        "max_duration": 1600.0,
        "delays": [0.0, 50.0, 100.0, 150.0, 200.0, 300.0, 400.0, 600.0, 800.0, 1000.0],
        "thetas": 8,
        "n_shots": 50,
        "n_atoms": 200,
        "dx_final": -0.48,
        "echo_delay": 400.0,
        "transport_time": 370.0,
        "selective_pulse": "left",
        "transport": "simulated",
        "readout_fidelity": [1.0, 1.0],
    },
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key or location."""


def defaults() -> dict:
    return copy.deepcopy(DEFAULTS)


def defaults_toml() -> str:
    return tomli_w.dumps(DEFAULTS)


def _check_type(path: str, default, value):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int) and not isinstance(default, bool):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        if ok and not math.isfinite(value):
            raise ConfigError(f"{path} must be finite")
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, list):
        ok = isinstance(value, list)
    else:
        ok = True
    if not ok:
        raise ConfigError(f"{path} has type {type(value).__name__}, expected {type(default).__name__}")
    return float(value) if isinstance(default, float) else value


def merge(base: dict, overrides: dict, where: str = "") -> dict:
    """Apply ``overrides`` onto ``base``, rejecting keys that ``base`` does not have."""
    out = copy.deepcopy(base)
    for section, body in overrides.items():
        loc = f"{where}{section}"
        if section not in out:
            raise ConfigError(f"unknown section [{loc}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{loc}] must be a table")
        for key, value in body.items():
            if key not in out[section]:
                raise ConfigError(f"unknown key {loc}.{key}")
            out[section][key] = _check_type(f"{loc}.{key}", DEFAULTS[section][key], value)
    return out


def resolve_path(name: str) -> Path:
    """Find a config file directly, then in the search path, then among the presets."""
    p = Path(name)
    if p.is_file():
        return p
    dirs = [d for d in os.environ.get(CONFIG_PATH_ENV, "").split(os.pathsep) if d]
    candidates = [name] if p.suffix else [name, name + ".toml"]
    for d in dirs + [str(PRESET_DIR)]:
        for cand in candidates:
            q = Path(d) / cand
            if q.is_file():
                return q
    raise ConfigError(f"config {name!r} not found (searched {CONFIG_PATH_ENV} and presets)")


def parse_config(path=None, overrides: dict | None = None) -> dict:
    """Load a TOML file over the defaults and validate it."""
    cfg = defaults()
    if path is not None:
        p = resolve_path(str(path))
        try:
            text = p.read_bytes().decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ConfigError(f"{p}: not UTF-8 ({exc})") from None
        try:
            data = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{p}: {exc}") from None
        cfg = merge(cfg, data)
    if overrides:
        cfg = merge(cfg, overrides)
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    """Build every domain object once so invariant errors surface with key paths."""
    build_constants(cfg)
    build_bias(cfg)
    build_controls(cfg)
    build_noise(cfg, seed=0)
    build_grid(cfg)
    build_transport(cfg)
    e = cfg["experiment"]
    if e["points"] < 1:
        raise ConfigError("experiment.points must be >= 1")
    if e["points"] > 1 and e["scan_start"] == e["scan_stop"]:
        raise ConfigError("experiment.scan_start equals experiment.scan_stop")
    if e["thetas"] < 4:
        raise ConfigError("experiment.thetas must be >= 4")
    if e["n_shots"] < 1 or e["n_atoms"] < 1:
        raise ConfigError("experiment.n_shots and experiment.n_atoms must be >= 1")
    if e["selective_pulse"] not in ("left", "global", "none"):
        raise ConfigError("experiment.selective_pulse must be left, global or none")
    if e["transport"] not in ("simulated", "ideal"):
        raise ConfigError("experiment.transport must be simulated or ideal")
    if len(e["readout_fidelity"]) != 2 or not all(0 <= float(v) <= 1 for v in e["readout_fidelity"]):
        raise ConfigError("experiment.readout_fidelity must be two numbers in [0, 1]")
    if any(float(d) < 0 for d in e["delays"]):
        raise ConfigError("experiment.delays must be >= 0")


def _wrap(section: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        msg = str(exc)
        if f"{section}." not in msg:
            msg = f"{section}: {msg}"
        raise ConfigError(msg) from None


def build_constants(cfg: dict) -> PhysicalConstants:
    k = cfg["constants"]
    return _wrap("constants", PhysicalConstants, wavelength=k["wavelength"], alpha_s=k["alpha_s"],
                 alpha_v=k["alpha_v"], gF_muB=k["gF_muB"], q_quad=k["q_quad"])


def build_bias(cfg: dict) -> BiasField:
    return _wrap("constants", BiasField, magnitude=cfg["constants"]["b0"])


def build_controls(cfg: dict):
    from dwlattice.field import LatticeControls
    return _wrap("controls", LatticeControls, **cfg["controls"])


def build_noise(cfg: dict, seed: int):
    from dwlattice.ensemble import NoiseModel
    return _wrap("noise", NoiseModel, seed=seed, **cfg["noise"])


def build_grid(cfg: dict):
    from dwlattice.stationary import Grid1D
    return _wrap("grid", Grid1D, **cfg["grid"])


def build_transport(cfg: dict):
    from dwlattice.dynamics import TransportConfig
    return _wrap("schedule", TransportConfig, **cfg["schedule"])


# -- output ----------------------------------------------------------------------

def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if not math.isfinite(f):
            raise ValueError(f"non-finite value {f!r} in output")
        return repr(f)
    return str(v)


def emit_series(path, columns, rows) -> Path:
    """Write a CSV with a header row, repr floats and LF line endings.

    Every row is validated before the file is opened, so bad data never
    leaves a partial file behind.
    """
    path = Path(path)
    columns = list(columns)
    cells = []
    for i, row in enumerate(rows):
        row = list(row)
        if len(row) != len(columns):
            raise ValueError(f"row {i} has {len(row)} values, expected {len(columns)}")
        try:
            cells.append([_cell(v) for v in row])
        except ValueError as exc:
            raise ValueError(f"{path}: row {i}: {exc}") from None
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            w.writerows(cells)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_series(path) -> tuple[list, list]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else None
    return v


def write_json(path, data: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_jsonable(data), indent=2, sort_keys=True, allow_nan=False) + "\n"
    path.write_text(text, encoding="utf-8", newline="\n")
    return path


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    version: str
    command: str
    config: dict
    seed: int | None
    started: str = field(default_factory=_now)
    finished: str | None = None
    outputs: dict = field(default_factory=dict)  # file name -> sha256
    error: str | None = None

    def add_output(self, path) -> None:
        path = Path(path)
        self.outputs[path.name] = sha256_file(path)

    def write(self, directory) -> Path:
        self.finished = _now()
        return write_json(Path(directory) / "manifest.json", asdict(self))
