"""Command-line entry point: ``dwlattice <command> [options]``.

Every command writes CSV data, a JSON summary and a manifest into ``--out``.
Exit status is 0 on success, 1 on a physics or validation error and 2 on a
usage error.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

import numpy as np

from dwlattice import __version__
from dwlattice import io

COMMANDS = ("potential", "spectrum", "transport-scan", "rabi", "ramsey", "echo",
            "interferometer", "calibrate", "selftest")
STOCHASTIC = ("transport-scan", "rabi", "ramsey", "echo")


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file, a name on $%s, or a preset" % io.CONFIG_PATH_ENV)
    common.add_argument("--out", default="dwlattice-out", help="output directory")
    common.add_argument("--seed", type=int, help="random seed (required for stochastic commands)")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (TOML syntax for the value)")

    ap = argparse.ArgumentParser(prog="dwlattice", description="Spin-dependent double-well lattice simulator")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--print-defaults", action="store_true", help="print the default config as TOML and exit")
    sub = ap.add_subparsers(dest="command")

    p = sub.add_parser("potential", parents=[common], help="spin-dependent potentials along the well axis")
    p.add_argument("--dx", type=float)
    p.add_argument("--v-half", type=float)
    p.add_argument("--v-lambda", type=float)
    p.add_argument("--pol-phase", type=float)
    p.add_argument("--samples", type=int, default=256)

    p = sub.add_parser("spectrum", parents=[common], help="sublattice-resolved rf spectroscopy")
    p.add_argument("--splitting", type=float, help="calibration target in Hz")

    p = sub.add_parser("transport-scan", parents=[common], help="transport sorting against dx")
    p.add_argument("--points", type=int)

    sub.add_parser("rabi", parents=[common], help="Rabi flopping read out through transport")
    sub.add_parser("ramsey", parents=[common], help="Ramsey contrast against delay")
    sub.add_parser("echo", parents=[common], help="spin-echo contrast against delay")

    p = sub.add_parser("interferometer", parents=[common], help="spin-dependent interferometer TOF profile")
    p.add_argument("--selective", choices=("left", "global", "none"))
    p.add_argument("--transport", choices=("simulated", "ideal"))

    p = sub.add_parser("calibrate", parents=[common], help="pol_phase for a target sublattice splitting")
    p.add_argument("--splitting", type=float, help="target in Hz")

    sub.add_parser("selftest", parents=[common], help="quick internal consistency checks")
    return ap


def _overrides(items) -> dict:
    out: dict = {}
    for item in items:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise UsageError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        section, name = key.strip().split(".", 1)
        try:
            parsed = io.tomli.loads(f"v = {value}")["v"]
        except io.tomli.TOMLDecodeError:
            parsed = value
        out.setdefault(section, {})[name] = parsed
    return out


def _flag_overrides(args) -> dict:
    o: dict = {}
    pairs = {
        "dx": ("controls", "dx"), "v_half": ("controls", "v_half"), "v_lambda": ("controls", "v_lambda"),
        "pol_phase": ("controls", "pol_phase"), "splitting": ("experiment", "splitting"),
        "points": ("experiment", "points"), "selective": ("experiment", "selective_pulse"),
        "transport": ("experiment", "transport"),
    }
    for attr, (section, key) in pairs.items():
        v = getattr(args, attr, None)
        if v is not None:
            o.setdefault(section, {})[key] = v
    return o


# -- commands -------------------------------------------------------------------

def cmd_potential(cfg, args, out: Path, seed):
    from dwlattice.dynamics import Propagator, bare_transition_frequency
    from dwlattice.stationary import Grid1D

    c, b = io.build_constants(cfg), io.build_bias(cfg)
    controls = io.build_controls(cfg)
    if args.samples < 16:
        raise ValueError("--samples must be >= 16")
    grid = Grid1D(args.samples)
    v_m1, v_0 = Propagator(c, b, grid).potentials(controls)
    v_m1 = v_m1 - bare_transition_frequency(c, b)
    er = c.recoil_energy
    rows = [(x, a / er, m / er, (m - a) * 1e-3) for x, a, m in zip(grid.x, v_0, v_m1)]
    f = io.emit_series(out / "potential.csv", ["x_over_lambda", "v_m0_ER", "v_mminus1_ER", "beff_kHz"], rows)
    summary = {"depth_m0_ER": float(np.ptp(v_0) / er), "depth_mminus1_ER": float(np.ptp(v_m1) / er),
               "beff_span_kHz": float(np.ptp(v_m1 - v_0) * 1e-3)}
    return [f], summary


def cmd_calibrate(cfg, args, out: Path, seed):
    from dwlattice.protocols import calibrate

    c, b, grid = io.build_constants(cfg), io.build_bias(cfg), io.build_grid(cfg)
    k = cfg["controls"]
    res = calibrate(cfg["experiment"]["splitting"], (k["v_half"], k["v_lambda"]), c, b, grid, dx=k["dx"])
    row = [res.controls.v_half, res.controls.v_lambda, res.controls.dx, res.controls.pol_phase,
           res.achieved["splitting"], res.achieved["nu_left"], res.achieved["nu_right"]]
    f = io.emit_series(out / "calibration.csv",
                       ["v_half_ER", "v_lambda_ER", "dx_over_lambda", "pol_phase", "splitting_Hz",
                        "nu_left_Hz", "nu_right_Hz"], [row])
    summary = {"converged": res.converged, "residual_Hz": res.residual, "message": res.message,
               "achieved": res.achieved, "pol_phase": res.controls.pol_phase}
    if not res.converged:
        raise ValueError(res.message or "calibration did not converge")
    return [f], summary


def cmd_spectrum(cfg, args, out: Path, seed):
    from dwlattice.dynamics import bare_transition_frequency
    from dwlattice.protocols import calibrate, exp_addressing_spectroscopy

    c, b, grid = io.build_constants(cfg), io.build_bias(cfg), io.build_grid(cfg)
    k, e = cfg["controls"], cfg["experiment"]
    cal = calibrate(e["splitting"], (k["v_half"], k["v_lambda"]), c, b, grid, dx=k["dx"])
    if not cal.converged:
        raise ValueError(cal.message)
    sp = exp_addressing_spectroscopy(cal.controls, c, b, grid, pulse_time=e["pulse_time"],
                                     points=e["points"], span=e["span"], dt=cfg["schedule"]["dt"])
    bare = bare_transition_frequency(c, b)
    rows = [((f - bare) * 1e-3, pl, pr) for f, pl, pr in zip(sp.frequencies, sp.p_remain_left, sp.p_remain_right)]
    f = io.emit_series(out / "spectrum.csv", ["rf_kHz_offset", "p_remain_L", "p_remain_R"], rows)
    summary = {"splitting_Hz": sp.measured_splitting, "center_left_kHz_offset": (sp.fit_left["center"] - bare) * 1e-3,
               "center_right_kHz_offset": (sp.fit_right["center"] - bare) * 1e-3, "crosstalk": sp.crosstalk,
               "pol_phase": cal.controls.pol_phase}
    return [f], summary


def cmd_transport_scan(cfg, args, out: Path, seed):
    from dwlattice.protocols import exp_transport_scan

    c, b, grid = io.build_constants(cfg), io.build_bias(cfg), io.build_grid(cfg)
    e = cfg["experiment"]
    dxs = np.linspace(e["scan_start"], e["scan_stop"], e["points"])
    scan = exp_transport_scan(dxs, c, b, grid, io.build_transport(cfg))
    rows = list(zip(scan.dx, scan.p_right_minus1, scan.p_right_0))
    f = io.emit_series(out / "transport_scan.csv", ["dx_over_lambda", "p_right_mminus1", "p_right_m0"], rows)
    summary = {"best_dx": scan.best_dx, "p_left_given_mminus1": scan.best_fidelity[0],
               "p_right_given_m0": scan.best_fidelity[1]}
    return [f], summary


def cmd_rabi(cfg, args, out: Path, seed):
    from dwlattice.protocols import exp_rabi_via_transport

    e = cfg["experiment"]
    res = exp_rabi_via_transport(e["rabi"], e["max_duration"], e["points"], io.build_noise(cfg, seed),
                                 tuple(e["readout_fidelity"]), e["n_shots"], e["n_atoms"])
    f = io.emit_series(out / "rabi.csv", ["time_us", "p_right"], list(zip(res.times, res.p_right)))
    summary = {"frequency_Hz": res.fit["frequency"] * 1e6, "decay_time_us": res.fit["decay_time"],
               "amplitude": res.fit["amplitude"], "fit_converged": res.fit.converged, "fit_flags": res.fit.flags}
    return [f], summary


def _interference(kind, cfg, out: Path, seed):
    from dwlattice.ensemble import echo_experiment, one_over_e_time, ramsey_experiment

    e = cfg["experiment"]
    thetas = np.linspace(0, 2 * np.pi, e["thetas"], endpoint=False)
    fn = ramsey_experiment if kind == "ramsey" else echo_experiment
    scan = fn([float(d) for d in e["delays"]], thetas, io.build_noise(cfg, seed), e["n_shots"], e["n_atoms"])
    f1 = io.emit_series(out / f"{kind}_contrast.csv", ["delay_us", "contrast", "shot_contrast", "fit_ok"],
                        list(zip(scan.delays, scan.contrast, scan.shot_contrast, scan.fit_ok)))
    rows = [(d, th, scan.mean_p0[i, j]) for i, d in enumerate(scan.delays) for j, th in enumerate(scan.thetas)]
    f2 = io.emit_series(out / f"{kind}_interferogram.csv", ["delay_us", "theta", "p0_mean"], rows)
    summary = {"fast_time_us": one_over_e_time(scan.delays, scan.contrast),
               "slow_time_us": one_over_e_time(scan.delays, scan.shot_contrast)}
    return [f1, f2], summary


def cmd_ramsey(cfg, args, out, seed):
    return _interference("ramsey", cfg, out, seed)


def cmd_echo(cfg, args, out, seed):
    return _interference("echo", cfg, out, seed)


def cmd_interferometer(cfg, args, out: Path, seed):
    from dwlattice.protocols import exp_interferometer

    c, b, grid = io.build_constants(cfg), io.build_bias(cfg), io.build_grid(cfg)
    e = cfg["experiment"]
    tcfg = io.build_transport(cfg)
    res = exp_interferometer(c, b, grid, dx_final=e["dx_final"], echo_delay=e["echo_delay"],
                             transport_time=e["transport_time"], selective_pulse=e["selective_pulse"],
                             dt=tcfg.dt, config=tcfg, transport=e["transport"])
    prof = res.profile
    f = io.emit_series(out / "tof.csv", ["momentum_hbar_k", "density"], list(zip(prof.momentum, prof.density)))
    P = res.site_populations
    summary = {"visibility": prof.visibility, "fringe_period_hbar_k": prof.fringe_period,
               "sites_after_transport": {"mminus1_L": P[0, 0], "mminus1_R": P[0, 1], "m0_L": P[1, 0], "m0_R": P[1, 1]}}
    return [f], summary


def cmd_selftest(cfg, args, out: Path, seed):
    from dwlattice.constants import PhysicalConstants
    from dwlattice.ensemble import NoiseModel, Pulse, PulseSequence, simulate_sequence

    checks = {}
    c = PhysicalConstants()
    checks["recoil_kHz"] = abs(c.recoil_energy - 3.5e3) / 3.5e3 < 0.03
    r = simulate_sequence(PulseSequence((Pulse(1e4, 50.0),)), NoiseModel(), 1, 1)
    checks["pi_pulse"] = abs(r.mean_p0 - 1) < 1e-10
    rows = [(0.1, 1 / 3, 2.0**-40)]
    f = io.emit_series(out / "selftest.csv", ["a", "b", "c"], rows)
    _, back = io.read_series(f)
    checks["csv_roundtrip"] = [float(v) for v in back[0]] == list(rows[0])
    if not all(checks.values()):
        raise ValueError(f"selftest failed: {checks}")
    return [f], checks


HANDLERS = {
    "potential": cmd_potential, "spectrum": cmd_spectrum, "transport-scan": cmd_transport_scan,
    "rabi": cmd_rabi, "ramsey": cmd_ramsey, "echo": cmd_echo, "interferometer": cmd_interferometer,
    "calibrate": cmd_calibrate, "selftest": cmd_selftest,
}


def run_command(argv=None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.print_defaults:
        sys.stdout.write(io.defaults_toml())
        return 0
    if args.command is None:
        ap.print_usage(sys.stderr)
        return 2
    if args.command in STOCHASTIC and args.seed is None:
        print(f"dwlattice {args.command}: --seed is required", file=sys.stderr)
        return 2
    try:
        overrides = _overrides(args.set)
        for section, body in _flag_overrides(args).items():
            overrides.setdefault(section, {}).update(body)
    except UsageError as exc:
        print(f"dwlattice: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    manifest = io.RunManifest(__version__, args.command, {}, args.seed)
    code = 0
    try:
        cfg = io.parse_config(args.config, overrides)
        manifest.config = cfg
        files, summary = HANDLERS[args.command](cfg, args, out, args.seed)
        summary = {"command": args.command, "seed": args.seed, **summary}
        files.append(io.write_json(out / "summary.json", summary))
        for f in files:
            manifest.add_output(f)
    except (ValueError, ArithmeticError, OSError) as exc:
        print(f"dwlattice {args.command}: error: {exc}", file=sys.stderr)
        manifest.error = "".join(traceback.format_exception_only(type(exc), exc)).strip()
        code = 1
    try:
        manifest.write(out)
    except OSError as exc:
        print(f"dwlattice: cannot write manifest: {exc}", file=sys.stderr)
        code = code or 1
    return code


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
