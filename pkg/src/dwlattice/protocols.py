"""Experiment scripts built from the field, stationary, dynamics and ensemble layers,
plus the solver that picks lattice controls for a target sublattice splitting."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from dwlattice.constants import BiasField, PhysicalConstants
from dwlattice.dynamics import (
    CELL_BARRIER,
    ControlSchedule,
    Propagator,
    RfPulse,
    SpinorState,
    TofProfile,
    TransportConfig,
    hold,
    measure_site_populations,
    momentum_distribution,
    transport_initial_state,
)
from dwlattice.ensemble import NoiseModel, rabi_experiment
from dwlattice.field import LatticeControls
from dwlattice.fitting import FitResult, fit_damped_sine, fit_rabi_lineshape
from dwlattice.stationary import Grid1D, TransitionTable, site_spectrum, transition_frequencies

# Double-well configuration used for sublattice addressing: deep lambda/2
# lattice with a weak symmetric lambda lattice that supplies the vertical
# polarization needed for an effective magnetic field.
ADDRESSING_DEPTHS = (80.0, 20.0)
# Best sorting point of the default transport ramp (see exp_transport_scan).
DEFAULT_TRANSPORT_DX = -0.48


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    scan_start: float = -0.5
    scan_stop: float = -0.3
    points: int = 21
    seed: int | None = None
    output: str | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.points < 1:
            raise ValueError("experiment.points must be >= 1")
        if self.points > 1 and self.scan_start == self.scan_stop:
            raise ValueError("experiment scan range is empty")

    def scan_values(self) -> np.ndarray:
        return np.linspace(self.scan_start, self.scan_stop, self.points)


@dataclass
class CalibrationResult:
    controls: LatticeControls
    achieved: dict
    residual: float
    converged: bool
    message: str = ""


def sublattice_transitions(controls: LatticeControls, c: PhysicalConstants, b: BiasField,
                           grid: Grid1D | None = None, n_states: int = 4):
    """Transition table and the |-1> site states for one set of controls."""
    grid = grid or Grid1D()
    prop = Propagator(c, b, grid)
    v_m1, v_0 = prop.potentials(controls)
    _, s_m1 = site_spectrum(v_m1, grid, c, n_states)
    _, s_0 = site_spectrum(v_0, grid, c, n_states, barrier_position=s_m1.barrier_position)
    return transition_frequencies(s_m1, s_0), s_m1, s_0


def calibrate(target_splitting: float, target_depths=ADDRESSING_DEPTHS, c: PhysicalConstants | None = None,
              b: BiasField | None = None, grid: Grid1D | None = None, dx: float = -0.5,
              tol: float = 1.0) -> CalibrationResult:
    """Choose pol_phase so that nu_R - nu_L equals ``target_splitting`` (Hz).

    The depths fix v_half and v_lambda directly (total_scale stays 1), so the
    search is one-dimensional over pol_phase in [-pi/2, 0]. The splitting is
    monotone there and vanishes at pol_phase = 0.
    """
    c = c or PhysicalConstants()
    b = b or BiasField()
    grid = grid or Grid1D()
    v_half, v_lambda = target_depths
    base = LatticeControls(v_half, v_lambda, dx, 0.0)

    def splitting(phi):
        return sublattice_transitions(replace(base, pol_phase=phi), c, b, grid)[0].splitting

    def result(phi, ok, msg=""):
        table = sublattice_transitions(replace(base, pol_phase=phi), c, b, grid)[0]
        achieved = {"splitting": table.splitting, "nu_left": table.nu_left, "nu_right": table.nu_right,
                    "v_half": v_half, "v_lambda": v_lambda}
        return CalibrationResult(replace(base, pol_phase=phi), achieved,
                                 abs(table.splitting - target_splitting), ok, msg)

    if target_splitting == 0:
        return result(0.0, True)
    s_max = splitting(-np.pi / 2)
    if abs(target_splitting) > abs(s_max) or np.sign(target_splitting) != np.sign(s_max):
        return result(-np.pi / 2, False,
                      f"target {target_splitting:.6g} Hz unreachable; maximum splitting {s_max:.6g} Hz")
    phi = brentq(lambda p: splitting(p) - target_splitting, -np.pi / 2, 0.0, xtol=1e-10, rtol=1e-12)
    res = result(phi, True)
    res.converged = res.residual <= tol
    return res


# -- addressing spectroscopy --------------------------------------------------

@dataclass
class AddressingSpectrum:
    frequencies: np.ndarray  # absolute rf frequency, Hz
    p_remain_left: np.ndarray
    p_remain_right: np.ndarray
    table: TransitionTable
    fit_left: FitResult
    fit_right: FitResult
    crosstalk: float  # R transfer with the rf tuned to the fitted L resonance

    @property
    def measured_splitting(self) -> float:
        return self.fit_right["center"] - self.fit_left["center"]


def _site_pulse(prop: Propagator, controls: LatticeControls, state: SpinorState, rabi: float,
                frequency: float, duration: float, dt: float) -> SpinorState:
    sched = ControlSchedule((hold(controls, duration),), (RfPulse(rabi, frequency, 0.0, duration, 0.0),), dt=dt)
    return prop.run(state, sched)


def exp_addressing_spectroscopy(controls: LatticeControls, c: PhysicalConstants | None = None,
                                b: BiasField | None = None, grid: Grid1D | None = None,
                                pulse_time: float = 30.0, rabi: float | None = None, points: int = 40,
                                span: float = 40e3, dt: float = 0.02) -> AddressingSpectrum:
    """Scan a pulse of ``pulse_time`` us across both sublattice resonances.

    The rabi frequency defaults to a pi pulse, 1/(2 pulse_time). Atoms start in
    the |-1> ground state of either site and the remaining |-1> population is
    recorded per site.
    """
    c = c or PhysicalConstants()
    b = b or BiasField()
    grid = grid or Grid1D()
    rabi = rabi or 0.5e6 / pulse_time
    table, s_m1, _ = sublattice_transitions(controls, c, b, grid)
    lo = min(table.nu_left, table.nu_right) - span
    hi = max(table.nu_left, table.nu_right) + span
    freqs = np.linspace(lo, hi, points)
    prop = Propagator(c, b, grid)
    psi = np.zeros((2, 2, grid.n), dtype=complex)
    psi[0, 0] = s_m1.left_state
    psi[1, 0] = s_m1.right_state
    start = SpinorState(psi, grid)
    remain = np.zeros((points, 2))
    for i, f in enumerate(freqs):
        out = _site_pulse(prop, controls, start, rabi, f, pulse_time, dt)
        remain[i] = out.spin_populations()[:, 0]
    fit_l = fit_rabi_lineshape(freqs, remain[:, 0], pulse_time, rabi)
    fit_r = fit_rabi_lineshape(freqs, remain[:, 1], pulse_time, rabi)
    out = _site_pulse(prop, controls, start, rabi, fit_l["center"], pulse_time, dt)
    crosstalk = float(out.spin_populations()[1, 1])
    return AddressingSpectrum(freqs, remain[:, 0], remain[:, 1], table, fit_l, fit_r, crosstalk)


# -- transport ----------------------------------------------------------------

@dataclass
class TransportScan:
    dx: np.ndarray
    p_right_minus1: np.ndarray
    p_right_0: np.ndarray
    best_dx: float
    best_fidelity: tuple  # (P(L | -1), P(R | 0)) at best_dx

    @property
    def sorting(self) -> np.ndarray:
        """min(P(L | -1), P(R | 0)) at each scan point."""
        return np.minimum(1 - self.p_right_minus1, self.p_right_0)


def exp_transport_scan(dx_values, c: PhysicalConstants | None = None, b: BiasField | None = None,
                       grid: Grid1D | None = None, config: TransportConfig | None = None) -> TransportScan:
    """Fraction in R after transport against dx, for |-1> and |0> started separately."""
    c = c or PhysicalConstants()
    b = b or BiasField()
    grid = grid or Grid1D()
    config = config or TransportConfig()
    dx_values = np.asarray(dx_values, dtype=float)
    if dx_values.size == 0:
        raise ValueError("empty dx scan")
    prop = Propagator(c, b, grid)
    start = transport_initial_state(prop, config)
    pr = np.zeros((len(dx_values), 2))
    for i, dxf in enumerate(dx_values):
        if not -0.5 <= dxf <= -0.3:
            raise ValueError(f"dx_final={dxf} outside [-0.5, -0.3]")
        out = prop.run(start, config.schedule(dxf))
        P = measure_site_populations(out, CELL_BARRIER)  # (trial, spin, site)
        pr[i, 0] = P[0, 0, 1] / P[0, 0].sum()
        pr[i, 1] = P[1, 1, 1] / P[1, 1].sum()
    sorting = np.minimum(1 - pr[:, 0], pr[:, 1])
    k = int(np.argmax(sorting))
    return TransportScan(dx_values, pr[:, 0], pr[:, 1], float(dx_values[k]),
                         (float(1 - pr[k, 0]), float(pr[k, 1])))


def readout_matrix(p_left_given_m1: float = 1.0, p_right_given_0: float = 1.0) -> np.ndarray:
    """Maps spin populations (P_-1, P_0) to site populations (P_L, P_R)."""
    return np.array([[p_left_given_m1, 1 - p_right_given_0],
                     [1 - p_left_given_m1, p_right_given_0]])


@dataclass
class RabiViaTransport:
    times: np.ndarray
    p_right: np.ndarray
    fit: FitResult


def exp_rabi_via_transport(rabi: float = 15.8e3, max_duration: float = 1600.0, points: int = 400,
                           noise: NoiseModel | None = None, fidelity=(1.0, 1.0), n_shots: int = 20,
                           n_atoms: int = 50) -> RabiViaTransport:
    """Rabi flopping read out as the fraction of atoms that transport to R."""
    trace = rabi_experiment(rabi, max_duration, noise, points, n_shots, n_atoms)
    M = readout_matrix(*fidelity)
    p_sites = M @ np.vstack([1 - trace.mean_p0, trace.mean_p0])
    p_right = p_sites[1]
    fit = fit_damped_sine(trace.times, p_right, frequency_guess=rabi * 1e-6)
    return RabiViaTransport(trace.times, p_right, fit)


# -- interferometer -----------------------------------------------------------

def _rotate(psi: np.ndarray, angle: float, phase: float = 0.0, mask=None) -> np.ndarray:
    """Ideal rf rotation by ``angle`` about an equatorial axis, optionally only where ``mask``."""
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    u01 = -1j * s * np.exp(1j * phase)
    u10 = -1j * s * np.exp(-1j * phase)
    a, b0 = psi[..., 0, :], psi[..., 1, :]
    na, nb = c * a + u01 * b0, u10 * a + c * b0
    if mask is not None:
        na = np.where(mask, na, a)
        nb = np.where(mask, nb, b0)
    return np.stack([na, nb], axis=-2)


@dataclass
class InterferometerResult:
    profile: TofProfile
    site_populations: np.ndarray  # after transport, before the selective pulse
    final_state: SpinorState


def _ideal_transport(prop: Propagator, state: SpinorState, start_orbital, final: LatticeControls,
                     duration: float) -> SpinorState:
    grid = prop.grid
    v_m1, _ = prop.potentials(final)
    _, sites = site_spectrum(v_m1, grid, prop.c, barrier_position=CELL_BARRIER)
    amps = [grid.inner(start_orbital, state.psi[m]) for m in (0, 1)]
    norms = np.sqrt(state.spin_populations())
    amps = [norms[m] * (a / abs(a) if abs(a) > 0 else 1.0) for m, a in enumerate(amps)]
    psi = np.stack([amps[0] * sites.left_state, amps[1] * sites.right_state])
    return SpinorState(psi, grid, state.time + duration)


def exp_interferometer(c: PhysicalConstants | None = None, b: BiasField | None = None,
                       grid: Grid1D | None = None, dx_final: float = DEFAULT_TRANSPORT_DX,
                       echo_delay: float = 400.0, transport_time: float = 370.0,
                       selective_pulse: str = "left", phase: float = 0.0,
                       cell_count: int = 1, dt: float = 0.02,
                       config: TransportConfig | None = None,
                       transport: str = "simulated") -> InterferometerResult:
    """pi/2, free evolution, echo pi, spin-dependent transport, L-selective pi, release.

    Rotations are ideal and instantaneous. ``selective_pulse`` is "left" (the
    sequence as designed), "global" (a pi pulse on both sublattices) or
    "none". ``phase`` is added to |0> after the first pulse. With
    ``transport="ideal"`` the transport step is replaced by the perfect
    spin-dependent map |-1> -> L ground state, |0> -> R ground state, keeping
    each spin's amplitude and phase.
    """
    c = c or PhysicalConstants()
    b = b or BiasField()
    grid = grid or Grid1D()
    base = config or TransportConfig(dt=dt)
    step2 = base.step2_duration
    if not transport_time > step2:
        raise ValueError("transport_time must exceed the second transport step")
    cfg = replace(base, step1_duration=transport_time - step2)
    prop = Propagator(c, b, grid)
    start = transport_initial_state(prop, cfg, spins=(-1,))
    psi = start.psi[0]
    psi = _rotate(psi, np.pi / 2)
    psi[1] *= np.exp(1j * phase)
    c0 = cfg.waypoints(dx_final)[0]
    state = SpinorState(psi, grid)
    if echo_delay > 0:
        state = prop.run(state, ControlSchedule((hold(c0, echo_delay),), dt=dt))
    state = SpinorState(_rotate(state.psi, np.pi), grid)
    if transport == "simulated":
        state = prop.run(state, cfg.schedule(dx_final))
    elif transport == "ideal":
        state = _ideal_transport(prop, state, start.psi[0, 0], cfg.waypoints(dx_final)[2], cfg.duration)
    else:
        raise ValueError(f"unknown transport mode {transport!r}")
    sites = measure_site_populations(state, CELL_BARRIER)
    left = grid.x < CELL_BARRIER
    if selective_pulse == "left":
        psi = _rotate(state.psi, np.pi, mask=left)
    elif selective_pulse == "global":
        psi = _rotate(state.psi, np.pi)
    elif selective_pulse == "none":
        psi = state.psi
    else:
        raise ValueError(f"unknown selective_pulse {selective_pulse!r}")
    final = SpinorState(psi, grid, state.time)
    return InterferometerResult(momentum_distribution(final, cell_count), sites, final)
