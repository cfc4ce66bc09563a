"""Split-operator propagation of the two-component spinor through lattice
control ramps and rf pulses.

Spin components are ordered (m_F = -1, m_F = 0). The spin part of each step
works in a frame rotating at ``schedule.frame_frequency``; an rf pulse at a
different frequency enters with a time-dependent coupling phase, so the
frame can stay fixed for a whole sequence and Ramsey phases stay meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from dwlattice.constants import BiasField, PhysicalConstants
from dwlattice.field import LatticeControls, lattice_cut_field, spin_potential
from dwlattice.stationary import Grid1D, build_hamiltonian, half_cell_mask, lowest_eigenpairs

TWO_PI_US = 2 * np.pi * 1e-6  # Hz * us -> radians
CONTROL_FIELDS = ("v_half", "v_lambda", "dx", "pol_phase", "total_scale")
RAMP_SHAPES = ("constant", "linear", "exponential", "exponential_rise", "minimum_jerk")


@dataclass
class SpinorState:
    psi: np.ndarray  # (..., 2, n): components (m_F=-1, m_F=0)
    grid: Grid1D
    time: float = 0.0

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=complex)
        if self.psi.shape[-2:] != (2, self.grid.n):
            raise ValueError(f"spinor must have shape (..., 2, {self.grid.n})")
        if not np.all(np.isfinite(self.psi)):
            raise ValueError("spinor has non-finite components")

    @classmethod
    def from_components(cls, psi_minus1, psi_0, grid: Grid1D, time: float = 0.0):
        return cls(np.stack([psi_minus1, psi_0], axis=-2), grid, time)

    @property
    def psi_minus1(self) -> np.ndarray:
        return self.psi[..., 0, :]

    @property
    def psi_0(self) -> np.ndarray:
        return self.psi[..., 1, :]

    def norm2(self) -> np.ndarray:
        return np.sum(np.abs(self.psi) ** 2, axis=(-2, -1)) * self.grid.dx_step

    def spin_populations(self) -> np.ndarray:
        """(..., 2) populations of m_F = -1 and m_F = 0."""
        return np.sum(np.abs(self.psi) ** 2, axis=-1) * self.grid.dx_step

    def copy(self) -> "SpinorState":
        return SpinorState(self.psi.copy(), self.grid, self.time)


@dataclass(frozen=True)
class RfPulse:
    rabi: float  # Hz
    frequency: float  # Hz
    phase: float = 0.0  # rad
    duration: float = 1.0  # us
    start: float = 0.0  # us

    def __post_init__(self):
        if self.rabi < 0:
            raise ValueError("rabi frequency must be >= 0")
        if not self.duration > 0:
            raise ValueError("pulse duration must be positive")

    @property
    def end(self) -> float:
        return self.start + self.duration


def ramp_fraction(shape: str, u, tau_fraction: float | None = None):
    """Progress in [0, 1] of a named ramp at normalised time ``u`` in [0, 1].

    ``exponential`` saturates, (1 - e^{-u/f}) / (1 - e^{-1/f}); ``exponential_rise``
    starts slowly, (e^{u/f} - 1) / (e^{1/f} - 1), with f = tau / duration.
    """
    u = np.clip(u, 0.0, 1.0)
    if shape == "constant":
        return np.zeros_like(u)
    if shape == "linear":
        return u
    if shape == "minimum_jerk":
        return u**3 * (10 - 15 * u + 6 * u**2)
    if shape in ("exponential", "exponential_rise"):
        if not tau_fraction or tau_fraction <= 0:
            raise ValueError(f"{shape} ramp needs a positive time constant")
        f = tau_fraction
        if shape == "exponential":
            return -np.expm1(-u / f) / -np.expm1(-1.0 / f)
        return np.expm1(u / f) / np.expm1(1.0 / f)
    raise ValueError(f"unknown ramp shape {shape!r}")


@dataclass(frozen=True)
class Segment:
    """Lattice controls interpolated from ``start`` to ``end`` over ``duration`` us.

    ``shape`` is a ramp name or a mapping from control field to ramp name;
    fields not listed in a mapping ramp linearly.
    """

    duration: float
    start: LatticeControls
    end: LatticeControls
    shape: str | tuple = "linear"
    tau: float | None = None
    reverse: bool = False  # play the ramp backwards in time

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("segment duration must be positive")
        if isinstance(self.shape, dict):
            object.__setattr__(self, "shape", tuple(sorted(self.shape.items())))
        for s in self._shapes().values():
            if s not in RAMP_SHAPES:
                raise ValueError(f"unknown ramp shape {s!r}")
            if s.startswith("exponential") and not (self.tau and self.tau > 0):
                raise ValueError(f"{s} ramp needs tau > 0")

    def _shapes(self) -> dict:
        if isinstance(self.shape, str):
            return {f: self.shape for f in CONTROL_FIELDS}
        shapes = {f: "linear" for f in CONTROL_FIELDS}
        shapes.update(dict(self.shape))
        return shapes

    def values_at(self, t) -> dict:
        """Control values (arrays) at local times ``t``."""
        u = np.asarray(t, dtype=float) / self.duration
        if self.reverse:
            u = 1.0 - u
        tau_f = self.tau / self.duration if self.tau else None
        values = {}
        for name, shape in self._shapes().items():
            a, b = getattr(self.start, name), getattr(self.end, name)
            if shape == "constant" or a == b:
                values[name] = np.full(u.shape, a)
            else:
                values[name] = a + (b - a) * ramp_fraction(shape, u, tau_f)
        return values

    def controls_at(self, t: float) -> LatticeControls:
        return LatticeControls(**{k: float(v) for k, v in self.values_at(t).items()})


def hold(controls: LatticeControls, duration: float) -> Segment:
    return Segment(duration, controls, controls, "constant")


@dataclass(frozen=True)
class ControlSchedule:
    segments: tuple[Segment, ...]
    rf_events: tuple[RfPulse, ...] = ()
    dt: float = 0.01  # us
    frame_frequency: float | None = None  # Hz; None -> bare |-1>-|0> frequency

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "rf_events", tuple(self.rf_events))
        if not self.segments:
            raise ValueError("schedule has no segments")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        total = self.duration
        for p in self.rf_events:
            if p.start < -1e-12 or p.end > total + 1e-9:
                raise ValueError("rf pulse lies outside the schedule")

    @property
    def duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    def _edges(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum([s.duration for s in self.segments])])

    def values_at(self, t) -> dict:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        edges = self._edges()
        idx = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, len(self.segments) - 1)
        out = {name: np.empty(t.shape) for name in CONTROL_FIELDS}
        for i in np.unique(idx):
            sel = idx == i
            seg = self.segments[i]
            local = np.clip(t[sel] - edges[i], 0.0, seg.duration)
            for name, v in seg.values_at(local).items():
                out[name][sel] = v
        return out

    def controls_at(self, t: float) -> LatticeControls:
        return LatticeControls(**{k: float(v[0]) for k, v in self.values_at(t).items()})

    def coupling_at(self, t):
        """Off-diagonal spin matrix element (Hz) in the rotating frame."""
        t = np.asarray(t, dtype=float)
        h = np.zeros(t.shape, dtype=complex)
        frame = self.frame_frequency or 0.0
        for p in self.rf_events:
            on = (t >= p.start) & (t < p.end)
            if np.any(on):
                detune = p.frequency - frame
                h = h + on * 0.5 * p.rabi * np.exp(1j * (p.phase - 2 * np.pi * detune * 1e-6 * t))
        return h

    def breakpoints(self) -> np.ndarray:
        pts = set(self._edges().tolist())
        for p in self.rf_events:
            pts.update((p.start, p.end))
        return np.array(sorted(pts))

    def time_reversed(self, frame_frequency: float | None = None) -> "ControlSchedule":
        """Schedule whose Hamiltonian at time t is the complex conjugate of this
        one's at T - t. Running it on the conjugated final state undoes a run.

        rf phases depend on the rotating frame, so a schedule without its own
        ``frame_frequency`` needs one here (normally the propagator's
        ``bare_frequency``).
        """
        frame = self.frame_frequency if self.frame_frequency is not None else frame_frequency
        if frame is None and self.rf_events:
            raise ValueError("time reversal of rf pulses needs a frame frequency")
        T = self.duration
        segs = tuple(replace(s, reverse=not s.reverse) for s in reversed(self.segments))
        events = []
        for p in self.rf_events:
            detune = p.frequency - frame
            events.append(replace(p, start=T - p.end, phase=-p.phase + 2 * np.pi * detune * 1e-6 * T))
        return replace(self, segments=segs, rf_events=tuple(events), frame_frequency=frame)

    def shifted(self, offset: float) -> "ControlSchedule":
        """Copy with every rf event moved by ``offset`` us."""
        return replace(self, rf_events=tuple(replace(p, start=p.start + offset) for p in self.rf_events))


@dataclass
class TofProfile:
    momentum: np.ndarray  # units of hbar k
    density: np.ndarray
    visibility: float
    fringe_period: float
    cell_count: int


class Propagator:
    """Second-order split-step propagator on one lattice cell.

    Each step is half kinetic, full potential plus spin at the step midpoint,
    half kinetic. Kinetic factors are exact in Fourier space and the 2x2 spin
    matrix is exponentiated exactly at every grid point.
    """

    def __init__(self, c: PhysicalConstants, b: BiasField, grid: Grid1D,
                 max_phase_per_step: float = 2 * np.pi / 20, chunk: int = 256):
        self.c = c
        self.b = b
        self.grid = grid
        self.max_phase_per_step = max_phase_per_step
        self.chunk = chunk
        self._t_kin = grid.kinetic(c)
        self.bare_frequency = bare_transition_frequency(c, b)

    def potential_arrays(self, values: dict) -> tuple[np.ndarray, np.ndarray]:
        """Spin potentials (Hz) for arrays of control values: shapes (..., n)."""
        E = lattice_cut_field(values["v_half"], values["v_lambda"], values["dx"],
                              values["pol_phase"], values["total_scale"], self.grid.x, self.c)
        return spin_potential(E, self.b, -1, self.c), spin_potential(E, self.b, 0, self.c)

    def potentials(self, controls: LatticeControls) -> tuple[np.ndarray, np.ndarray]:
        return self.potential_arrays({k: getattr(controls, k) for k in CONTROL_FIELDS})

    def _check_dt(self, a, d, coupling, dt):
        mean = 0.5 * (a + d)
        half = 0.5 * (a - d)
        spread = (np.ptp(mean, axis=-1) + np.max(np.abs(half), axis=-1) + np.abs(coupling))
        worst = float(np.max(spread)) * TWO_PI_US * dt
        if worst > self.max_phase_per_step:
            raise ValueError(
                f"dt={dt} us too large for the spin/potential energy scale "
                f"({worst:.3f} rad per step, limit {self.max_phase_per_step:.3f})")

    @staticmethod
    def _spin_factors(a, d, coupling, dt):
        mean = 0.5 * (a + d)
        half = 0.5 * (a - d)
        glob = np.exp(-1j * mean * TWO_PI_US * dt)
        if np.all(coupling == 0):
            return glob * np.exp(-1j * half * TWO_PI_US * dt), None, None, glob * np.exp(1j * half * TWO_PI_US * dt)
        coupling = np.asarray(coupling)[..., None]
        r = np.sqrt(half**2 + np.abs(coupling) ** 2)
        th = r * TWO_PI_US * dt
        cos = np.cos(th)
        safe = np.where(r > 0, r, 1.0)
        sinc = np.where(r > 0, np.sin(th) / safe, TWO_PI_US * dt)
        return (glob * (cos - 1j * sinc * half), glob * (-1j * sinc * coupling),
                glob * (-1j * sinc * np.conj(coupling)), glob * (cos + 1j * sinc * half))

    @staticmethod
    def _apply_spin(psi, factors):
        u00, u01, u10, u11 = factors
        p1, p0 = psi[..., 0, :], psi[..., 1, :]
        if u01 is None:
            return np.stack([u00 * p1, u11 * p0], axis=-2)
        return np.stack([u00 * p1 + u01 * p0, u10 * p1 + u11 * p0], axis=-2)

    def spin_step(self, psi, v_m1, v_0, coupling, frame: float, dt: float):
        """Exact 2x2 evolution at every grid point for ``dt`` us."""
        a = v_m1 - frame
        self._check_dt(a, v_0, coupling, dt)
        return self._apply_spin(psi, self._spin_factors(a, v_0, coupling, dt))

    def kinetic_step(self, psi, dt: float):
        phase = np.exp(-1j * self._t_kin * TWO_PI_US * dt)
        return np.fft.ifft(phase * np.fft.fft(psi, axis=-1), axis=-1)

    def step(self, state: SpinorState, controls: LatticeControls, coupling: complex = 0j,
             frame: float | None = None, dt: float = 0.01) -> SpinorState:
        frame = self.bare_frequency if frame is None else frame
        v_m1, v_0 = self.potentials(controls)
        psi = self.kinetic_step(state.psi, dt / 2)
        psi = self.spin_step(psi, v_m1, v_0, coupling, frame, dt)
        psi = self.kinetic_step(psi, dt / 2)
        return SpinorState(psi, state.grid, state.time + dt)

    def run(self, state: SpinorState, schedule: ControlSchedule, observer=None) -> SpinorState:
        """Propagate through ``schedule``.

        ``observer(t, psi)`` is called after every step; without an observer
        adjacent half-kinetic factors are fused.
        """
        if state.grid != self.grid:
            raise ValueError("state grid differs from propagator grid")
        if schedule.frame_frequency is None:
            schedule = replace(schedule, frame_frequency=self.bare_frequency)
        frame = schedule.frame_frequency
        psi = np.array(state.psi, dtype=complex)
        pts = schedule.breakpoints()
        for t_a, t_b in zip(pts[:-1], pts[1:]):
            span = t_b - t_a
            if span <= 1e-12:
                continue
            n = max(1, math.ceil(span / schedule.dt - 1e-9))
            h = span / n
            half_kin = np.exp(-1j * self._t_kin * TWO_PI_US * h / 2)
            full_kin = half_kin**2
            t_mid = t_a + (np.arange(n) + 0.5) * h
            psi_k = np.fft.fft(psi, axis=-1) * half_kin
            for c0 in range(0, n, self.chunk):
                ts = t_mid[c0:c0 + self.chunk]
                v_m1, v_0 = self.potential_arrays(schedule.values_at(ts))
                a = v_m1 - frame
                coupling = schedule.coupling_at(ts)
                self._check_dt(a, v_0, coupling, h)
                factors = self._spin_factors(a, v_0, coupling, h)
                for i in range(len(ts)):
                    psi = np.fft.ifft(psi_k, axis=-1)
                    psi = self._apply_spin(psi, [f if f is None else f[i] for f in factors])
                    psi_k = np.fft.fft(psi, axis=-1)
                    last = c0 + i == n - 1
                    if observer is not None or last:
                        psi_k = psi_k * half_kin
                        if observer is not None:
                            observer(t_a + (c0 + i + 1) * h, np.fft.ifft(psi_k, axis=-1))
                        if not last:
                            psi_k = psi_k * half_kin
                    else:
                        psi_k = psi_k * full_kin
            psi = np.fft.ifft(psi_k, axis=-1)
        return SpinorState(psi, self.grid, state.time + schedule.duration)

    def energy(self, state: SpinorState, controls: LatticeControls, frame: float | None = None) -> np.ndarray:
        """<H> in Hz for a spin-diagonal Hamiltonian (no rf)."""
        frame = self.bare_frequency if frame is None else frame
        v_m1, v_0 = self.potentials(controls)
        psi = state.psi
        phi_k = np.fft.fft(psi, axis=-1)
        kin = np.sum(self._t_kin * np.abs(phi_k) ** 2, axis=(-2, -1)) / self.grid.n
        pot = np.sum((v_m1 - frame) * np.abs(psi[..., 0, :]) ** 2 + v_0 * np.abs(psi[..., 1, :]) ** 2, axis=-1)
        return (kin + pot) * self.grid.dx_step


def bare_transition_frequency(c: PhysicalConstants, b: BiasField) -> float:
    """|-1> -> |0> frequency in the bias field alone, in Hz."""
    E0 = np.zeros(3)
    return float(spin_potential(E0, b, -1, c) - spin_potential(E0, b, 0, c))


def measure_site_populations(state: SpinorState, barrier_position: float) -> np.ndarray:
    """Ideal projective readout: array [[P_L, P_R] for m_F=-1, [P_L, P_R] for m_F=0]."""
    left = half_cell_mask(state.grid.x, barrier_position)
    dens = np.abs(state.psi) ** 2 * state.grid.dx_step
    p_left = np.sum(dens * left, axis=-1)
    p_right = np.sum(dens * ~left, axis=-1)
    return np.stack([p_left, p_right], axis=-1)


def uniform_state(grid: Grid1D, mF: int = -1) -> SpinorState:
    psi = np.zeros((2, grid.n), dtype=complex)
    psi[0 if mF == -1 else 1] = 1.0 / np.sqrt(grid.length)
    return SpinorState(psi, grid)


@dataclass
class LoadResult:
    state: SpinorState
    overlap: float
    band_energies: np.ndarray


def load_ground_state(final_controls: LatticeControls, c: PhysicalConstants, b: BiasField,
                      grid: Grid1D | None = None, duration: float = 500.0, tau: float = 100.0,
                      shape: str = "exponential_rise", dt: float = 0.05,
                      band_size: int = 2) -> LoadResult:
    """Ramp the lattice on from zero around a condensate in |-1> (q = 0)."""
    grid = grid or Grid1D()
    if final_controls.v_half + final_controls.v_lambda < 10:
        raise ValueError("final lattice depth must be at least 10 E_R")
    start = replace(final_controls, total_scale=0.0)
    schedule = ControlSchedule((Segment(duration, start, final_controls, {"total_scale": shape}, tau),), dt=dt)
    prop = Propagator(c, b, grid)
    state = prop.run(uniform_state(grid), schedule)
    v_m1, _ = prop.potentials(final_controls)
    sol = lowest_eigenpairs(build_hamiltonian(grid, v_m1, c), band_size)
    overlap = float(sum(abs(grid.inner(s, state.psi_minus1)) ** 2 for s in sol.states))
    return LoadResult(state, overlap, sol.energies)


def momentum_distribution(state: SpinorState, cell_count: int = 1, envelope_sigma: float | None = None,
                          oversample: int = 16, p_max: float = 6.0) -> TofProfile:
    """Far-field momentum density of ``cell_count`` identical cells.

    The in-cell wavefunction is zero-padded to resolve its continuous Fourier
    transform; spin components add incoherently. A coherent array of M cells
    multiplies by |sum_j w_j e^{i p j}|^2 with Gaussian weights of width
    ``envelope_sigma`` cells (uniform if None).
    """
    if cell_count < 1:
        raise ValueError("cell_count must be >= 1")
    grid = state.grid
    n_pad = grid.n * oversample
    psi = np.asarray(state.psi)
    if psi.ndim != 2:
        raise ValueError("momentum_distribution takes a single spinor")
    phi = np.fft.fftshift(np.fft.fft(psi, n=n_pad, axis=-1), axes=-1)
    # spatial frequency q (1/lambda) -> momentum in units of hbar k: p = q
    q = np.fft.fftshift(np.fft.fftfreq(n_pad, d=grid.dx_step))
    dens = np.sum(np.abs(phi) ** 2, axis=0)
    if cell_count > 1:
        j = np.arange(cell_count) - (cell_count - 1) / 2
        w = np.ones(cell_count) if envelope_sigma is None else np.exp(-j**2 / (4 * envelope_sigma**2))
        af = np.abs(np.exp(2j * np.pi * np.outer(q * grid.length, j)) @ w) ** 2
        dens = dens * af
    keep = np.abs(q) <= p_max
    q, dens = q[keep], dens[keep]
    dp = q[1] - q[0]
    dens = dens / (np.sum(dens) * dp)
    vis, period = two_site_coherence(state)
    return TofProfile(q, dens, vis, period, cell_count)


def two_site_coherence(state: SpinorState) -> tuple[float, float]:
    """Fringe visibility and period (hbar k) from the position autocorrelation.

    A(s) = sum over spins of int psi*(x) psi(x + s) dx is the Fourier transform
    of the momentum density. Its first side lobe sits at the site separation d,
    giving fringe period 1/d, and 2|A(d)|/A(0) is the fringe visibility with
    the single-site envelope divided out: 2|ab|/(|a|^2 + |b|^2) for a state
    a phi(x) + b phi(x - d). Without a side lobe the visibility is 0.
    """
    psi = np.asarray(state.psi)
    n = psi.shape[-1]
    spec = np.fft.fft(psi, n=2 * n, axis=-1)
    A = np.fft.ifft(np.sum(np.abs(spec) ** 2, axis=-2), axis=-1)[: n]
    mag = np.abs(A)
    k = 1
    while k < n - 1 and mag[k + 1] <= mag[k]:
        k += 1
    if k >= n - 1 or mag[0] == 0:
        return 0.0, float("inf")
    k += int(np.argmax(mag[k:]))
    d = k * state.grid.dx_step
    return float(min(2 * mag[k] / mag[0], 1.0)), float(1 / d)


def fringe_visibility(p, density, window: float = 2.0) -> tuple[float, float]:
    """(max - min)/(max + min) over the central +-``window`` and the dominant period."""
    p = np.asarray(p)
    density = np.asarray(density)
    central = np.abs(p) <= window
    d = density[central]
    hi, lo = np.max(d), np.min(d)
    vis = float((hi - lo) / (hi + lo)) if hi + lo > 0 else 0.0
    # The Fourier transform of the momentum density is the position
    # autocorrelation of the wavefunction; its first side lobe sits at the
    # site separation, which is the inverse fringe period.
    n = 8 * len(p)
    spec = np.abs(np.fft.rfft(density, n=n))
    freqs = np.fft.rfftfreq(n, d=p[1] - p[0])
    k = 1
    while k < len(spec) - 1 and spec[k + 1] <= spec[k]:
        k += 1
    if k >= len(spec) - 1:
        return vis, float("inf")
    k += int(np.argmax(spec[k:]))
    period = float(1 / freqs[k])
    return vis, period


# The lattice cell after transport is a pure lambda/2 lattice with maxima at
# x = 0 and x = 0.5, so the L/R split is fixed.
CELL_BARRIER = 0.5


@dataclass(frozen=True)
class TransportConfig:
    """Two-step spin-dependent transport.

    Step 1 deforms the initial lambda-lattice into a merged double well with
    ``intensity_ratio`` = I_lambda / I_lambda/2 while dx moves to its final
    value. Step 2 lowers the lambda-lattice to zero at fixed dx. Total light
    intensity is held constant throughout, as when only the polarization of
    a single beam is rotated.
    """

    start_depth: float = 100.0  # E_R, pure lambda-lattice
    start_dx: float = -0.62
    intensity_ratio: float = 0.95
    pol_phase: float = -np.pi / 2
    step1_duration: float = 300.0
    step2_duration: float = 100.0
    step1_shape: str = "minimum_jerk"
    step2_shape: str = "linear"
    dt: float = 0.02

    def __post_init__(self):
        if not self.start_depth > 0:
            raise ValueError("start_depth must be positive")
        if not self.intensity_ratio >= 0:
            raise ValueError("intensity_ratio must be >= 0")
        for s in (self.step1_shape, self.step2_shape):
            if s not in RAMP_SHAPES or s.startswith("exponential"):
                raise ValueError(f"unsupported transport ramp {s!r}")

    def waypoints(self, dx_final: float) -> tuple[LatticeControls, LatticeControls, LatticeControls]:
        intensity = self.start_depth / 4  # v_half + v_lambda/4 is conserved
        v_half1 = intensity / (1 + self.intensity_ratio)
        c0 = LatticeControls(0.0, self.start_depth, self.start_dx, self.pol_phase)
        c1 = LatticeControls(v_half1, 4 * self.intensity_ratio * v_half1, dx_final, self.pol_phase)
        c2 = LatticeControls(intensity, 0.0, dx_final, self.pol_phase)
        return c0, c1, c2

    def schedule(self, dx_final: float) -> ControlSchedule:
        c0, c1, c2 = self.waypoints(dx_final)
        s1 = {"v_half": self.step1_shape, "v_lambda": self.step1_shape, "dx": "linear"}
        return ControlSchedule((Segment(self.step1_duration, c0, c1, s1),
                                Segment(self.step2_duration, c1, c2, self.step2_shape)), dt=self.dt)

    @property
    def duration(self) -> float:
        return self.step1_duration + self.step2_duration


@dataclass
class TransportResult:
    state: SpinorState
    populations: np.ndarray  # (..., 2, 2): [[P_L, P_R] for -1, [P_L, P_R] for 0]
    dx_final: float


def transport_initial_state(prop: Propagator, config: TransportConfig, spins=(-1, 0)) -> SpinorState:
    """Ground states of the starting lambda-lattice, one trial per entry of ``spins``.

    Each trial is a pure spin state, so the result has shape (len(spins), 2, n).
    """
    c0 = config.waypoints(-0.5)[0]
    v_m1, v_0 = prop.potentials(c0)
    psi = np.zeros((len(spins), 2, prop.grid.n), dtype=complex)
    for i, m in enumerate(spins):
        idx = 0 if m == -1 else 1
        v = v_m1 if m == -1 else v_0
        sol = lowest_eigenpairs(build_hamiltonian(prop.grid, v, prop.c), 1)
        psi[i, idx] = sol.states[0]
    return SpinorState(psi, prop.grid)


def transport_sequence(state: SpinorState, dx_final: float, c: PhysicalConstants, b: BiasField,
                       config: TransportConfig | None = None) -> TransportResult:
    """Run both transport steps ending at ``dx_final`` and read out the sites."""
    config = config or TransportConfig()
    if not -0.5 <= dx_final <= -0.3:
        raise ValueError(f"dx_final={dx_final} outside [-0.5, -0.3]")
    norm = state.norm2()
    if np.any(np.abs(norm - 1) > 1e-6):
        raise ValueError("state is not normalised")
    prop = Propagator(c, b, state.grid)
    out = prop.run(state, config.schedule(dx_final))
    return TransportResult(out, measure_site_populations(out, CELL_BARRIER), dx_final)
