"""Monte Carlo two-level simulator for Rabi, Ramsey and spin-echo sequences.

Each trajectory is a single |-1> <-> |0> two-level system with detuning

    delta(t) = base + shot offset + atom offset + walk(t)

The shot offset is drawn once per shot, the atom offset once per atom and the
walk is a Gaussian random walk shared by all atoms of a shot. Random numbers
for shot ``s`` come from ``default_rng([seed, stream, s])``, so results do not
depend on how shots are batched or ordered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from dwlattice.dynamics import TWO_PI_US


@dataclass(frozen=True)
class NoiseModel:
    sigma_shot: float = 0.0  # Hz, one offset per shot
    diffusion: float = 0.0  # Hz^2/ms, random walk within a shot
    sigma_spatial: float = 0.0  # Hz, static offset per atom
    seed: int = 0

    def __post_init__(self):
        for name in ("sigma_shot", "diffusion", "sigma_spatial"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"noise.{name} must be finite and >= 0")

    @property
    def diffusion_us(self) -> float:
        """Walk variance growth in Hz^2 per us."""
        return self.diffusion * 1e-3

    @property
    def is_static(self) -> bool:
        return self.diffusion == 0


def calibrated_noise(ramsey_fast: float = 100.0, ramsey_slow: float = 500.0,
                     echo_fast: float = 400.0, seed: int = 0) -> NoiseModel:
    """Noise parameters that reproduce the given 1/e times (us) in closed form.

    Accumulated Ramsey phase has variance w^2 [(s_shot^2 + s_atom^2) T^2 + D T^3 / 3]
    with w = 2 pi * 1e-6; an echo removes the static parts and leaves w^2 D T^3 / 12.
    Contrast is exp(-var/2), so 1/e means var = 2. The slow Ramsey time is the
    per-shot contrast, which only the per-atom spread reduces.
    """
    w = TWO_PI_US
    sigma_spatial = math.sqrt(2.0) / (w * ramsey_slow)
    d_us = 24.0 / (w**2 * echo_fast**3)
    rest = 2.0 / w**2 - d_us * ramsey_fast**3 / 3.0
    s2 = rest / ramsey_fast**2 - sigma_spatial**2
    if s2 < 0:
        raise ValueError("requested times are not reachable with shot-to-shot noise >= 0")
    return NoiseModel(math.sqrt(s2), d_us * 1e3, sigma_spatial, seed)


@dataclass(frozen=True)
class Pulse:
    rabi: float  # Hz
    duration: float  # us
    phase: float = 0.0

    def __post_init__(self):
        if self.rabi < 0:
            raise ValueError("rabi frequency must be >= 0")
        if not self.duration > 0:
            raise ValueError("pulse duration must be positive")

    @property
    def area(self) -> float:
        return 2 * np.pi * self.rabi * self.duration * 1e-6


@dataclass(frozen=True)
class Delay:
    duration: float

    def __post_init__(self):
        if not self.duration >= 0:
            raise ValueError("delay duration must be >= 0")


@dataclass(frozen=True)
class PulseSequence:
    """Pulses and free-evolution windows.

    With ``hard_pulses`` every pulse is an instantaneous rotation of the same
    area and phase with no detuning during it, i.e. ideal state preparation.
    """

    elements: tuple
    detuning_base: float = 0.0  # Hz
    hard_pulses: bool = False

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        for e in self.elements:
            if not isinstance(e, (Pulse, Delay)):
                raise TypeError(f"unsupported sequence element {e!r}")

    @property
    def duration(self) -> float:
        return sum(0.0 if (self.hard_pulses and isinstance(e, Pulse)) else e.duration
                   for e in self.elements)


@dataclass
class EnsembleResult:
    mean_p0: float
    per_shot: np.ndarray
    n_shots: int
    n_atoms: int
    per_atom: np.ndarray | None = None  # (n_shots, n_atoms) when kept


def rotation(delta, rabi, phase, dt):
    """Elements (u00, u01, u10, u11) of exp(-i 2 pi H dt) for
    H = [[-delta/2, rabi e^{i phase}/2], [rabi e^{-i phase}/2, delta/2]] (Hz), dt in us."""
    delta = np.asarray(delta, dtype=float)
    half = -0.5 * delta
    g = 0.5 * rabi * np.exp(1j * phase)
    r = np.sqrt(half**2 + abs(g) ** 2)
    th = r * TWO_PI_US * dt
    cos = np.cos(th)
    sinc = np.where(r > 0, np.sin(th) / np.where(r > 0, r, 1.0), TWO_PI_US * dt)
    return (cos - 1j * sinc * half, -1j * sinc * g, -1j * sinc * np.conj(g), cos + 1j * sinc * half)


def _apply(u, a, b):
    return u[0] * a + u[1] * b, u[2] * a + u[3] * b


def _timeline(seq: PulseSequence, noise: NoiseModel, max_substep: float):
    """Flatten the sequence into steps (kind, dt, rabi, phase, area)."""
    steps = []
    for e in seq.elements:
        if isinstance(e, Pulse):
            if seq.hard_pulses:
                steps.append(("hard", 0.0, e.rabi, e.phase, e.area))
                continue
            # static detuning is constant within a pulse, so one exact step suffices
            n = 1 if noise.is_static else max(1, math.ceil(e.duration / max_substep - 1e-9))
            steps.extend([("pulse", e.duration / n, e.rabi, e.phase, 0.0)] * n)
        elif e.duration > 0:
            n = 1 if noise.is_static else max(1, math.ceil(e.duration / max_substep - 1e-9))
            steps.extend([("free", e.duration / n, 0.0, 0.0, 0.0)] * n)
    return steps


def _shot_draws(noise: NoiseModel, stream: int, shot: int, n_atoms: int, dts: np.ndarray):
    rng = np.random.default_rng([noise.seed, stream, shot])
    offset = rng.normal(0.0, noise.sigma_shot) if noise.sigma_shot > 0 else 0.0
    atoms = rng.normal(0.0, noise.sigma_spatial, n_atoms) if noise.sigma_spatial > 0 else np.zeros(n_atoms)
    if noise.is_static or len(dts) == 0:
        walk = np.zeros(len(dts))
    else:
        # walk value held over each step: start of step plus half the step's drift
        inc = rng.normal(0.0, 1.0, len(dts)) * np.sqrt(noise.diffusion_us * dts)
        walk = np.cumsum(inc) - 0.5 * inc
    return offset, atoms, walk


def simulate_sequence(seq: PulseSequence, noise: NoiseModel, n_shots: int, n_atoms: int,
                      stream: int = 0, max_substep: float = 1.0,
                      keep_atoms: bool = False) -> EnsembleResult:
    """Final |0> population for every (shot, atom) trajectory, starting in |-1>."""
    if n_shots < 1 or n_atoms < 1:
        raise ValueError("n_shots and n_atoms must be >= 1")
    if not max_substep > 0:
        raise ValueError("max_substep must be positive")
    steps = _timeline(seq, noise, max_substep)
    dts = np.array([s[1] for s in steps])
    draws = [_shot_draws(noise, stream, s, n_atoms, dts) for s in range(n_shots)]
    static = (seq.detuning_base + np.array([d[0] for d in draws])[:, None]
              + np.stack([d[1] for d in draws]))  # (shots, atoms)
    walk = np.stack([d[2] for d in draws]) if steps else np.zeros((n_shots, 0))

    a = np.ones((n_shots, n_atoms), dtype=complex)  # |-1>
    b = np.zeros((n_shots, n_atoms), dtype=complex)  # |0>
    free_phase = np.zeros((n_shots, n_atoms))
    for k, (kind, dt, rabi, phase, area) in enumerate(steps):
        if kind == "free":
            free_phase += (static + walk[:, k:k + 1]) * TWO_PI_US * dt
            continue
        if free_phase.any():
            # diagonal evolution under -delta/2, +delta/2
            a = a * np.exp(0.5j * free_phase)
            b = b * np.exp(-0.5j * free_phase)
            free_phase[:] = 0.0
        if kind == "hard":
            u = rotation(0.0, 1.0, phase, area / (TWO_PI_US * 1.0))
        else:
            u = rotation(static + walk[:, k:k + 1], rabi, phase, dt)
        a, b = _apply(u, a, b)
    p0 = np.clip(np.abs(b) ** 2, 0.0, 1.0)
    per_shot = p0.mean(axis=1)
    return EnsembleResult(float(per_shot.mean()), per_shot, n_shots, n_atoms,
                          p0 if keep_atoms else None)


def rabi_sequence(rabi: float, duration: float, detuning: float = 0.0) -> PulseSequence:
    return PulseSequence((Pulse(rabi, duration),), detuning)


def ramsey_sequence(delay: float, theta: float, rabi: float = 250e3,
                    detuning: float = 0.0, hard_pulses: bool = True) -> PulseSequence:
    t_half = 0.25 / rabi * 1e6
    return PulseSequence((Pulse(rabi, t_half, 0.0), Delay(delay), Pulse(rabi, t_half, theta)),
                         detuning, hard_pulses)


def echo_sequence(delay: float, theta: float, rabi: float = 250e3,
                  detuning: float = 0.0, hard_pulses: bool = True) -> PulseSequence:
    t_half = 0.25 / rabi * 1e6
    return PulseSequence((Pulse(rabi, t_half, 0.0), Delay(delay / 2), Pulse(rabi, 2 * t_half, 0.0),
                          Delay(delay / 2), Pulse(rabi, t_half, theta)), detuning, hard_pulses)


@dataclass
class RabiTrace:
    times: np.ndarray  # us
    mean_p0: np.ndarray
    per_shot: np.ndarray  # (n_times, n_shots)


def rabi_experiment(rabi: float, max_duration: float, noise: NoiseModel | None = None,
                    n_points: int = 400, n_shots: int = 20, n_atoms: int = 50,
                    detuning: float = 0.0, max_substep: float = 1.0) -> RabiTrace:
    """Transfer to |0> against pulse length; noiseless output is sin^2(pi Omega t)."""
    if not rabi > 0:
        raise ValueError("rabi frequency must be positive")
    noise = noise or NoiseModel()
    times = np.linspace(0.0, max_duration, n_points)
    means, shots = [], []
    for i, t in enumerate(times):
        if t == 0:
            means.append(0.0)
            shots.append(np.zeros(n_shots))
            continue
        r = simulate_sequence(rabi_sequence(rabi, t, detuning), noise, n_shots, n_atoms,
                              stream=i, max_substep=max_substep)
        means.append(r.mean_p0)
        shots.append(r.per_shot)
    return RabiTrace(times, np.array(means), np.array(shots))


def sinusoid_contrast(theta, p) -> tuple[float, float, bool]:
    """Linear fit p = c0 + c1 cos(theta) + c2 sin(theta).

    Returns (contrast, phase, ok) with contrast = 2 sqrt(c1^2 + c2^2), so a full
    0-to-1 fringe has contrast 1.
    """
    theta = np.asarray(theta, dtype=float)
    p = np.asarray(p, dtype=float)
    if len(theta) < 4:
        return float("nan"), float("nan"), False
    A = np.column_stack([np.ones_like(theta), np.cos(theta), np.sin(theta)])
    coef, *_ = np.linalg.lstsq(A, p, rcond=None)
    if not np.all(np.isfinite(coef)):
        return float("nan"), float("nan"), False
    contrast = 2 * float(np.hypot(coef[1], coef[2]))
    return contrast, float(np.arctan2(coef[2], coef[1])), True


@dataclass
class InterferenceScan:
    delays: np.ndarray  # us
    thetas: np.ndarray
    mean_p0: np.ndarray  # (n_delays, n_thetas), averaged over shots
    per_shot: np.ndarray  # (n_delays, n_thetas, n_shots)
    contrast: np.ndarray  # shot-averaged fringe contrast per delay
    shot_contrast: np.ndarray  # mean single-shot fringe contrast per delay
    fit_ok: np.ndarray


def _interference_scan(builder, delays, thetas, noise, n_shots, n_atoms, **kw) -> InterferenceScan:
    thetas = np.asarray(thetas, dtype=float)
    if len(thetas) < 4:
        raise ValueError("need at least 4 theta points per delay")
    delays = np.asarray(delays, dtype=float)
    mean = np.zeros((len(delays), len(thetas)))
    per_shot = np.zeros((len(delays), len(thetas), n_shots))
    contrast = np.zeros(len(delays))
    shot_c = np.zeros(len(delays))
    ok = np.zeros(len(delays), dtype=bool)
    for i, T in enumerate(delays):
        for j, th in enumerate(thetas):
            # same stream for every theta: each shot sees one noise history
            r = simulate_sequence(builder(T, th, **kw), noise, n_shots, n_atoms, stream=i)
            mean[i, j] = r.mean_p0
            per_shot[i, j] = r.per_shot
        contrast[i], _, ok[i] = sinusoid_contrast(thetas, mean[i])
        sc = [sinusoid_contrast(thetas, per_shot[i, :, s])[0] for s in range(n_shots)]
        shot_c[i] = float(np.mean(sc))
    return InterferenceScan(delays, thetas, mean, per_shot, contrast, shot_c, ok)


def ramsey_experiment(delays, thetas, noise: NoiseModel | None = None, n_shots: int = 50,
                      n_atoms: int = 200, **kw) -> InterferenceScan:
    """pi/2 - delay - pi/2(theta) interferograms and their contrast per delay."""
    return _interference_scan(ramsey_sequence, delays, thetas, noise or NoiseModel(),
                              n_shots, n_atoms, **kw)


def echo_experiment(delays, thetas, noise: NoiseModel | None = None, n_shots: int = 50,
                    n_atoms: int = 200, **kw) -> InterferenceScan:
    """pi/2 - T/2 - pi - T/2 - pi/2(theta) interferograms and their contrast per delay."""
    return _interference_scan(echo_sequence, delays, thetas, noise or NoiseModel(),
                              n_shots, n_atoms, **kw)


def one_over_e_time(t, contrast) -> float:
    """First time the contrast falls below 1/e, by linear interpolation; inf if it never does."""
    t = np.asarray(t, dtype=float)
    c = np.asarray(contrast, dtype=float)
    level = np.exp(-1.0)
    below = np.flatnonzero(c < level)
    if len(below) == 0:
        return float("inf")
    k = below[0]
    if k == 0:
        return float(t[0])
    return float(t[k - 1] + (level - c[k - 1]) * (t[k] - t[k - 1]) / (c[k] - c[k - 1]))
