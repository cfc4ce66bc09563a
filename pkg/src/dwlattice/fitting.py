"""Least-squares fits for lineshapes, damped oscillations and TOF fringes.

Physical bounds are built into the parameterisations (decay rate as a square,
visibility as sin^2) instead of clipping. Uncertainties come from the
residual-scaled inverse curvature matrix J^T J.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares


@dataclass
class FitResult:
    params: dict
    uncertainties: dict
    residual_rms: float
    converged: bool
    flags: list = field(default_factory=list)

    def __getitem__(self, key):
        return self.params[key]


def _covariance(res, n_data: int) -> np.ndarray:
    J = res.jac
    dof = max(n_data - J.shape[1], 1)
    s2 = 2 * res.cost / dof
    try:
        cov = np.linalg.pinv(J.T @ J) * s2
    except np.linalg.LinAlgError:
        cov = np.full((J.shape[1],) * 2, np.inf)
    return cov


def _propagate(grad: np.ndarray, cov: np.ndarray) -> float:
    v = float(grad @ cov @ grad)
    return float(np.sqrt(v)) if v >= 0 and np.isfinite(v) else float("inf")


def _uniform_step(t) -> float:
    d = np.diff(t)
    if len(d) == 0 or np.any(d <= 0):
        raise ValueError("samples must be strictly increasing")
    return float(np.median(d))


def fft_peak_frequency(t, y, pad: int = 8) -> float:
    """Frequency of the strongest non-DC component (cycles per unit of t)."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    step = _uniform_step(t)
    n = len(y) * pad
    spec = np.abs(np.fft.rfft(y - y.mean(), n=n))
    freqs = np.fft.rfftfreq(n, d=step)
    spec[0] = 0.0
    return float(freqs[int(np.argmax(spec))])


# -- Rabi lineshape -------------------------------------------------------------

def rabi_lineshape(freq, center, rabi, amplitude, offset, pulse_time):
    """A * W^2/(W^2 + d^2) * sin^2(pi sqrt(W^2 + d^2) t) + c with t in us, frequencies in Hz."""
    d = np.asarray(freq, dtype=float) - center
    gen = np.sqrt(rabi**2 + d**2)
    return amplitude * rabi**2 / gen**2 * np.sin(np.pi * gen * pulse_time * 1e-6) ** 2 + offset


def fit_rabi_lineshape(freq, population, pulse_time: float, rabi_guess: float | None = None) -> FitResult:
    """Fixed-time Rabi spectroscopy fit. Dips (remaining population) fit with A < 0."""
    f = np.asarray(freq, dtype=float)
    p = np.asarray(population, dtype=float)
    if len(f) < 8:
        raise ValueError("need at least 8 points across the resonance")
    if not np.all(np.isfinite(p)):
        raise ValueError("population contains non-finite values")
    med = np.median(p)
    k = int(np.argmax(np.abs(p - med)))
    amp0 = p[k] - med
    rabi0 = rabi_guess if rabi_guess else 0.5e6 / pulse_time
    scale = max(rabi0, np.ptp(f) / 10)

    def model(q):
        return rabi_lineshape(f, q[0] * scale, abs(q[1]) * scale, q[2], q[3], pulse_time)

    q0 = np.array([f[k] / scale, rabi0 / scale, amp0 if amp0 != 0 else 1e-3, med])
    res = least_squares(lambda q: model(q) - p, q0, method="lm", x_scale="jac", max_nfev=4000)
    cov = _covariance(res, len(p))
    q = res.x
    params = {"center": q[0] * scale, "rabi": abs(q[1]) * scale, "amplitude": q[2], "offset": q[3]}
    sig = np.sqrt(np.clip(np.diag(cov), 0, None))
    unc = {"center": sig[0] * scale, "rabi": sig[1] * scale, "amplitude": sig[2], "offset": sig[3]}
    rms = float(np.sqrt(np.mean(res.fun**2)))
    converged = bool(res.success) and np.all(np.isfinite(sig))
    flags = []
    if abs(params["amplitude"]) < 2 * unc["amplitude"] or np.ptp(p) == 0:
        flags.append("amplitude consistent with zero")
        converged = False
    return FitResult(params, unc, rms, converged, flags)


# -- damped sine --------------------------------------------------------------

def damped_sine(t, frequency, decay_time, amplitude, phase, offset):
    t = np.asarray(t, dtype=float)
    env = np.exp(-t / decay_time) if np.isfinite(decay_time) else 1.0
    return amplitude * env * np.sin(2 * np.pi * frequency * t + phase) + offset


def fit_damped_sine(t, y, frequency_guess: float | None = None) -> FitResult:
    """Fit A exp(-t/tau) sin(2 pi f t + phi) + c; frequency in cycles per unit of t.

    The decay rate is parameterised as g^2, so tau = 1/g^2 stays positive and a
    pure sine shows up as tau = inf with a very large uncertainty.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(t) < 8:
        raise ValueError("need at least 8 samples")
    f_fft = fft_peak_frequency(t, y)
    f0 = frequency_guess or f_fft
    span = t[-1] - t[0]
    c0 = float(np.mean(y))
    a0 = float(np.sqrt(2) * np.std(y))
    if np.ptp(y) == 0:
        params = {"frequency": f0, "decay_time": float("inf"), "amplitude": 0.0, "phase": 0.0, "offset": c0}
        unc = {k: float("inf") for k in params}
        unc["offset"] = 0.0
        return FitResult(params, unc, 0.0, False, ["flat data"])
    # linear seed for phase at fixed frequency
    A = np.column_stack([np.sin(2 * np.pi * f0 * t), np.cos(2 * np.pi * f0 * t), np.ones_like(t)])
    (s, c, _), *_ = np.linalg.lstsq(A, y, rcond=None)
    ph0 = float(np.arctan2(c, s))
    a0 = float(np.hypot(s, c)) or a0
    tn = (t - t[0]) / span  # normalised time keeps the problem well scaled

    def model(q):
        f, g, a, ph, off = q
        return a * np.exp(-g**2 * tn) * np.sin(2 * np.pi * f * tn + ph + 2 * np.pi * f * t[0] / span) + off

    best = None
    for g0 in (0.3, 1.0, 2.0):
        q0 = np.array([f0 * span, g0, a0, ph0, c0])
        res = least_squares(lambda q: model(q) - y, q0, method="lm", x_scale="jac", max_nfev=4000)
        if best is None or res.cost < best.cost:
            best = res
    res = best
    cov = _covariance(res, len(y))
    f, g, a, ph, off = res.x
    if a < 0:
        a, ph = -a, ph + np.pi
    ph = float((ph + 2 * np.pi * f * t[0] / span + np.pi) % (2 * np.pi) - np.pi)
    sig = np.sqrt(np.clip(np.diag(cov), 0, None))
    rate = g**2 / span
    tau = float(1 / rate) if rate > 0 else float("inf")
    tau_err = _propagate(np.array([0, -2 / g**3 * span if g != 0 else np.inf, 0, 0, 0]), cov) \
        if g != 0 else float("inf")
    params = {"frequency": f / span, "decay_time": tau, "amplitude": float(a), "phase": ph, "offset": float(off)}
    unc = {"frequency": sig[0] / span, "decay_time": tau_err, "amplitude": sig[2],
           "phase": sig[3], "offset": sig[4]}
    flags = []
    converged = bool(res.success) and bool(np.all(np.isfinite(sig)))
    if f_fft > 0 and abs(params["frequency"] - f_fft) / f_fft > 0.1:
        flags.append("ambiguous frequency")
        converged = False
    if not np.isfinite(tau_err) or tau_err > tau or tau > 100 * span:
        flags.append("decay time unconstrained")
    rms = float(np.sqrt(np.mean(res.fun**2)))
    return FitResult(params, unc, rms, converged, flags)


# -- TOF fringes ---------------------------------------------------------------

def fringe_model(p, norm, center, width, visibility, period, shift):
    p = np.asarray(p, dtype=float)
    env = norm * np.exp(-((p - center) ** 2) / (2 * width**2))
    return env * (1 + visibility * np.cos(2 * np.pi * (p - shift) / period))


def fit_visibility(momentum, density) -> FitResult:
    """Cosine-modulated Gaussian envelope fit to a momentum profile.

    Visibility is sin^2(u), so it stays in [0, 1] without clipping.
    """
    p = np.asarray(momentum, dtype=float)
    d = np.asarray(density, dtype=float)
    step = _uniform_step(p)
    w = d / (np.sum(d) * step)
    mu = float(np.sum(p * w) * step)
    width0 = float(np.sqrt(np.sum((p - mu) ** 2 * w) * step))
    # remove a moment-matched Gaussian before looking for the fringe frequency
    env = np.exp(-((p - mu) ** 2) / (2 * width0**2))
    env *= np.sum(d) / np.sum(env)
    period0 = 1 / max(fft_peak_frequency(p, d - env), 1e-12)
    if np.ptp(p) < 3 * period0:
        if np.linalg.norm(d - env) > 0.05 * np.linalg.norm(d):
            raise ValueError("profile covers fewer than 3 fringes")
        period0 = np.ptp(p) / 6  # no visible modulation: any in-range seed
    norm0 = float(np.max(d))

    def unpack(q):
        return q[0], q[1], abs(q[2]), np.sin(q[3]) ** 2, q[4], q[5]

    def resid(q):
        return fringe_model(p, *unpack(q)) - d

    best = None
    for v0 in (0.1, 0.5, 0.95):
        for shift0 in (0.0, period0 / 2):
            q0 = np.array([norm0, mu, width0, np.arcsin(np.sqrt(v0)), period0, shift0])
            res = least_squares(resid, q0, method="lm", x_scale="jac", max_nfev=4000)
            if best is None or res.cost < best.cost:
                best = res
    res = best
    cov = _covariance(res, len(d))
    norm, center, width, vis, period, shift = unpack(res.x)
    sig = np.sqrt(np.clip(np.diag(cov), 0, None))
    u = res.x[3]
    params = {"visibility": float(vis), "period": float(abs(period)), "envelope_width": float(width),
              "center": float(center), "norm": float(norm), "shift": float(shift)}
    unc = {"visibility": float(abs(np.sin(2 * u)) * sig[3]), "period": sig[4], "envelope_width": sig[2],
           "center": sig[1], "norm": sig[0], "shift": sig[5]}
    rms = float(np.sqrt(np.mean(res.fun**2)))
    return FitResult(params, unc, rms, bool(res.success))
