"""Atomic and laboratory constants for 87Rb in an 803 nm lattice."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PLANCK_H = 6.62607015e-34  # J s
SPEED_OF_LIGHT = 299792458.0  # m/s
AMU = 1.66053906660e-27  # kg
RB87_MASS = 86.909180527 * AMU

# D-line transition frequencies (Hz) and natural linewidths (Hz, Gamma/2pi)
RB87_D1 = (377.107463380e12, 5.746e6)
RB87_D2 = (384.230484468e12, 6.0666e6)
RB87_GF = -0.5  # Lande g-factor of the F=1 ground manifold

# Reference beam: one pass of the folded lattice beam
REFERENCE_POWER = 0.100  # W
REFERENCE_WAIST = 170e-6  # m, 1/e^2 radius

DEFAULT_B0 = 4.8e-3  # T
# Zeeman coefficients chosen so that at |B0| = 4.8 mT the quadratic part is
# 300 kHz and the bare |-1> -> |0> frequency is 34.146 MHz.
DEFAULT_Q_QUAD = 300e3 / DEFAULT_B0**2  # Hz/T^2
DEFAULT_GF_MUB = -(34.146e6 - 300e3) / DEFAULT_B0  # Hz/T, sign of g_F


def peak_intensity(power: float, waist: float) -> float:
    """Peak intensity 2P/(pi w^2) of a Gaussian beam, in W/m^2."""
    return 2.0 * power / (np.pi * waist**2)


def dipole_polarizabilities(
    wavelength: float,
    power: float = REFERENCE_POWER,
    waist: float = REFERENCE_WAIST,
    g_f: float = RB87_GF,
) -> tuple[float, float]:
    """Scalar and vector light-shift coefficients from the D1/D2 doublet.

    Returns ``(alpha_s, alpha_v)`` in Hz per unit field amplitude squared,
    where a unit-amplitude plane wave carries the peak intensity of a beam of
    the given power and waist. With that normalisation a single beam produces
    a scalar shift of ``-alpha_s / 4`` and, for sigma+ light, a vector shift of
    ``m_F * alpha_v / 4``. Counter-rotating terms are kept.
    """
    omega = 2 * np.pi * SPEED_OF_LIGHT / wavelength
    intensity = peak_intensity(power, waist)

    def line(freq, width):
        w0 = 2 * np.pi * freq
        gamma = 2 * np.pi * width
        pref = 3 * np.pi * SPEED_OF_LIGHT**2 * gamma / (2 * w0**3)
        resonant = 1.0 / (w0 - omega)
        counter = 1.0 / (w0 + omega)
        return pref, resonant, counter

    p1, r1, c1 = line(*RB87_D1)
    p2, r2, c2 = line(*RB87_D2)
    # J/(W/m^2) -> Hz via division by h
    scalar = -(p2 * (2 / 3) * (r2 + c2) + p1 * (1 / 3) * (r1 + c1)) * intensity / PLANCK_H
    # D2 and D1 enter the vector part with opposite weights
    vector = (p2 * (1 / 3) * (-r2 + c2) - p1 * (1 / 3) * (-r1 + c1)) * intensity / PLANCK_H
    alpha_s = -4.0 * scalar
    alpha_v = 4.0 * g_f * vector
    return float(alpha_s), float(alpha_v)


_ALPHA_S, _ALPHA_V = dipole_polarizabilities(803e-9)


@dataclass(frozen=True)
class PhysicalConstants:
    planck_h: float = PLANCK_H
    atom_mass: float = RB87_MASS
    wavelength: float = 803e-9
    alpha_s: float = _ALPHA_S
    alpha_v: float = _ALPHA_V
    gF_muB: float = DEFAULT_GF_MUB
    q_quad: float = DEFAULT_Q_QUAD

    def __post_init__(self):
        for name in ("planck_h", "atom_mass", "wavelength", "alpha_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not np.isfinite(self.alpha_v):
            raise ValueError("alpha_v must be finite")
        if self.gF_muB == 0:
            raise ValueError("gF_muB must be non-zero")

    @property
    def recoil_energy(self) -> float:
        """E_R / h in Hz."""
        return self.planck_h / (2 * self.atom_mass * self.wavelength**2)

    @property
    def wavenumber(self) -> float:
        """k in units of 1/wavelength."""
        return 2 * np.pi

    @classmethod
    def from_beam(cls, wavelength: float = 803e-9, power: float = REFERENCE_POWER,
                  waist: float = REFERENCE_WAIST, **kw) -> "PhysicalConstants":
        alpha_s, alpha_v = dipole_polarizabilities(wavelength, power, waist)
        return cls(wavelength=wavelength, alpha_s=alpha_s, alpha_v=alpha_v, **kw)


@dataclass(frozen=True)
class BiasField:
    """Uniform bias field along (x - y)/sqrt(2)."""

    magnitude: float = DEFAULT_B0
    direction: np.ndarray = field(
        default_factory=lambda: np.array([1.0, -1.0, 0.0]) / np.sqrt(2.0)
    )

    def __post_init__(self):
        if not self.magnitude > 0:
            raise ValueError("bias field magnitude must be positive")

    @property
    def B0(self) -> np.ndarray:
        return self.magnitude * np.asarray(self.direction, dtype=float)

    def linear_shift(self, c: PhysicalConstants) -> float:
        return abs(c.gF_muB) * self.magnitude

    def quadratic_shift(self, c: PhysicalConstants) -> float:
        return c.q_quad * self.magnitude**2
