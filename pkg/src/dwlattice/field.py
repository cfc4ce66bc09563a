"""Plane-wave field synthesis and the light-shift potentials it produces.

Positions are in units of the lattice wavelength, so every beam has
wavenumber 2*pi. The lattice is built from four travelling waves along
+x, -x, +y, -y. In-plane polarisation components form the lambda/2 lattice,
the vertical (z) components interfere between all four beams and add the
lambda-periodic cross term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from dwlattice.constants import BiasField, PhysicalConstants

K = 2 * np.pi
SUPPORTED_MF = (-1, 0)
_IMAG_TOL = 1e-12


@dataclass(frozen=True)
class Beam:
    k_hat: np.ndarray
    amplitude: float
    jones: np.ndarray
    phase: float = 0.0

    def __post_init__(self):
        k_hat = np.asarray(self.k_hat, dtype=float)
        jones = np.asarray(self.jones, dtype=complex)
        object.__setattr__(self, "k_hat", k_hat)
        object.__setattr__(self, "jones", jones)
        if k_hat.shape != (3,) or jones.shape != (3,):
            raise ValueError("k_hat and jones must be 3-vectors")
        if abs(np.linalg.norm(k_hat) - 1) > 1e-12:
            raise ValueError("k_hat must be a unit vector")
        if abs(np.linalg.norm(jones) - 1) > 1e-12:
            raise ValueError("jones vector must be normalised")
        if abs(np.dot(jones, k_hat)) > 1e-12:
            raise ValueError("jones vector must be transverse to k_hat")
        if self.amplitude < 0 or not np.isfinite(self.amplitude):
            raise ValueError("amplitude must be finite and non-negative")


@dataclass(frozen=True)
class BeamSet:
    beams: tuple[Beam, ...]
    wavenumber: float = K

    def __post_init__(self):
        object.__setattr__(self, "beams", tuple(self.beams))
        if not self.beams:
            raise ValueError("beam set is empty")

    def __len__(self):
        return len(self.beams)

    def __iter__(self):
        return iter(self.beams)

    def split_polarization(self) -> tuple["BeamSet | None", "BeamSet | None"]:
        """Separate each beam into its in-plane (xy) and vertical (z) parts."""
        in_plane, vertical = [], []
        for b in self.beams:
            for target, mask in ((in_plane, np.array([1, 1, 0])), (vertical, np.array([0, 0, 1]))):
                part = b.jones * mask
                norm = np.linalg.norm(part)
                if norm > 1e-15:
                    target.append(Beam(b.k_hat, b.amplitude * norm, part / norm, b.phase))
        wrap = lambda bs: BeamSet(tuple(bs), self.wavenumber) if bs else None
        return wrap(in_plane), wrap(vertical)


@dataclass(frozen=True)
class LatticeControls:
    """Beam-control knobs of the double-well lattice.

    Depths are in recoil units, ``dx`` in wavelengths. ``dx`` places the
    minima of the lambda lattice at ``x = dx (mod 1)``; the lambda/2 lattice
    has its minima at x = 1/4 (left site) and x = 3/4 (right site).
    """

    v_half: float = 80.0
    v_lambda: float = 0.0
    dx: float = -0.5
    pol_phase: float = 0.0
    total_scale: float = 1.0

    def __post_init__(self):
        for name in ("v_half", "v_lambda", "dx", "pol_phase", "total_scale"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"controls.{name} must be finite")
        if self.v_half < 0:
            raise ValueError("controls.v_half must be >= 0")
        if self.v_lambda < 0:
            raise ValueError("controls.v_lambda must be >= 0")
        if not -1.0 <= self.dx <= 0.0:
            raise ValueError("controls.dx must lie in [-1, 0]")
        if self.total_scale < 0:
            raise ValueError("controls.total_scale must be >= 0")

    @property
    def intensity_ratio(self) -> float:
        """I_lambda / I_lambda/2 (vertical over in-plane intensity)."""
        if self.v_half == 0:
            return np.inf
        return self.v_lambda / (4.0 * self.v_half)


@dataclass
class SpinPotentialGrid:
    x: np.ndarray
    v_m_minus1: np.ndarray
    v_m0: np.ndarray
    b_eff_proj: np.ndarray
    controls: LatticeControls | None = None
    metadata: dict = field(default_factory=dict)

    def potential(self, mF: int) -> np.ndarray:
        if mF == -1:
            return self.v_m_minus1
        if mF == 0:
            return self.v_m0
        raise ValueError(f"unsupported m_F={mF}")


def synthesize_field(beams: BeamSet, r) -> np.ndarray:
    """Complex field amplitude at position(s) ``r`` (shape (..., 3), in wavelengths)."""
    if not isinstance(beams, BeamSet) or len(beams) == 0:
        raise ValueError("beam set is empty")
    r = np.asarray(r, dtype=float)
    E = np.zeros(r.shape[:-1] + (3,), dtype=complex)
    for b in beams:
        phase = beams.wavenumber * (r @ b.k_hat) + b.phase
        E += (b.amplitude * np.exp(1j * phase))[..., None] * b.jones
    return E


def scalar_potential(E, c: PhysicalConstants) -> np.ndarray:
    """Polarisation-independent shift -alpha_s |E|^2 / 4, in Hz."""
    E = np.asarray(E)
    intensity = np.sum(np.abs(E) ** 2, axis=-1)
    return -c.alpha_s * intensity / 4.0


def effective_field(E, c: PhysicalConstants) -> np.ndarray:
    """Vector light shift as a real 3-vector, Hz of shift per unit m_F."""
    E = np.asarray(E, dtype=complex)
    v = 1j * np.cross(np.conj(E), E)
    scale = np.max(np.abs(E) ** 2, initial=0.0)
    if scale > 0 and np.max(np.abs(v.imag)) > _IMAG_TOL * scale:
        raise ArithmeticError("i(E* x E) has a non-negligible imaginary part")
    return c.alpha_v / 4.0 * v.real


def _total_field(E, b: BiasField, c: PhysicalConstants) -> np.ndarray:
    b_eff = effective_field(E, c) / c.gF_muB
    return b.B0 + b_eff


def spin_potential(E, b: BiasField, mF: int, c: PhysicalConstants) -> np.ndarray:
    """Light shift plus Zeeman energy of state m_F in the total field, in Hz."""
    if mF not in SUPPORTED_MF:
        raise ValueError(f"unsupported m_F={mF}; only {SUPPORTED_MF} are modelled")
    u_s = scalar_potential(E, c)
    if mF == 0:
        return u_s
    b_tot = np.linalg.norm(_total_field(E, b, c), axis=-1)
    return u_s + mF * c.gF_muB * b_tot + c.q_quad * mF**2 * b_tot**2


def zeeman_projection(E, b: BiasField, c: PhysicalConstants) -> np.ndarray:
    """Change of the linear Zeeman energy per unit m_F caused by B_eff, in Hz."""
    b_tot = np.linalg.norm(_total_field(E, b, c), axis=-1)
    return c.gF_muB * (b_tot - b.magnitude)


LATTICE_K_HATS = np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0], [0, -1.0, 0]])
LATTICE_PHASES = np.array([np.pi / 2, -np.pi / 2, 0.0, 0.0])


def lattice_beam_parameters(v_half, v_lambda, dx, pol_phase, total_scale, c: PhysicalConstants):
    """Array form of :func:`controls_to_beams` (broadcasts over control arrays).

    Returns ``(amplitude, jones)`` with shapes (...) and (..., 4, 3); beam
    directions and phases are :data:`LATTICE_K_HATS` and :data:`LATTICE_PHASES`.
    """
    e_r = c.recoil_energy
    v_h = np.asarray(v_half, dtype=float) * e_r
    v_l = np.asarray(v_lambda, dtype=float) * e_r
    # depth_half = alpha_s a^2 cos^2, depth_lambda = 4 alpha_s a^2 sin^2
    a2 = np.asarray(total_scale, dtype=float) * (v_h + v_l / 4.0) / c.alpha_s
    amp = np.sqrt(a2)
    theta = np.where(a2 > 0, np.arctan2(np.sqrt(v_l / 4.0), np.sqrt(v_h)), 0.0)
    cs, sn = np.cos(theta), np.sin(theta)
    phi = np.asarray(pol_phase, dtype=float)
    kx0 = K * np.asarray(dx, dtype=float)
    shape = np.broadcast(amp, phi, kx0).shape
    jones = np.zeros(shape + (4, 3), dtype=complex)
    # x pair: in-plane standing wave -2 sin(kx) y, vertical 2 cos(k(x - dx)) z
    jones[..., 0, 1] = cs
    jones[..., 0, 2] = sn * np.exp(1j * (phi - kx0 - np.pi / 2))
    jones[..., 1, 1] = cs
    jones[..., 1, 2] = sn * np.exp(1j * (phi + kx0 + np.pi / 2))
    # y pair: 2 cos(ky) for both polarisation parts
    jones[..., 2:, 0] = np.asarray(cs)[..., None]
    jones[..., 2:, 2] = np.asarray(sn * np.exp(1j * phi))[..., None]
    return np.broadcast_to(amp, shape), jones


def controls_to_beams(controls: LatticeControls, c: PhysicalConstants) -> BeamSet:
    """Four-beam set realising the requested lattice depths and offset.

    Every beam has polarisation cos(t) e_inplane + sin(t) e^{i phi_j} z. The
    per-beam vertical phases put the lambda-lattice minimum at ``dx`` and
    ``pol_phase`` sets the temporal phase between vertical and in-plane light.
    """
    if not isinstance(controls, LatticeControls):
        raise TypeError("controls must be LatticeControls")
    amp, jones = lattice_beam_parameters(controls.v_half, controls.v_lambda, controls.dx,
                                         controls.pol_phase, controls.total_scale, c)
    return BeamSet(tuple(Beam(k, float(amp), j, ph)
                         for k, j, ph in zip(LATTICE_K_HATS, jones, LATTICE_PHASES)))


def lattice_cut_field(v_half, v_lambda, dx, pol_phase, total_scale, x, c: PhysicalConstants):
    """Field on the y = 0 cut for arrays of controls: shape (..., len(x), 3)."""
    amp, jones = lattice_beam_parameters(v_half, v_lambda, dx, pol_phase, total_scale, c)
    pw = np.exp(1j * (K * np.outer(np.asarray(x), LATTICE_K_HATS[:, 0]) + LATTICE_PHASES))  # (n, 4)
    return np.einsum("nj,...jc->...nc", pw, amp[..., None, None] * jones)


def cut_points(n: int) -> tuple[np.ndarray, np.ndarray]:
    x = np.arange(n) / n
    r = np.zeros((n, 3))
    r[:, 0] = x
    return x, r


def sample_cut(beams: BeamSet, b: BiasField, n: int, c: PhysicalConstants,
               controls: LatticeControls | None = None) -> SpinPotentialGrid:
    """Sample both spin potentials along y = 0 over one cell x in [0, 1)."""
    if n < 16:
        raise ValueError("need at least 16 samples per cell")
    x, r = cut_points(n)
    E = synthesize_field(beams, r)
    return SpinPotentialGrid(
        x=x,
        v_m_minus1=spin_potential(E, b, -1, c),
        v_m0=spin_potential(E, b, 0, c),
        b_eff_proj=zeeman_projection(E, b, c),
        controls=controls,
    )


def measure_controls(beams: BeamSet, c: PhysicalConstants, n: int = 1024) -> dict:
    """Recover (v_half, v_lambda, dx) from the sampled potentials of a beam set.

    The in-plane and vertical components do not interfere, so each part's
    scalar potential is sampled on its own; depths are peak-to-peak in E_R and
    dx comes from the phase of the first harmonic of the vertical part.
    """
    in_plane, vertical = beams.split_polarization()
    _, r = cut_points(n)
    e_r = c.recoil_energy
    out = {"v_half": 0.0, "v_lambda": 0.0, "dx": float("nan")}
    if in_plane is not None:
        u = scalar_potential(synthesize_field(in_plane, r), c)
        out["v_half"] = float(np.ptp(u) / e_r)
    if vertical is not None:
        u = scalar_potential(synthesize_field(vertical, r), c)
        out["v_lambda"] = float(np.ptp(u) / e_r)
        c1 = np.fft.fft(u)[1] / n
        if abs(c1) > 1e-12 * max(np.ptp(u), 1e-300):
            # u ~ A cos(2 pi (x - x0)) with A < 0, so c1 = (A/2) exp(-2 pi i x0)
            x_min = (-np.angle(-c1) / (2 * np.pi)) % 1.0
            out["dx"] = float(x_min - 1.0)
    return out
