"""Vibrational levels, site-localised states and sublattice transition frequencies."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh

from dwlattice.constants import PhysicalConstants


@dataclass(frozen=True)
class Grid1D:
    n: int = 256
    length: float = 1.0  # wavelengths

    def __post_init__(self):
        if self.n < 16:
            raise ValueError("grid needs n >= 16")
        if not self.length > 0:
            raise ValueError("grid length must be positive")

    @property
    def dx_step(self) -> float:
        return self.length / self.n

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n) * self.dx_step

    @property
    def q(self) -> np.ndarray:
        """Spatial frequencies in cycles per wavelength."""
        return np.fft.fftfreq(self.n, d=self.dx_step)

    def kinetic(self, c: PhysicalConstants) -> np.ndarray:
        """Kinetic energy of each Fourier mode, in Hz."""
        return c.recoil_energy * self.q**2

    def inner(self, a, b) -> complex:
        return np.vdot(a, b) * self.dx_step

    def norm2(self, a) -> float:
        return float(np.sum(np.abs(a) ** 2) * self.dx_step)


@dataclass
class Hamiltonian:
    matrix: np.ndarray
    grid: Grid1D
    potential: np.ndarray
    metadata: dict = field(default_factory=dict)


@dataclass
class EigenSolution:
    energies: np.ndarray
    states: np.ndarray  # (n_states, n), normalised so sum |psi|^2 dx = 1
    residuals: np.ndarray
    grid: Grid1D
    hamiltonian: Hamiltonian | None = None


@dataclass
class SiteStates:
    left_state: np.ndarray
    right_state: np.ndarray
    e_left: float
    e_right: float
    localization: float
    barrier_position: float


@dataclass
class TransitionTable:
    nu_left: float
    nu_right: float

    @property
    def splitting(self) -> float:
        return self.nu_right - self.nu_left


def _fd_kinetic_matrix(grid: Grid1D, c: PhysicalConstants, order: int = 8) -> np.ndarray:
    # central-difference weights for d^2/dx^2 on a periodic grid
    half = order // 2
    offsets = np.arange(-half, half + 1)
    A = np.vander(offsets, increasing=True).T.astype(float)
    rhs = np.zeros(len(offsets))
    rhs[2] = 2.0
    w = np.linalg.solve(A, rhs)
    n = grid.n
    D2 = np.zeros((n, n))
    for off, wk in zip(offsets, w):
        D2 += wk * np.roll(np.eye(n), off, axis=1)
    D2 /= grid.dx_step**2
    # E_R q^2 for a plane wave exp(2 pi i q x) -> -E_R/(2 pi)^2 d^2/dx^2
    return -c.recoil_energy / (2 * np.pi) ** 2 * D2


def _spectral_kinetic_matrix(grid: Grid1D, c: PhysicalConstants) -> np.ndarray:
    n = grid.n
    F = np.fft.fft(np.eye(n), axis=0)
    T = np.conj(F).T @ (grid.kinetic(c)[:, None] * F) / n
    return 0.5 * (T + np.conj(T).T)


def build_hamiltonian(grid: Grid1D, potential, c: PhysicalConstants,
                      kinetic: str = "spectral") -> Hamiltonian:
    """Dense single-particle Hamiltonian (Hz) on a periodic grid."""
    potential = np.asarray(potential, dtype=float)
    if potential.shape != (grid.n,):
        raise ValueError(f"potential has {potential.shape} samples, grid has {grid.n}")
    if kinetic == "spectral":
        T = _spectral_kinetic_matrix(grid, c)
    elif kinetic == "fd":
        T = _fd_kinetic_matrix(grid, c).astype(complex)
    else:
        raise ValueError(f"unknown kinetic discretisation {kinetic!r}")
    H = T + np.diag(potential)
    return Hamiltonian(H, grid, potential, {"kinetic": kinetic})


def _fix_phase(v: np.ndarray) -> np.ndarray:
    k = np.argmax(np.abs(v))
    return v * (np.abs(v[k]) / v[k])


def lowest_eigenpairs(H: Hamiltonian, n_states: int, tol: float = 1e-8) -> EigenSolution:
    """Lowest eigenpairs by dense diagonalisation.

    Each state's global phase is fixed by making its largest component real
    and positive. ``tol`` bounds the residual relative to the energy scale
    of the Hamiltonian.
    """
    grid = H.grid
    if n_states < 1 or n_states > grid.n // 4:
        raise ValueError("n_states must be in [1, n/4]")
    w, v = eigh(H.matrix, subset_by_index=(0, n_states - 1))
    states = np.array([_fix_phase(v[:, i]) for i in range(n_states)])
    residuals = np.linalg.norm(H.matrix @ states.T - states.T * w, axis=0)
    scale = max(np.max(np.abs(np.diag(H.matrix))), 1.0)
    if np.any(residuals > tol * scale):
        raise ArithmeticError(f"eigensolver residuals too large: {residuals}")
    return EigenSolution(w, states / np.sqrt(grid.dx_step), residuals, grid, H)


def find_barrier(x, potential) -> float:
    """Position of the barrier between the two deepest wells of one cell."""
    v = np.asarray(potential)
    n = len(v)
    is_min = (v < np.roll(v, 1)) & (v <= np.roll(v, -1))
    minima = np.flatnonzero(is_min)
    if len(minima) < 2:
        # single well: put the split opposite the lone minimum's outer barrier
        i0 = minima[0] if len(minima) else int(np.argmin(v))
        return float(x[i0])
    a, b = sorted(minima[np.argsort(v[minima])[:2]])
    # search the arc between a and b that excludes the global maximum
    inner = np.arange(a, b + 1)
    outer = np.r_[np.arange(b, n), np.arange(0, a + 1)]
    arc = inner if np.max(v[inner]) <= np.max(v[outer]) else outer
    return float(x[arc[np.argmax(v[arc])]])


def half_cell_mask(x, barrier_position: float) -> np.ndarray:
    """True on the left half-cell, split at the barrier and at the cell edge."""
    return np.asarray(x) < barrier_position


def localize_sites(sol: EigenSolution, barrier_position: float) -> SiteStates:
    """Rotate the lowest doublet into maximally left- and right-localised states."""
    if len(sol.energies) < 2:
        raise ValueError("need at least two states")
    grid = sol.grid
    left = half_cell_mask(grid.x, barrier_position)
    psi = sol.states[:2]
    M = np.array([[grid.inner(psi[i] * left, psi[j]) for j in range(2)] for i in range(2)])
    M = 0.5 * (M + np.conj(M).T)
    p, U = np.linalg.eigh(M)
    right_state = _fix_phase(U[:, 0] @ psi)
    left_state = _fix_phase(U[:, 1] @ psi)
    Hsub = np.diag(sol.energies[:2])
    e_left = float(np.real(np.conj(U[:, 1]) @ Hsub @ U[:, 1]))
    e_right = float(np.real(np.conj(U[:, 0]) @ Hsub @ U[:, 0]))
    localization = float(min(p[1], 1 - p[0]))
    if localization < 0.75:
        raise ValueError(f"wells not resolved (localization {localization:.3f})")
    return SiteStates(left_state, right_state, e_left, e_right, localization, barrier_position)


def transition_frequencies(sites_minus1: SiteStates, sites_0: SiteStates) -> TransitionTable:
    """|-1> -> |0> rf resonance in each sublattice, in Hz."""
    if sites_minus1.barrier_position != sites_0.barrier_position:
        raise ValueError("site states come from different cells")
    if sites_minus1.left_state.shape != sites_0.left_state.shape:
        raise ValueError("site states live on different grids")
    return TransitionTable(
        nu_left=sites_minus1.e_left - sites_0.e_left,
        nu_right=sites_minus1.e_right - sites_0.e_right,
    )


def ground_band_overlap(state, sol: EigenSolution, atol: float = 1e-6) -> float:
    """Probability of ``state`` within the span of the supplied eigenstates."""
    state = np.asarray(state)
    grid = sol.grid
    norm = grid.norm2(state)
    if abs(norm - 1) > atol:
        raise ValueError(f"state is not normalised (norm^2 = {norm})")
    return float(sum(abs(grid.inner(s, state)) ** 2 for s in sol.states))


def site_spectrum(potential, grid: Grid1D, c: PhysicalConstants, n_states: int = 4,
                  barrier_position: float | None = None):
    """Eigenpairs and localised site states for one spin's potential."""
    H = build_hamiltonian(grid, potential, c)
    sol = lowest_eigenpairs(H, n_states)
    if barrier_position is None:
        barrier_position = find_barrier(grid.x, potential)
    return sol, localize_sites(sol, barrier_position)
