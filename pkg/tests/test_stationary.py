import numpy as np
import pytest

from dwlattice.constants import PhysicalConstants
from dwlattice.stationary import (
    Grid1D,
    build_hamiltonian,
    find_barrier,
    ground_band_overlap,
    localize_sites,
    lowest_eigenpairs,
    site_spectrum,
    transition_frequencies,
)

C = PhysicalConstants()
E_R = C.recoil_energy


def cosine_well(grid, depth, period=1.0):
    """Scalar lattice with minima at x = 0 (mod period), depth in Hz."""
    return -depth / 2 * (1 + np.cos(2 * np.pi * grid.x / period))


def test_free_particle_levels():
    grid = Grid1D(64)
    sol = lowest_eigenpairs(build_hamiltonian(grid, np.zeros(grid.n), C), 5)
    # plane waves with q = 0, +-1, +-2 cycles per cell
    assert sol.energies == pytest.approx(E_R * np.array([0, 1, 1, 4, 4]), abs=1e-6 * E_R)


def test_mathieu_ground_state_against_independent_solver():
    # E0 for V = -V0 cos^2(pi x / (1/2)) from a plane-wave basis built independently
    depth = 80 * E_R
    grid = Grid1D(256)
    sol = lowest_eigenpairs(build_hamiltonian(grid, cosine_well(grid, depth, 0.5), C), 2)
    m = np.arange(-20, 21)
    H = np.diag(E_R * (2 * m) ** 2 - depth / 2).astype(float)
    for i in range(len(m) - 1):
        H[i, i + 1] = H[i + 1, i] = -depth / 4
    e0 = np.linalg.eigvalsh(H)[0]
    assert sol.energies[0] == pytest.approx(e0, abs=1e-6 * depth)


def test_finite_difference_agrees_with_spectral():
    grid = Grid1D(256)
    v = cosine_well(grid, 40 * E_R, 0.5)
    a = lowest_eigenpairs(build_hamiltonian(grid, v, C, kinetic="spectral"), 4).energies
    b = lowest_eigenpairs(build_hamiltonian(grid, v, C, kinetic="fd"), 4).energies
    assert np.max(np.abs(a - b)) < 1e-3 * E_R


def test_states_are_normalised_and_phase_fixed():
    grid = Grid1D(128)
    sol = lowest_eigenpairs(build_hamiltonian(grid, cosine_well(grid, 30 * E_R, 0.5), C), 4)
    for s in sol.states:
        assert grid.norm2(s) == pytest.approx(1, abs=1e-12)
        k = np.argmax(np.abs(s))
        assert abs(s[k].imag) < 1e-12 and s[k].real > 0


def test_double_well_localization_and_barrier():
    grid = Grid1D(256)
    # wells at 0.25 and 0.75, left one deeper
    v = -80 * E_R * np.sin(2 * np.pi * grid.x) ** 2 - 5 * E_R * np.sin(2 * np.pi * grid.x)
    barrier = find_barrier(grid.x, v)
    assert barrier == pytest.approx(0.5, abs=2 / grid.n)
    sol, sites = site_spectrum(v, grid, C)
    assert sites.localization > 0.99
    left = grid.x < barrier
    assert grid.norm2(sites.left_state * left) > 0.99
    assert grid.norm2(sites.right_state * ~left) > 0.99
    assert sites.e_left < sites.e_right


def test_transition_frequencies_are_energy_differences():
    grid = Grid1D(128)
    base = -60 * E_R * np.sin(2 * np.pi * grid.x) ** 2
    tilt = -3 * E_R * np.sin(2 * np.pi * grid.x)
    _, s1 = site_spectrum(base + tilt + 1e6, grid, C, barrier_position=0.5)
    _, s0 = site_spectrum(base, grid, C, barrier_position=0.5)
    table = transition_frequencies(s1, s0)
    assert table.nu_left == s1.e_left - s0.e_left
    assert table.nu_right == s1.e_right - s0.e_right
    # the tilt deepens the left well and raises the right one
    assert table.nu_left < 1e6 < table.nu_right


def test_ground_band_overlap():
    grid = Grid1D(128)
    sol = lowest_eigenpairs(build_hamiltonian(grid, cosine_well(grid, 50 * E_R, 0.5), C), 2)
    assert ground_band_overlap(sol.states[0], sol) == pytest.approx(1, abs=1e-12)
    with pytest.raises(ValueError):
        ground_band_overlap(2 * sol.states[0], sol)


def test_errors():
    with pytest.raises(ValueError):
        Grid1D(8)
    grid = Grid1D(64)
    with pytest.raises(ValueError):
        build_hamiltonian(grid, np.zeros(10), C)
    H = build_hamiltonian(grid, np.zeros(grid.n), C)
    with pytest.raises(ValueError):
        lowest_eigenpairs(H, 0)
    # a single well inside the left half: no state lives on the right
    v = -20 * E_R * np.cos(np.pi * (grid.x - 0.25)) ** 2
    sol = lowest_eigenpairs(build_hamiltonian(grid, v, C), 2)
    with pytest.raises(ValueError, match="not resolved"):
        localize_sites(sol, 0.5)
