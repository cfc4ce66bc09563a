import math
from dataclasses import replace

import numpy as np
import pytest

from dwlattice.constants import BiasField, PhysicalConstants
from dwlattice.dynamics import (
    CELL_BARRIER,
    ControlSchedule,
    Propagator,
    RfPulse,
    Segment,
    SpinorState,
    TransportConfig,
    hold,
    load_ground_state,
    measure_site_populations,
    momentum_distribution,
    transport_initial_state,
    transport_sequence,
    two_site_coherence,
)
from dwlattice.field import LatticeControls
from dwlattice.stationary import Grid1D, build_hamiltonian, lowest_eigenpairs

C, B = PhysicalConstants(), BiasField()
DEEP = LatticeControls(60.0, 20.0, -0.45, -0.8)
OFF = LatticeControls(0.0, 0.0, -0.5, 0.0, 0.0)


def random_state(grid, seed=0, batch=()):
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=batch + (2, grid.n)) + 1j * rng.normal(size=batch + (2, grid.n))
    # smooth it so the energy stays within the band the step size resolves
    psi = np.fft.ifft(np.fft.fft(psi, axis=-1) * (np.abs(grid.q) <= 4), axis=-1)
    psi /= np.sqrt(np.sum(np.abs(psi) ** 2, axis=(-2, -1), keepdims=True) * grid.dx_step)
    return SpinorState(psi, grid)


def inner(grid, a, b):
    return np.sum(np.conj(a) * b, axis=(-2, -1)) * grid.dx_step


@pytest.fixture(scope="module")
def prop():
    return Propagator(C, B, Grid1D(64))


def rf_schedule(prop, dt=0.02):
    nu = prop.bare_frequency
    return ControlSchedule((Segment(20.0, DEEP, replace(DEEP, dx=-0.4), "minimum_jerk"),),
                           (RfPulse(30e3, nu + 2e3, 0.4, 10.0, 5.0),), dt=dt)


def test_unitarity(prop):
    s = random_state(prop.grid, batch=(2,))
    out = prop.run(s, rf_schedule(prop))
    assert np.max(np.abs(out.norm2() - 1)) < 1e-9
    # inner products are preserved, not just norms
    assert abs(inner(prop.grid, out.psi[0], out.psi[1]) - inner(prop.grid, s.psi[0], s.psi[1])) < 1e-9


def test_eigenstate_is_stationary(prop):
    v_m1, _ = prop.potentials(DEEP)
    sol = lowest_eigenpairs(build_hamiltonian(prop.grid, v_m1 - prop.bare_frequency, C), 1)
    s = SpinorState.from_components(sol.states[0], np.zeros(prop.grid.n), prop.grid)
    out = prop.run(s, ControlSchedule((hold(DEEP, 50.0),), dt=0.01))
    overlap = inner(prop.grid, s.psi, out.psi)
    assert abs(overlap) ** 2 > 1 - 1e-8
    assert np.angle(overlap) == pytest.approx(
        np.angle(np.exp(-2j * np.pi * sol.energies[0] * 50e-6)), abs=1e-3)


def test_spin_populations_conserved_without_rf(prop):
    s = random_state(prop.grid, seed=3)
    out = prop.run(s, ControlSchedule((Segment(30.0, DEEP, replace(DEEP, dx=-0.35, v_lambda=5.0)),), dt=0.02))
    assert np.allclose(out.spin_populations(), s.spin_populations(), atol=1e-10)


def test_free_rabi_oscillation(prop):
    # lattice off: the resonant pulse drives the textbook sin^2 transfer
    nu = prop.bare_frequency
    s = SpinorState.from_components(np.ones(prop.grid.n), np.zeros(prop.grid.n), prop.grid)
    for t in (5.0, 12.5, 20.0):
        sched = ControlSchedule((hold(OFF, t),), (RfPulse(40e3, nu, 0.0, t, 0.0),), dt=0.05)
        p0 = prop.run(s, sched).spin_populations()[1]
        assert p0 == pytest.approx(math.sin(math.pi * 40e3 * t * 1e-6) ** 2, abs=1e-10)


def test_second_order_convergence(prop):
    s = random_state(prop.grid, seed=1)
    ref = prop.run(s, rf_schedule(prop, dt=0.0025)).psi
    errs = [np.sqrt(np.sum(np.abs(prop.run(s, rf_schedule(prop, dt=dt)).psi - ref) ** 2) * prop.grid.dx_step)
            for dt in (0.04, 0.02)]
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_time_reversal(prop):
    s = random_state(prop.grid, seed=2, batch=(3,))
    sched = rf_schedule(prop)
    fwd = prop.run(s, sched)
    back = prop.run(SpinorState(np.conj(fwd.psi), prop.grid), sched.time_reversed(prop.bare_frequency))
    fid = np.abs(inner(prop.grid, np.conj(back.psi), s.psi)) ** 2
    assert np.all(fid > 1 - 1e-8)
    with pytest.raises(ValueError, match="frame"):
        sched.time_reversed()


def test_energy_conserved_in_static_lattice(prop):
    # non-stationary mix of the four lowest bands of each spin, at the production step
    rng = np.random.default_rng(4)
    v_m1, v_0 = prop.potentials(DEEP)
    psi = np.zeros((2, prop.grid.n), dtype=complex)
    for k, v in enumerate((v_m1 - prop.bare_frequency, v_0)):
        sol = lowest_eigenpairs(build_hamiltonian(prop.grid, v, C), 4)
        psi[k] = (rng.normal(size=4) + 1j * rng.normal(size=4)) @ sol.states
    s = SpinorState(psi / np.sqrt(np.sum(np.abs(psi) ** 2) * prop.grid.dx_step), prop.grid)
    e0 = prop.energy(s, DEEP)
    out = prop.run(s, ControlSchedule((hold(DEEP, 1000.0),), dt=0.02))
    assert abs(prop.energy(out, DEEP) - e0) / abs(e0) < 1e-8


def test_dt_guard(prop):
    with pytest.raises(ValueError, match="too large"):
        prop.run(random_state(prop.grid), ControlSchedule((hold(DEEP, 10.0),), dt=5.0))


def test_schedule_validation():
    with pytest.raises(ValueError):
        ControlSchedule(())
    with pytest.raises(ValueError):
        ControlSchedule((hold(DEEP, 10.0),), (RfPulse(1e3, 0.0, 0.0, 5.0, 8.0),))
    with pytest.raises(ValueError):
        Segment(0.0, DEEP, DEEP)
    with pytest.raises(ValueError):
        Segment(1.0, DEEP, DEEP, "cubic")
    with pytest.raises(ValueError):
        RfPulse(-1.0, 0.0)


def test_reversed_segment_plays_backwards():
    seg = Segment(10.0, DEEP, replace(DEEP, dx=-0.3), "minimum_jerk")
    rev = replace(seg, reverse=True)
    t = np.linspace(0, 10, 7)
    assert np.allclose(rev.values_at(t)["dx"], seg.values_at(10 - t)["dx"])


def test_adiabatic_load_beats_sudden():
    target = LatticeControls(40.0, 0.0, -0.5, 0.0)
    slow = load_ground_state(target, C, B, Grid1D(64), duration=500.0, tau=100.0)
    fast = load_ground_state(target, C, B, Grid1D(64), duration=2.0, tau=0.4)
    assert slow.overlap >= 0.99
    assert fast.overlap < slow.overlap - 0.05
    with pytest.raises(ValueError):
        load_ground_state(LatticeControls(5.0, 0.0), C, B, Grid1D(64))


def gaussian(grid, x0, w=0.05):
    d = (grid.x - x0 + 0.5) % 1 - 0.5
    return np.exp(-d**2 / (2 * w**2))


def site_state(grid, a, b):
    psi = a * gaussian(grid, 0.25) + b * gaussian(grid, 0.75)
    psi = psi / np.sqrt(grid.norm2(psi))
    return SpinorState.from_components(psi, np.zeros(grid.n), grid)


@pytest.mark.parametrize("a, b", [(1, 1), (1, 1j), (1, 0.5), (1, 0)])
def test_two_site_coherence_oracle(a, b):
    grid = Grid1D(256)
    vis, period = two_site_coherence(site_state(grid, a, b))
    expected = 2 * abs(a * b) / (abs(a) ** 2 + abs(b) ** 2)
    assert vis == pytest.approx(expected, abs=1e-3)
    if expected > 0.1:
        assert period == pytest.approx(2.0, rel=1e-9)


def test_momentum_distribution_fringes_follow_phase():
    grid = Grid1D(256)
    for phase, at_zero in ((0.0, "max"), (np.pi, "min")):
        prof = momentum_distribution(site_state(grid, 1, np.exp(1j * phase)))
        assert np.sum(prof.density) * (prof.momentum[1] - prof.momentum[0]) == pytest.approx(1)
        centre = np.argmin(np.abs(prof.momentum))
        near = prof.density[np.abs(prof.momentum) < 1.0]
        value = prof.density[centre]
        assert value == pytest.approx(near.max() if at_zero == "max" else near.min(), rel=1e-6)


def test_momentum_distribution_many_cells_sharpens():
    grid = Grid1D(128)
    s = site_state(grid, 1, 1)
    one = momentum_distribution(s)
    many = momentum_distribution(s, cell_count=8)
    dp = one.momentum[1] - one.momentum[0]
    assert np.sum(many.density**2) * dp > np.sum(one.density**2) * dp
    with pytest.raises(ValueError):
        momentum_distribution(s, cell_count=0)


def test_site_populations():
    grid = Grid1D(128)
    s = site_state(grid, np.sqrt(0.3), np.sqrt(0.7))
    pops = measure_site_populations(s, CELL_BARRIER)
    assert pops[0] == pytest.approx([0.3, 0.7], abs=1e-6)
    assert pops[1] == pytest.approx([0, 0])


def test_transport_without_vector_shift_ignores_spin():
    grid = Grid1D(64)
    c_off = replace(C, alpha_v=0.0)
    cfg = TransportConfig(dt=0.05, step1_duration=60.0, step2_duration=20.0)
    start = transport_initial_state(Propagator(c_off, B, grid), cfg)
    res = transport_sequence(start, -0.45, c_off, B, cfg)
    assert np.allclose(res.populations[0, 0], res.populations[1, 1], atol=1e-10)


def test_transport_sorts_spins():
    grid = Grid1D(64)
    cfg = TransportConfig(dt=0.05)
    start = transport_initial_state(Propagator(C, B, grid), cfg)
    res = transport_sequence(start, -0.48, C, B, cfg)
    p_left_m1 = res.populations[0, 0, 0]
    p_right_0 = res.populations[1, 1, 1]
    assert p_left_m1 > 0.85 and p_right_0 > 0.85


def test_transport_input_checks():
    grid = Grid1D(64)
    start = transport_initial_state(Propagator(C, B, grid), TransportConfig())
    with pytest.raises(ValueError, match="outside"):
        transport_sequence(start, -0.2, C, B)
    with pytest.raises(ValueError, match="normalised"):
        transport_sequence(SpinorState(2 * start.psi, grid), -0.45, C, B)
    with pytest.raises(ValueError):
        TransportConfig(step1_shape="exponential")
