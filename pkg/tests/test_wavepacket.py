import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import seeds
from qmlab.errors import InconclusiveRunError, PlacementError, ValidationError
from qmlab.rng import CounterRng
from qmlab.wavepacket import (
    BarrierSpec,
    Grid1D,
    PacketParams,
    arrival_chisquare,
    barrier_setup,
    binned_probabilities,
    direction_split,
    double_slit,
    energy,
    free_width,
    gaussian_packet,
    local_maxima,
    plane_wave_transmission,
    propagate,
    sample_positions,
    scatter_barrier,
    two_path_state,
)

GRID = Grid1D(-40.0, 40.0, 1024)


def matching_transmission(e, v0, a):
    """Transmission from the 4x4 continuity system at x = 0 and x = a.

    Unknowns (r, B, C, t); inside the barrier ``q = sqrt(2 (E - V0))`` is
    complex below the top, so one code path covers both regimes.
    """
    k = np.sqrt(2 * e + 0j)
    q = np.sqrt(2 * (e - v0) + 0j)
    eq, em = np.exp(1j * q * a), np.exp(-1j * q * a)
    ek = np.exp(1j * k * a)
    m = np.array([
        [-1, 1, 1, 0],
        [1j * k, 1j * q, -1j * q, 0],
        [0, eq, em, -ek],
        [0, 1j * q * eq, -1j * q * em, -1j * k * ek],
    ])
    rhs = np.array([1, 1j * k, 0, 0])
    t = np.linalg.solve(m, rhs)[3]
    return float(abs(t) ** 2)


def test_grid_guards():
    with pytest.raises(ValidationError):
        Grid1D(-1, 1, 100)
    with pytest.raises(ValidationError):
        Grid1D(1, -1, 512)
    g = Grid1D(-1, 1, 513)
    assert g.dt == pytest.approx(g.dx**2)
    with pytest.raises(ValidationError):
        Grid1D(-1, 1, 513, dt=2 * g.dx**2)


def test_packet_guards():
    with pytest.raises(ValidationError):
        gaussian_packet(GRID, 0.0, 1.0, 0.1)
    with pytest.raises(PlacementError):
        gaussian_packet(GRID, 35.0, 1.0, 2.0)


def test_packet_moments():
    psi = gaussian_packet(GRID, -5.0, 1.5, 2.0)
    assert psi.norm == pytest.approx(1.0, abs=1e-12)
    assert psi.mean_position() == pytest.approx(-5.0, abs=1e-10)
    assert psi.position_spread() == pytest.approx(2.0, rel=1e-6)
    assert psi.mean_momentum() == pytest.approx(1.5, abs=1e-6)
    assert psi.position_spread() * psi.momentum_spread() == pytest.approx(0.5, rel=1e-4)


@pytest.mark.parametrize("values", [np.ones(GRID.n_points), np.ones(10)])
def test_wavepacket_validates(values):
    from qmlab.wavepacket import WavePacket
    with pytest.raises(ValidationError):
        WavePacket(values, GRID)


def test_free_motion_speed_and_spreading():
    psi0 = gaussian_packet(GRID, -10.0, 1.0, 2.0)
    psi = propagate(psi0, None, 10.0)
    assert psi.mean_position() == pytest.approx(0.0, abs=0.005 * 10)
    assert psi.position_spread() == pytest.approx(free_width(2.0, 10.0), rel=0.01)


def test_stationary_packet_only_spreads():
    psi = propagate(gaussian_packet(GRID, 3.0, 0.0, 2.0), None, 8.0)
    assert psi.mean_position() == pytest.approx(3.0, abs=1e-8)
    assert psi.mean_momentum() == pytest.approx(0.0, abs=1e-10)


def test_zero_time_is_identity():
    psi = gaussian_packet(GRID, 0.0, 1.0, 2.0)
    assert propagate(psi, None, 0.0) is psi
    with pytest.raises(ValidationError):
        propagate(psi, None, -1.0)


def test_norm_and_energy_conserved_with_barrier():
    barrier = BarrierSpec(1.0, 1.0)
    v = barrier.potential(GRID)
    psi0 = gaussian_packet(GRID, -15.0, 1.2, 2.5)
    e0 = energy(psi0, v)
    values = psi0.values
    psi = propagate(psi0, v, 15.0)
    raw_norm = np.sum(np.abs(psi.values) ** 2) * GRID.dx
    assert abs(raw_norm - 1) < 1e-8
    assert abs(energy(psi, v) - e0) < 1e-6
    assert np.array_equal(psi0.values, values)


def test_barrier_potential_is_cell_averaged():
    g = Grid1D(-1.0, 1.0, 257)
    v = BarrierSpec(2.0, 0.3, 0.01).potential(g)
    assert np.sum(v) * g.dx == pytest.approx(2.0 * 0.3, rel=1e-12)
    assert v.max() == 2.0


def test_direction_split_is_complete():
    psi = gaussian_packet(GRID, 0.0, 2.0, 2.0)
    right, left = direction_split(psi)
    assert np.allclose(right + left, psi.values, atol=1e-12)
    assert np.sum(np.abs(left) ** 2) * GRID.dx < 1e-12


@pytest.mark.parametrize(
    "e, v0, a",
    [(1.0, 2.0, 1.0), (1.0, 2.0, 0.5), (3.0, 2.0, 1.0), (2.0 + 1e-3, 2.0, 1.0), (1.5, 1.0, 2.0)],
)
def test_plane_wave_formula_matches_matching_conditions(e, v0, a):
    assert plane_wave_transmission(e, v0, a) == pytest.approx(matching_transmission(e, v0, a), rel=1e-9)


def test_plane_wave_at_barrier_top_is_continuous():
    # The matching system is singular exactly at E = V0; approach from both sides.
    top = plane_wave_transmission(2.0, 2.0, 1.0)
    for eps in (1e-5, -1e-5):
        assert top == pytest.approx(matching_transmission(2.0 + eps, 2.0, 1.0), rel=1e-4)


def test_plane_wave_limits():
    assert plane_wave_transmission(1.0, 0.0, 1.0) == 1.0
    # Resonance above the barrier: q a = pi.
    v0, a = 1.0, 1.0
    e = v0 + 0.5 * math.pi**2
    assert plane_wave_transmission(e, v0, a) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValidationError):
        plane_wave_transmission(0.0, 1.0, 1.0)


def _scatter(v0, energy_, a, **kw):
    s = barrier_setup(v0, energy_, a, **kw)
    return scatter_barrier(s.packet, s.barrier, s.grid, s.t_total)


def test_free_space_transmits_everything():
    result = _scatter(0.0, 1.0, 1.0, n_points=2048)
    assert result.d == pytest.approx(1.0, abs=1e-6)


def test_tunnelling_matches_plane_wave():
    result = _scatter(2.0, 1.0, 1.0)
    exact = plane_wave_transmission(1.0, 2.0, 1.0)
    assert abs(result.d - exact) / exact < 0.05
    assert result.d + result.r == pytest.approx(1.0, abs=1e-4)
    assert result.overlap < 1e-6
    assert result.inside < 1e-4


def test_transmission_falls_with_width():
    ds = [_scatter(2.0, 1.0, a, spread=0.08, n_points=2048).d for a in (0.25, 0.5, 0.75, 1.0, 1.25)]
    assert all(x > y for x, y in zip(ds, ds[1:]))


def test_scatter_guards():
    s = barrier_setup(2.0, 1.0, 1.0, n_points=2048)
    close = PacketParams(-3.0 * s.packet.sigma, s.packet.k0, s.packet.sigma)
    with pytest.raises(PlacementError):
        scatter_barrier(close, s.barrier, s.grid, s.t_total)
    with pytest.raises(InconclusiveRunError):
        scatter_barrier(s.packet, s.barrier, s.grid, 0.3 * s.t_total)


def test_sampling_narrow_packet_lands_close():
    sigma = 0.5
    psi = gaussian_packet(GRID, 1.0, 0.0, sigma)
    samples = sample_positions(psi, 20000, CounterRng(5))
    assert np.mean(np.abs(samples.positions - 1.0) < 3 * sigma) >= 0.99
    assert abs(samples.positions.mean() - 1.0) < 4 * sigma / np.sqrt(20000)


def test_sampling_records_counters():
    psi = gaussian_packet(GRID, 0.0, 0.0, 1.0)
    s = sample_positions(psi, 10, CounterRng(1, counter=100))
    assert list(s.counters) == list(range(100, 110))
    with pytest.raises(ValidationError):
        sample_positions(psi, 0, CounterRng(1))


def test_sampled_histogram_converges_at_root_n():
    psi = two_path_state(GRID, math.sqrt(0.5), math.sqrt(0.5), 8.0, 1.5)
    edges = np.linspace(-12, 12, 41)
    exact = binned_probabilities(psi, edges)
    shots_list = [1000, 4000, 16000, 64000]
    errors = []
    for shots in shots_list:
        errs = []
        for rep in range(8):
            counts, _ = sample_positions(psi, shots, CounterRng(rep, stream=shots)).histogram(edges)
            errs.append(np.sum(np.abs(counts / shots - exact)))
        errors.append(np.mean(errs))
    slope = np.polyfit(np.log(shots_list), np.log(errors), 1)[0]
    assert -0.65 <= slope <= -0.35


def test_binned_probabilities_sum():
    psi = gaussian_packet(GRID, 0.0, 0.0, 2.0)
    assert binned_probabilities(psi, [GRID.x_min, GRID.x_max]).sum() == pytest.approx(1.0)


def test_local_maxima():
    assert list(local_maxima(np.array([0, 1, 0, 2, 0, 0.0]))) == [1, 3]


def test_two_path_state_requires_normalised_amplitudes():
    with pytest.raises(ValidationError):
        two_path_state(GRID, 1.0, 1.0, 8.0, 1.0)
    with pytest.raises(ValidationError):
        two_path_state(GRID, math.sqrt(0.5), math.sqrt(0.5), -2.0, 1.0)


@pytest.fixture(scope="module")
def slit():
    return double_slit(math.sqrt(0.5), math.sqrt(0.5), 20.0, 1.0, 20.0, 70000, CounterRng(42))


def test_double_slit_fringes(slit):
    assert slit.n_fringes() >= 5
    centre = np.argmin(np.abs(slit.x))
    assert centre in set(local_maxima(slit.density)) or abs(slit.x[np.argmax(slit.density)]) < 0.5
    assert abs(slit.measured_spacing() - slit.exact_spacing) / slit.exact_spacing < 0.02
    assert abs(slit.exact_spacing - slit.far_field_spacing) / slit.far_field_spacing < 0.01


def test_double_slit_arrivals_follow_density(slit):
    edges = np.linspace(-40, 40, 121)
    result = arrival_chisquare(slit.screen, slit.arrivals, edges)
    assert result.pvalue > 0.01
    assert result.dof > 50


def test_double_slit_linearity(slit):
    # Propagating the superposition directly agrees with superposing the paths.
    start = two_path_state(slit.screen.grid, math.sqrt(0.5), math.sqrt(0.5), 20.0, 1.0)
    direct = propagate(start, None, 20.0)
    assert np.max(np.abs(direct.values - slit.screen.values)) < 1e-10


def test_single_path_has_no_fringes():
    result = double_slit(1.0, 0.0, 20.0, 1.0, 20.0, 1000, CounterRng(1))
    assert result.n_fringes() == 1
    assert result.screen.position_spread() == pytest.approx(free_width(1.0, 20.0), rel=0.01)


def test_phase_shifts_the_pattern():
    a = math.sqrt(0.5)
    even = double_slit(a, a, 10.0, 1.0, 10.0, 10, CounterRng(0))
    odd = double_slit(a, -a, 10.0, 1.0, 10.0, 10, CounterRng(0))
    centre = np.argmin(np.abs(even.x))
    assert odd.density[centre] < 1e-3 * even.density[centre]


@given(seeds, st.integers(1, 500))
def test_samples_stay_on_grid(seed, shots):
    psi = gaussian_packet(GRID, 0.0, 0.0, 1.0)
    s = sample_positions(psi, shots, CounterRng(seed))
    assert np.all((s.indices >= 0) & (s.indices < GRID.n_points))
    assert np.array_equal(GRID.x[s.indices], s.positions)
