from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_amplitudes, random_hermitian, seeds
from qmlab import hilbert
from qmlab.errors import ShapeError, ValidationError
from qmlab.observables import (
    SIGMA_X,
    Observable,
    embed,
    make_spin,
    moment,
    parse_spin,
    projector_frequency,
    random_observable,
    spin_half_along,
    spin_matrices,
    spin_toward,
    unit_vector,
)
from qmlab.states import PureState, basis_state

SPINS = ["1/2", "1", "3/2", "2", "5/2"]
R3 = np.sqrt(3.0)

# Hand-written spin-3/2 Jx in the basis m = 3/2, 1/2, -1/2, -3/2.
JX_THREE_HALVES = np.array(
    [
        [0, R3 / 2, 0, 0],
        [R3 / 2, 0, 1, 0],
        [0, 1, 0, R3 / 2],
        [0, 0, R3 / 2, 0],
    ]
)


def test_spin_half_matrices():
    spin = make_spin("1/2")
    assert np.allclose(spin.jz.matrix, np.diag([0.5, -0.5]))
    assert np.allclose(spin.jx.matrix, 0.5 * SIGMA_X)


def test_spin_three_halves_jx_entries():
    jx, _, _ = spin_matrices(Fraction(3, 2))
    assert np.allclose(jx, JX_THREE_HALVES, atol=1e-15)


@pytest.mark.parametrize("j", SPINS)
def test_spin_algebra(j):
    spin = make_spin(j)
    jx, jy, jz = spin.jx.matrix, spin.jy.matrix, spin.jz.matrix
    for a, b, c in ((jx, jy, jz), (jy, jz, jx), (jz, jx, jy)):
        assert hilbert.max_norm(hilbert.commutator(a, b) - 1j * c) < 1e-10
    jj = float(spin.j) * (float(spin.j) + 1)
    assert hilbert.max_norm(spin.casimir() - jj * np.eye(spin.dim)) < 1e-9


@pytest.mark.parametrize("j", SPINS)
def test_transverse_square_average(j):
    spin = make_spin(j)
    transverse = spin.jx.matrix @ spin.jx.matrix + spin.jy.matrix @ spin.jy.matrix
    jf = float(spin.j)
    for k in range(spin.dim):
        m = jf - k
        value = np.vdot(spin.state(Fraction(spin.j) - k).amplitudes, transverse @ spin.state(Fraction(spin.j) - k).amplitudes).real
        assert abs(value - (jf * (jf + 1) - m * m)) < 1e-10


def test_spin_three_halves_top_state_averages():
    spin = make_spin("3/2")
    top = spin.state("3/2").amplitudes
    jx2 = spin.jx.power(2)
    transverse = jx2 + spin.jy.power(2)
    assert np.vdot(top, transverse @ top).real == pytest.approx(1.5, abs=1e-12)
    assert np.vdot(top, spin.jx.power(4) @ top).real == pytest.approx(21 / 16, abs=1e-12)


@pytest.mark.parametrize("order, expected", [(0, 1.0), (1, 0.0), (2, 0.75), (3, 0.0), (4, 21 / 16)])
def test_spin_three_halves_moments(order, expected):
    spin = make_spin("3/2")
    assert moment(spin.state("3/2"), spin.jx, order) == pytest.approx(expected, abs=1e-12)


def test_spin_three_halves_frequencies():
    spin = make_spin("3/2")
    top = spin.state("3/2")
    freqs = [projector_frequency(top, spin.jx, n) for n in range(4)]
    assert np.allclose(freqs, [1 / 8, 3 / 8, 3 / 8, 1 / 8], atol=1e-12)
    # the combinations fixed by <Jx^2> and <Jx^4>
    assert 9 / 4 * freqs[3] + 1 / 4 * freqs[2] == pytest.approx(3 / 8)
    assert 81 / 16 * freqs[3] + 1 / 16 * freqs[2] == pytest.approx(21 / 32)


def test_spin_three_halves_eigenvectors():
    spin = make_spin("3/2")
    vecs = spin.jx.eigen.eigenvectors
    assert np.allclose(vecs[:, 3], np.array([1, R3, R3, 1]) / (2 * np.sqrt(2)), atol=1e-10)
    half = np.array([1, 1 / R3, -1 / R3, -1]) * R3 / (2 * np.sqrt(2))
    assert np.allclose(JX_THREE_HALVES @ half, 0.5 * half)
    assert np.allclose(vecs[:, 2], half, atol=1e-10)


def test_spin_state_and_parse_errors():
    spin = make_spin(1)
    with pytest.raises(ValidationError):
        spin.state("1/2")
    with pytest.raises(ValidationError):
        spin.state(2)
    for bad in ("1/3", "-1", "x"):
        with pytest.raises(ValidationError):
            parse_spin(bad)


def test_spin_toward_examples():
    assert np.allclose(spin_toward(0.0, 0.0).amplitudes, [1, 0])
    down = spin_toward(np.pi, 0.0).amplitudes
    assert abs(abs(down[1]) - 1) < 1e-15 and abs(down[0]) < 1e-15


@given(st.floats(0, np.pi), st.floats(0, 2 * np.pi))
def test_spin_toward_is_eigenstate(theta, phi):
    psi = spin_toward(theta, phi)
    op = spin_half_along(unit_vector(theta, phi))
    assert np.max(np.abs(op @ psi.amplitudes - 0.5 * psi.amplitudes)) < 1e-10
    sz = make_spin("1/2").jz
    up, down = projector_frequency(psi, sz, 1), projector_frequency(psi, sz, 0)
    assert up == pytest.approx(np.cos(theta / 2) ** 2, abs=1e-12)
    assert down == pytest.approx(np.sin(theta / 2) ** 2, abs=1e-12)


def test_spin_up_sx_is_even():
    spin = make_spin("1/2")
    up = basis_state(2, 0)
    assert [projector_frequency(up, spin.jx, n) for n in range(2)] == pytest.approx([0.5, 0.5])


@given(seeds, st.integers(1, 6))
def test_projector_invariants(seed, n):
    obs = Observable(random_hermitian(np.random.default_rng(seed), n))
    proj = obs.projectors
    assert hilbert.max_norm(sum(proj) - np.eye(n)) < 1e-10
    for a in range(len(proj)):
        for b in range(len(proj)):
            target = proj[a] if a == b else np.zeros((n, n))
            assert hilbert.max_norm(proj[a] @ proj[b] - target) < 1e-9
    rebuilt = sum(f * p for f, p in zip(obs.spectrum, proj))
    assert hilbert.max_norm(rebuilt - obs.matrix) < 1e-9


@given(seeds, st.integers(1, 6), st.integers(0, 6))
def test_frequencies_sum_and_moment_consistency(seed, n, order):
    rng = np.random.default_rng(seed)
    obs = Observable(random_hermitian(rng, n))
    psi = PureState(random_amplitudes(rng, n))
    freqs = np.array([projector_frequency(psi, obs, k) for k in range(obs.n_outcomes)])
    assert abs(freqs.sum() - 1) < 1e-10
    assert abs(moment(psi, obs, order) - np.sum(obs.spectrum**order * freqs)) < 1e-9
    direct = np.vdot(psi.amplitudes, np.linalg.matrix_power(obs.matrix, order) @ psi.amplitudes).real
    assert abs(moment(psi, obs, order) - direct) < 1e-9 * max(1.0, abs(direct))


def test_degenerate_grouping():
    obs = Observable(np.diag([1.0, 1.0 + 1e-13, -2.0, 1.0]))
    assert obs.n_outcomes == 2
    assert list(obs.degeneracies) == [1, 3]
    assert obs.is_degenerate


def test_projector_frequency_errors():
    obs = make_spin("1/2").jz
    with pytest.raises(IndexError):
        projector_frequency(basis_state(2, 0), obs, 2)
    with pytest.raises(ShapeError):
        projector_frequency(basis_state(3, 0), obs, 0)
    with pytest.raises(ValidationError):
        moment(basis_state(2, 0), obs, -1)


def test_eigenvector_phase_convention():
    obs = random_observable(4, 3)
    vecs = obs.eigen.eigenvectors
    for k in range(4):
        lead = vecs[np.argmax(np.abs(vecs[:, k]) > 1e-10), k]
        assert abs(lead.imag) < 1e-15 and lead.real > 0


def test_embed_places_operator():
    op = embed(SIGMA_X, 1, 3)
    assert np.array_equal(op, np.kron(np.kron(np.eye(2), SIGMA_X), np.eye(2)))
