import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_amplitudes, random_hermitian, seeds
from qmlab.entangle import singlet
from qmlab.errors import (
    ImpossibleOutcomeError,
    IncompatibleObservablesError,
    ShapeError,
    StateValidationError,
    ValidationError,
)
from qmlab.measure import (
    JointMeasurement,
    MetastableSpec,
    Mode,
    collapse_repeatable,
    decohere,
    inverse_cdf,
    measure_joint,
    outcome_weights,
    sample_counts,
    sample_decay_time,
    sample_decay_times,
    sample_outcome,
    sample_outcomes,
    write_shot_log,
)
from qmlab.observables import IDENTITY_2, SIGMA_X, SIGMA_Y, SIGMA_Z, Observable, make_spin, moment
from qmlab.rng import CounterRng
from qmlab.states import DensityMatrix, PureState, basis_state, expectation, normalize, purity, to_density

S1Z = Observable(np.kron(0.5 * SIGMA_Z, IDENTITY_2), "s1z")
S2X = Observable(np.kron(IDENTITY_2, 0.5 * SIGMA_X), "s2x")
S2Z = Observable(np.kron(IDENTITY_2, 0.5 * SIGMA_Z), "s2z")


def test_eigenstate_always_gives_its_outcome():
    spin = make_spin(1)
    rng = CounterRng(4)
    for _ in range(50):
        rec = sample_outcome(spin.state(0), spin.jz, rng)
        assert rec.outcome_value == pytest.approx(0.0, abs=1e-12)


def test_record_fields_and_counters():
    spin = make_spin("1/2")
    rng = CounterRng(8)
    recs = [sample_outcome(basis_state(2, 0), spin.jx, rng, mode) for mode in (Mode.REPEATABLE, "non_repeatable")]
    assert [r.event_counter for r in recs] == [0, 1]
    assert recs[0].post_state is not None and recs[1].post_state is None
    assert recs[1].mode is Mode.NON_REPEATABLE


def test_spin_up_sx_half_half():
    counts = sample_counts(basis_state(2, 0), make_spin("1/2").jx, 100000, CounterRng(3))
    assert counts.sum() == 100000
    assert abs(counts[0] / 1e5 - 0.5) < 4 * np.sqrt(0.25 / 1e5)


def test_bulk_matches_single_draws():
    spin = make_spin("3/2")
    psi = spin.state("1/2")
    counters, idx = sample_outcomes(psi, spin.jx, 200, CounterRng(12))
    rng = CounterRng(12)
    singles = [sample_outcome(psi, spin.jx, rng, Mode.NON_REPEATABLE) for _ in range(200)]
    assert list(idx) == [r.outcome_index for r in singles]
    assert list(counters) == [r.event_counter for r in singles]


def test_inverse_cdf_skips_zero_weights():
    u = np.linspace(0, 1, 1001, endpoint=False)
    idx = inverse_cdf(np.array([0.0, 0.5, 0.0, 0.5, 0.0]), u)
    assert set(idx) == {1, 3}


def test_outcome_weights_guard():
    class Leaky(Observable):
        def frequencies(self, psi):
            return np.array([0.5, 0.4])

    with pytest.raises(StateValidationError):
        outcome_weights(basis_state(2, 0), Leaky(SIGMA_Z))


def test_singlet_repeatable_s1z_leaves_partner_opposite():
    rng = CounterRng(1)
    seen = set()
    for _ in range(20):
        rec = sample_outcome(singlet(), S1Z, rng)
        seen.add(rec.outcome_value)
        partner = S2Z.frequencies(rec.post_state)
        opposite = 0 if rec.outcome_value > 0 else 1
        assert partner[opposite] == pytest.approx(1.0, abs=1e-12)
    assert len(seen) == 2


def test_collapse_examples():
    psi = normalize([1, 2j, -1])
    obs = Observable(np.diag([0.0, 1.0, 2.0]))
    post = collapse_repeatable(psi, obs, 1)
    assert abs(abs(post.amplitudes[1]) - 1) < 1e-15

    up_branch = collapse_repeatable(singlet(), S1Z, 1)
    s2x_freqs = S2X.frequencies(up_branch)
    assert np.allclose(s2x_freqs, [0.5, 0.5])


def test_collapse_degenerate_preserves_partner_amplitudes(nprng):
    amps = random_amplitudes(nprng, 4)
    post = collapse_repeatable(PureState(amps), S1Z, 1)
    kept = amps[:2] / np.linalg.norm(amps[:2])
    assert np.allclose(post.amplitudes[:2] * np.conj(post.amplitudes[0]) / abs(post.amplitudes[0]),
                       kept * np.conj(kept[0]) / abs(kept[0]))
    assert np.allclose(post.amplitudes[2:], 0)


def test_collapse_errors():
    with pytest.raises(ImpossibleOutcomeError):
        collapse_repeatable(basis_state(2, 0), Observable(SIGMA_Z), 0)
    with pytest.raises(IndexError):
        collapse_repeatable(basis_state(2, 0), Observable(SIGMA_Z), 5)


def test_repeatable_chain_is_stable():
    spin = make_spin("3/2")
    rng = CounterRng(21)
    for _ in range(200):
        first = sample_outcome(spin.state("3/2"), spin.jx, rng)
        second = sample_outcome(first.post_state, spin.jx, rng)
        assert second.outcome_index == first.outcome_index


def test_decohere_examples():
    diag = DensityMatrix(np.diag([0.2, 0.3, 0.5]))
    assert np.array_equal(decohere(diag).rho, diag.rho)
    plus = to_density(normalize([1, 1]))
    assert np.allclose(decohere(plus).rho, np.diag([0.5, 0.5]))

    spin = make_spin("3/2")
    rho = decohere(to_density(spin.state("3/2")), spin.jx)
    assert np.allclose(rho.rho, np.diag([1 / 8, 3 / 8, 3 / 8, 1 / 8]), atol=1e-12)


@given(seeds, st.integers(1, 6))
def test_decohere_properties(seed, n):
    rng = np.random.default_rng(seed)
    psi = PureState(random_amplitudes(rng, n))
    obs = Observable(random_hermitian(rng, n))
    rho = to_density(psi)
    after = decohere(rho, obs)
    born = np.abs(obs.eigen.eigenvectors.conj().T @ psi.amplitudes) ** 2
    assert np.array_equal(after.rho, np.diag(np.diag(after.rho)))
    assert np.allclose(np.real(np.diag(after.rho)), born, atol=1e-12)
    assert abs(np.trace(after.rho) - 1) < 1e-12
    assert abs(purity(after) - np.sum(born**2)) < 1e-10
    pointer_f = np.diag(obs.eigen.eigenvalues)
    assert abs(expectation(after, pointer_f) - expectation(rho, obs.matrix)) < 1e-10
    assert np.array_equal(decohere(after).rho, after.rho)


def test_decohere_shape_error():
    with pytest.raises(ShapeError):
        decohere(to_density(basis_state(2, 0)), Observable(np.eye(3)))


def test_joint_singlet_s1z_s2x():
    joint = JointMeasurement([S1Z, S2X])
    assert np.allclose(joint.weights(singlet()), 0.25)
    _, readings = joint.sample(singlet(), 100000, CounterRng(5))
    up = np.mean(readings[:, 0] > 0)
    assert abs(up - 0.5) < 4 * np.sqrt(0.25 / 1e5)


def test_joint_same_observable_agrees():
    rng = CounterRng(2)
    psi = PureState(random_amplitudes(np.random.default_rng(0), 4))
    for _ in range(100):
        rec = measure_joint(psi, S2Z, S2Z, rng)
        assert rec.outcome_values[0] == rec.outcome_values[1]


def test_joint_incompatible():
    with pytest.raises(IncompatibleObservablesError):
        measure_joint(basis_state(2, 0), Observable(SIGMA_X), Observable(SIGMA_Y), CounterRng(0))
    with pytest.raises(ShapeError):
        JointMeasurement([Observable(SIGMA_X), S1Z])
    with pytest.raises(ValidationError):
        JointMeasurement([])


def test_joint_marginals_match_single(nprng):
    psi = PureState(random_amplitudes(nprng, 4))
    joint = JointMeasurement([S1Z, S2Z])
    _, readings = joint.sample(psi, 100000, CounterRng(77))
    for k, obs in enumerate((S1Z, S2Z)):
        p = obs.frequencies(psi)
        emp = np.array([np.mean(np.isclose(readings[:, k], v)) for v in obs.spectrum])
        assert np.all(np.abs(emp - p) <= 4 * np.sqrt(p * (1 - p) / 1e5) + 1e-12)


def test_joint_collapse_and_draw():
    rec = JointMeasurement([S1Z, S2X]).draw(singlet(), CounterRng(6))
    post = rec.post_state.amplitudes
    expected = np.kron([1, 0] if rec.outcome_values[0] > 0 else [0, 1],
                       np.array([1, 1 if rec.outcome_values[1] > 0 else -1]) / np.sqrt(2))
    assert abs(abs(np.vdot(expected, post)) - 1) < 1e-12


def test_shot_log(tmp_path):
    spin = make_spin("1/2")
    counters, idx = sample_outcomes(basis_state(2, 0), spin.jx, 5, CounterRng(1))
    path = tmp_path / "log.csv"
    write_shot_log(path, counters, idx, spin.jx.spectrum[idx], Mode.NON_REPEATABLE)
    lines = path.read_text().splitlines()
    assert lines[0] == "event_counter,outcome_index,outcome_value,mode"
    assert len(lines) == 6 and lines[1].startswith("0,") and lines[1].endswith(",non_repeatable")


def test_metastable_spec():
    with pytest.raises(ValidationError):
        MetastableSpec(0.0)
    spec = MetastableSpec(2.0, 1.5)
    assert spec.lifetime == 0.5
    assert spec.survival(spec.lifetime) == pytest.approx(np.exp(-1))
    assert abs(spec.amplitude(1.0)) == pytest.approx(np.exp(-1))


def test_decay_statistics():
    _, times = sample_decay_times(MetastableSpec(1.0), 100000, CounterRng(31))
    assert abs(times.mean() - 1.0) < 4 / np.sqrt(1e5)
    p = np.exp(-1)
    assert abs(np.mean(times > 1.0) - p) < 4 * np.sqrt(p * (1 - p) / 1e5)
    assert times.min() >= 0


def test_decay_rate_scaling_with_paired_seeds():
    _, slow = sample_decay_times(MetastableSpec(1.0), 1000, CounterRng(4))
    _, fast = sample_decay_times(MetastableSpec(2.0), 1000, CounterRng(4))
    assert np.allclose(fast, slow / 2)
    assert sample_decay_time(MetastableSpec(1.0), CounterRng(4)) == slow[0]


def test_moment_of_decohered_equals_original():
    spin = make_spin("3/2")
    psi = spin.state("3/2")
    after = decohere(to_density(psi), spin.jx)
    pointer = np.diag(spin.jx.eigen.eigenvalues)
    assert expectation(after, pointer @ pointer) == pytest.approx(moment(psi, spin.jx, 2))
