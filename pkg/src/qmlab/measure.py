"""Single measurement events and their statistics.

Each call that draws randomness consumes one event counter from a
:class:`~qmlab.rng.CounterRng`; the counter is stored on the resulting
record. Distinct events never share a post-measurement state unless the
caller explicitly chains them.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import hilbert
from .errors import ImpossibleOutcomeError, IncompatibleObservablesError, ShapeError, StateValidationError, ValidationError
from .io import write_csv
from .observables import Observable, group_eigenvalues
from .rng import CounterRng, as_rng
from .states import DensityMatrix, PureState

WEIGHT_SUM_TOL = 1e-9
COMMUTE_TOL = 1e-10
EIGENSPACE_TOL = 1e-8
MIN_BRANCH_WEIGHT = 1e-12


class Mode(str, enum.Enum):
    REPEATABLE = "repeatable"
    NON_REPEATABLE = "non_repeatable"


@dataclass(frozen=True, eq=False)
class MeasurementRecord:
    outcome_index: int
    outcome_value: float
    mode: Mode
    event_counter: int
    post_state: Optional[PureState] = None


def outcome_weights(psi: PureState, obs: Observable) -> np.ndarray:
    weights = obs.frequencies(psi)
    total = weights.sum()
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        raise StateValidationError(f"outcome weights sum to {total!r}")
    return weights


def inverse_cdf(weights: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Map uniforms in [0, 1) to outcome indices.

    Zero-weight outcomes are never returned: the cumulative table is
    normalised so its final plateau is exactly 1.
    """
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, len(weights) - 1)


def collapse_repeatable(psi: PureState, obs: Observable, n: int) -> PureState:
    """Normalised projection of ``psi`` onto the eigenspace of outcome ``n``.

    For a degenerate eigenvalue the components inside the eigenspace keep
    their relative amplitudes.
    """
    if not 0 <= n < obs.n_outcomes:
        raise IndexError(f"outcome index {n} out of range")
    v = obs.branch_vectors(n)
    projected = v @ (v.conj().T @ psi.amplitudes)
    weight = float(np.vdot(projected, projected).real)
    if weight <= MIN_BRANCH_WEIGHT:
        raise ImpossibleOutcomeError(f"outcome {n} has weight {weight:.3e}")
    return PureState(projected / np.sqrt(weight))


def sample_outcome(psi: PureState, obs: Observable, rng: CounterRng, mode: Mode = Mode.REPEATABLE) -> MeasurementRecord:
    """Measure ``obs`` once. Repeatable mode keeps the reduced state;
    non-repeatable mode discards the microsystem."""
    rng = as_rng(rng)
    mode = Mode(mode)
    weights = outcome_weights(psi, obs)
    counter, u = rng.next_event()
    n = int(inverse_cdf(weights, u)[0])
    post = collapse_repeatable(psi, obs, n) if mode is Mode.REPEATABLE else None
    return MeasurementRecord(n, float(obs.spectrum[n]), mode, counter, post)


def sample_outcomes(psi: PureState, obs: Observable, shots: int, rng: CounterRng) -> tuple[np.ndarray, np.ndarray]:
    """Bulk version of :func:`sample_outcome`: ``(event_counters, outcome_indices)``.

    Draws the same outcomes as ``shots`` successive single calls.
    """
    if shots < 1:
        raise ValidationError("shots must be >= 1")
    rng = as_rng(rng)
    weights = outcome_weights(psi, obs)
    counters, u = rng.take(shots)
    return counters, inverse_cdf(weights, u[:, 0])


def sample_counts(psi: PureState, obs: Observable, shots: int, rng: CounterRng) -> np.ndarray:
    _, idx = sample_outcomes(psi, obs, shots, rng)
    return np.bincount(idx, minlength=obs.n_outcomes)


def write_shot_log(path, counters, indices, values, mode: Mode) -> None:
    mode = Mode(mode).value
    rows = ((int(c), int(i), float(v), mode) for c, i, v in zip(counters, indices, values))
    write_csv(path, ["event_counter", "outcome_index", "outcome_value", "mode"], rows)


def decohere(rho: DensityMatrix, pointer_basis=None) -> DensityMatrix:
    """Drop every coherence between pointer states.

    ``pointer_basis`` is an :class:`~qmlab.hilbert.EigenDecomposition` or an
    :class:`~qmlab.observables.Observable`; the result is expressed in that
    basis (column ``n`` of its eigenvectors becomes basis vector ``n``).
    With ``None`` the state is taken to be written in the pointer basis
    already, which makes the operation exactly idempotent.
    """
    if isinstance(pointer_basis, Observable):
        pointer_basis = pointer_basis.eigen
    if pointer_basis is None:
        populations = np.real(np.diag(rho.rho))
    else:
        v = pointer_basis.eigenvectors
        if v.shape[0] != rho.dim:
            raise ShapeError("pointer basis dimension does not match state")
        populations = np.real(np.einsum("in,ij,jn->n", v.conj(), rho.rho, v))
    return DensityMatrix(np.diag(populations).astype(np.complex128), _checked=False)


class JointMeasurement:
    """Simultaneous measurement of pairwise-commuting observables.

    The shared eigenbasis is built by diagonalising the first observable,
    then each later one restricted to every eigenspace found so far.

    Raises
    ------
    IncompatibleObservablesError
        If any pair fails ``||[A, B]||_max < 1e-10``.
    """

    def __init__(self, observables: Sequence[Observable]):
        if not observables:
            raise ValidationError("need at least one observable")
        dim = observables[0].dim
        for obs in observables:
            if obs.dim != dim:
                raise ShapeError("observables act on different spaces")
        for i, a in enumerate(observables):
            for b in observables[i + 1 :]:
                defect = hilbert.max_norm(hilbert.commutator(a.matrix, b.matrix))
                if defect >= COMMUTE_TOL:
                    raise IncompatibleObservablesError(
                        f"{a.label or 'A'} and {b.label or 'B'} do not commute (||[A,B]|| = {defect:.3g})"
                    )
        self.observables = list(observables)
        self.vectors, self.labels = self._joint_basis()
        combos, inverse = np.unique(self.labels, axis=0, return_inverse=True)
        self.combos = combos
        self._column_combo = np.asarray(inverse).reshape(-1)

    def _joint_basis(self):
        spaces = [(np.eye(self.observables[0].dim, dtype=np.complex128), ())]
        for obs in self.observables:
            tol = EIGENSPACE_TOL * max(1.0, float(np.max(np.abs(obs.spectrum))))
            refined = []
            for basis, label in spaces:
                restricted = basis.conj().T @ obs.matrix @ basis
                eig = hilbert.hermitian_eig(0.5 * (restricted + restricted.conj().T))
                for group in group_eigenvalues(eig.eigenvalues):
                    value = eig.eigenvalues[group].mean()
                    n = int(np.argmin(np.abs(obs.spectrum - value)))
                    if abs(obs.spectrum[n] - value) > tol:
                        raise IncompatibleObservablesError("restricted eigenvalue not in spectrum")
                    refined.append((basis @ eig.eigenvectors[:, group], label + (n,)))
            spaces = refined
        vectors = np.hstack([b for b, _ in spaces])
        labels = np.array([lab for b, lab in spaces for _ in range(b.shape[1])], dtype=np.int64)
        return vectors, labels

    def weights(self, psi: PureState) -> np.ndarray:
        """Probability of each row of ``combos``."""
        if psi.basis_dim != self.vectors.shape[0]:
            raise ShapeError("state dimension does not match observables")
        overlaps = np.abs(self.vectors.conj().T @ psi.amplitudes) ** 2
        w = np.bincount(self._column_combo, weights=overlaps, minlength=len(self.combos))
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise StateValidationError(f"joint weights sum to {w.sum()!r}")
        return w

    def values(self, combo_indices) -> np.ndarray:
        """Eigenvalue readings, shape ``(len(combo_indices), n_observables)``."""
        labels = self.combos[np.asarray(combo_indices)]
        return np.column_stack([obs.spectrum[labels[:, k]] for k, obs in enumerate(self.observables)])

    def collapse(self, psi: PureState, combo: int) -> PureState:
        cols = self._column_combo == combo
        v = self.vectors[:, cols]
        projected = v @ (v.conj().T @ psi.amplitudes)
        weight = float(np.vdot(projected, projected).real)
        if weight <= MIN_BRANCH_WEIGHT:
            raise ImpossibleOutcomeError(f"joint outcome {combo} has weight {weight:.3e}")
        return PureState(projected / np.sqrt(weight))

    def draw(self, psi: PureState, rng: CounterRng) -> "JointRecord":
        rng = as_rng(rng)
        counter, u = rng.next_event()
        combo = int(inverse_cdf(self.weights(psi), u)[0])
        values = self.values([combo])[0]
        return JointRecord(
            tuple(int(i) for i in self.combos[combo]),
            tuple(float(v) for v in values),
            counter,
            self.collapse(psi, combo),
        )

    def sample(self, psi: PureState, shots: int, rng: CounterRng) -> tuple[np.ndarray, np.ndarray]:
        """``(event_counters, readings)`` with readings of shape ``(shots, k)``."""
        if shots < 1:
            raise ValidationError("shots must be >= 1")
        rng = as_rng(rng)
        counters, u = rng.take(shots)
        combos = inverse_cdf(self.weights(psi), u[:, 0])
        return counters, self.values(combos)


@dataclass(frozen=True, eq=False)
class JointRecord:
    outcome_indices: tuple
    outcome_values: tuple
    event_counter: int
    post_state: Optional[PureState] = None


def measure_joint(psi: PureState, f: Observable, g: Observable, rng: CounterRng) -> JointRecord:
    """Read ``f`` and ``g`` in one event; both readings come from one draw."""
    return JointMeasurement([f, g]).draw(psi, rng)


@dataclass(frozen=True)
class MetastableSpec:
    """Level with complex energy ``e_r - i gamma / 2`` (hbar = 1)."""

    gamma: float
    e_r: float = 0.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValidationError("decay rate must be positive")

    @property
    def lifetime(self) -> float:
        return 1.0 / self.gamma

    def amplitude(self, t):
        """Time factor of the smoothed metastable wave function."""
        t = np.asarray(t, dtype=float)
        return np.exp(-1j * self.e_r * t - 0.5 * self.gamma * t)

    def survival(self, t):
        return np.abs(self.amplitude(t)) ** 2


def sample_decay_time(spec: MetastableSpec, rng: CounterRng) -> float:
    rng = as_rng(rng)
    _, u = rng.next_event()
    return float(-np.log1p(-u[0]) / spec.gamma)


def sample_decay_times(spec: MetastableSpec, n: int, rng: CounterRng) -> tuple[np.ndarray, np.ndarray]:
    """``(event_counters, decay_times)`` for ``n`` independent decays."""
    if n < 1:
        raise ValidationError("need at least one sample")
    rng = as_rng(rng)
    counters, u = rng.take(n)
    return counters, -np.log1p(-u[:, 0]) / spec.gamma
