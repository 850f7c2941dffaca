"""Observables with cached spectral data, spin-j algebra, and moments.

Units: hbar = 1. Spin bases are ordered m = j, j-1, ..., -j, so the
highest-weight state is the first basis vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

from . import hilbert
from .errors import ShapeError, ValidationError
from .rng import as_rng
from .states import PureState

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
IDENTITY_2 = np.eye(2, dtype=np.complex128)

_PHASE_TOL = 1e-10


def degeneracy_tolerance(values: np.ndarray) -> float:
    return 1e-8 * float(np.max(np.abs(values), initial=0.0)) + 1e-12


def _fix_phases(vecs: np.ndarray) -> np.ndarray:
    """Make the first non-negligible entry of every column real positive."""
    out = vecs.copy()
    for k in range(out.shape[1]):
        col = out[:, k]
        idx = int(np.argmax(np.abs(col) > _PHASE_TOL))
        lead = col[idx]
        out[:, k] = col * (abs(lead) / lead)
    return out


def group_eigenvalues(values: np.ndarray) -> list[np.ndarray]:
    """Partition indices of ascending ``values`` into degenerate clusters."""
    tol = degeneracy_tolerance(values)
    groups = [[0]]
    for i in range(1, len(values)):
        if values[i] - values[groups[-1][-1]] <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return [np.array(g) for g in groups]


class Observable:
    """A Hermitian operator together with its spectral decomposition.

    ``spectrum[n]`` is the n-th distinct eigenvalue (ascending) and
    ``projectors[n]`` the orthogonal projector onto its eigenspace.
    """

    def __init__(self, matrix, label: str = ""):
        eig = hilbert.hermitian_eig(matrix)
        self.matrix = hilbert.as_matrix(matrix)
        self.matrix.setflags(write=False)
        self.label = label
        vecs = _fix_phases(eig.eigenvectors)
        self.eigen = hilbert.EigenDecomposition(eig.eigenvalues, vecs)
        self.groups = group_eigenvalues(eig.eigenvalues)
        self.spectrum = np.array([eig.eigenvalues[g].mean() for g in self.groups])
        self.degeneracies = np.array([len(g) for g in self.groups])

    def __repr__(self):
        name = self.label or "Observable"
        return f"<{name} dim={self.dim} spectrum={np.round(self.spectrum, 12).tolist()}>"

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_outcomes(self) -> int:
        return len(self.spectrum)

    @property
    def is_degenerate(self) -> bool:
        return bool(np.any(self.degeneracies > 1))

    @cached_property
    def projectors(self) -> list[np.ndarray]:
        out = []
        for g in self.groups:
            v = self.eigen.eigenvectors[:, g]
            out.append(v @ v.conj().T)
        return out

    def branch_vectors(self, n: int) -> np.ndarray:
        """Orthonormal columns spanning the eigenspace of outcome ``n``."""
        return self.eigen.eigenvectors[:, self.groups[n]]

    def frequencies(self, psi: PureState) -> np.ndarray:
        """Born weights ``<psi|Pi_n|psi>`` for every outcome."""
        self._check(psi)
        overlaps = np.abs(self.eigen.eigenvectors.conj().T @ psi.amplitudes) ** 2
        return np.array([overlaps[g].sum() for g in self.groups])

    def power(self, n: int) -> np.ndarray:
        return np.linalg.matrix_power(self.matrix, n)

    def _check(self, psi: PureState):
        if psi.basis_dim != self.dim:
            raise ShapeError(f"state dimension {psi.basis_dim} does not match operator dimension {self.dim}")


def random_observable(dim: int, rng, label: str = "") -> Observable:
    """Hermitian matrix with independent Gaussian entries (GUE-like)."""
    _, z = as_rng(rng).normals(dim * dim, 2)
    g = (z[:, 0] + 1j * z[:, 1]).reshape(dim, dim)
    return Observable(0.5 * (g + g.conj().T), label)


@dataclass(frozen=True, eq=False)
class SpinSystem:
    j: Fraction
    jx: Observable
    jy: Observable
    jz: Observable

    @property
    def dim(self) -> int:
        return int(2 * self.j + 1)

    def along(self, direction) -> Observable:
        """``n . J`` for a unit 3-vector ``n``."""
        n = np.asarray(direction, dtype=float)
        op = n[0] * self.jx.matrix + n[1] * self.jy.matrix + n[2] * self.jz.matrix
        return Observable(op, label=f"J.n (j={self.j})")

    def casimir(self) -> np.ndarray:
        return sum(op.matrix @ op.matrix for op in (self.jx, self.jy, self.jz))

    def state(self, m) -> PureState:
        """Basis state ``|j, m>``."""
        m = Fraction(m)
        index = self.j - m
        if index.denominator != 1 or not 0 <= index <= 2 * self.j:
            raise ValidationError(f"m={m} is not valid for j={self.j}")
        amps = np.zeros(self.dim, dtype=np.complex128)
        amps[int(index)] = 1.0
        return PureState(amps)


def parse_spin(j) -> Fraction:
    try:
        value = Fraction(str(j)) if not isinstance(j, Fraction) else j
    except (ValueError, ZeroDivisionError) as exc:
        raise ValidationError(f"invalid spin {j!r}") from exc
    if value < 0 or (2 * value).denominator != 1:
        raise ValidationError(f"spin must be a non-negative half-integer, got {j!r}")
    return value


def spin_matrices(j) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    j = parse_spin(j)
    dim = int(2 * j + 1)
    m = np.array([float(j) - i for i in range(dim)])
    jj = float(j) * (float(j) + 1.0)
    raise_op = np.zeros((dim, dim), dtype=np.complex128)
    for i in range(1, dim):
        # J+ |m_i> lands on |m_i + 1>, which sits one index up.
        raise_op[i - 1, i] = np.sqrt(jj - m[i] * (m[i] + 1.0))
    lower_op = raise_op.conj().T
    jx = 0.5 * (raise_op + lower_op)
    jy = -0.5j * (raise_op - lower_op)
    jz = np.diag(m).astype(np.complex128)
    return jx, jy, jz


def make_spin(j) -> SpinSystem:
    j = parse_spin(j)
    jx, jy, jz = spin_matrices(j)
    return SpinSystem(j, Observable(jx, "Jx"), Observable(jy, "Jy"), Observable(jz, "Jz"))


def spin_toward(theta: float, phi: float) -> PureState:
    """Spin-1/2 state pointing along ``(sin t cos p, sin t sin p, cos t)``."""
    return PureState(
        np.array(
            [
                np.exp(-0.5j * phi) * np.cos(0.5 * theta),
                np.exp(0.5j * phi) * np.sin(0.5 * theta),
            ]
        )
    )


def unit_vector(theta: float, phi: float) -> np.ndarray:
    return np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


def spin_half_along(direction) -> np.ndarray:
    """Matrix of ``s . n`` for spin 1/2."""
    n = np.asarray(direction, dtype=float)
    return 0.5 * (n[0] * SIGMA_X + n[1] * SIGMA_Y + n[2] * SIGMA_Z)


def moment(psi: PureState, obs: Observable, order: int) -> float:
    """``<psi|F^N|psi>`` evaluated in spectral form, ``sum_n f_n^N P_n``."""
    if order < 0:
        raise ValidationError("moment order must be non-negative")
    return float(np.sum(obs.spectrum**order * obs.frequencies(psi)))


def projector_frequency(psi: PureState, obs: Observable, n: int) -> float:
    """``<psi|Pi_n|psi>`` for the n-th distinct eigenvalue."""
    if not 0 <= n < obs.n_outcomes:
        raise IndexError(f"outcome index {n} out of range for {obs.n_outcomes} outcomes")
    obs._check(psi)
    value = np.vdot(psi.amplitudes, obs.projectors[n] @ psi.amplitudes).real
    return float(min(max(value, 0.0), 1.0))


def embed(op, site: int, n_sites: int, local_dim: int = 2) -> np.ndarray:
    """``I (x) ... (x) op (x) ... (x) I`` with ``op`` on ``site`` (0-based)."""
    factors = [np.eye(local_dim, dtype=np.complex128)] * n_sites
    factors[site] = op
    return hilbert.kron_all(*factors)
