"""Pure states, density matrices and reduced states.

States validate their invariants on construction and are never repaired
silently; :func:`normalize` exists for building test fixtures from
unnormalised amplitude lists.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import hilbert
from .errors import ShapeError, ValidationError
from .rng import as_rng

NORM_TOL = 1e-10
PSD_TOL = 1e-10


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalised amplitude vector over an orthonormal basis."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = hilbert.as_matrix(self.amplitudes, name="amplitudes")
        if amps.ndim != 1:
            raise ShapeError(f"amplitudes must be a vector, got shape {amps.shape}")
        norm2 = float(np.vdot(amps, amps).real)
        if abs(norm2 - 1.0) > NORM_TOL:
            raise ValidationError(f"state norm^2 is {norm2!r}, expected 1")
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @property
    def basis_dim(self) -> int:
        return self.amplitudes.shape[0]

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def to_json(self) -> str:
        return json.dumps([[c.real, c.imag] for c in self.amplitudes.tolist()])

    @classmethod
    def from_json(cls, text: str) -> "PureState":
        pairs = json.loads(text)
        return cls(np.array([complex(re, im) for re, im in pairs]))


def normalize(amplitudes) -> PureState:
    amps = hilbert.as_matrix(amplitudes, name="amplitudes")
    norm = np.linalg.norm(amps)
    if norm == 0.0:
        raise ValidationError("cannot normalise the zero vector")
    return PureState(amps / norm)


def random_state(dim: int, rng) -> PureState:
    """Haar-random pure state from ``dim`` events of complex Gaussians."""
    _, z = as_rng(rng).normals(dim, 2)
    return normalize(z[:, 0] + 1j * z[:, 1])


def basis_state(dim: int, index: int) -> PureState:
    amps = np.zeros(dim, dtype=np.complex128)
    amps[index] = 1.0
    return PureState(amps)


def product_state(*states: PureState) -> PureState:
    return PureState(hilbert.kron_all(*(s.amplitudes for s in states)))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite matrix."""

    rho: np.ndarray
    _checked: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        rho = hilbert.as_matrix(self.rho, name="rho")
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ShapeError(f"density matrix must be square, got {rho.shape}")
        defect = hilbert.hermiticity_defect(rho)
        if defect > NORM_TOL:
            raise ValidationError(f"density matrix not Hermitian (defect {defect:.3e})")
        tr = np.trace(rho)
        if abs(tr - 1.0) > NORM_TOL:
            raise ValidationError(f"density matrix trace is {tr!r}, expected 1")
        if self._checked and rho.shape[0] > 1:
            herm = 0.5 * (rho + rho.conj().T)
            lowest = hilbert.hermitian_eig(herm).eigenvalues[0]
            if lowest < -PSD_TOL:
                raise ValidationError(f"density matrix not PSD (eigenvalue {lowest:.3e})")
        object.__setattr__(self, "rho", _frozen(rho))

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.rho)).copy()

    def to_json(self) -> str:
        return json.dumps([[[c.real, c.imag] for c in row] for row in self.rho.tolist()])

    @classmethod
    def from_json(cls, text: str) -> "DensityMatrix":
        rows = json.loads(text)
        return cls(np.array([[complex(re, im) for re, im in row] for row in rows]))


@dataclass(frozen=True, eq=False)
class BipartiteState:
    """Amplitudes ``c[n, alpha]`` of a state on subsystem A times the rest.

    Rows index subsystem A, matching the left-slow Kronecker ordering, so a
    flat vector over ``A (x) B`` reshapes directly to this matrix.
    """

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = hilbert.as_matrix(self.amplitudes, name="amplitudes")
        if amps.ndim != 2:
            raise ShapeError("bipartite amplitudes must be a matrix")
        norm2 = float(np.sum(np.abs(amps) ** 2))
        if abs(norm2 - 1.0) > NORM_TOL:
            raise ValidationError(f"bipartite norm^2 is {norm2!r}, expected 1")
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @classmethod
    def from_state(cls, psi: PureState, dim_a: int) -> "BipartiteState":
        if psi.basis_dim % dim_a:
            raise ShapeError(f"dimension {psi.basis_dim} is not divisible by {dim_a}")
        return cls(psi.amplitudes.reshape(dim_a, -1))


def to_density(psi: PureState) -> DensityMatrix:
    c = psi.amplitudes
    return DensityMatrix(np.outer(c, c.conj()), _checked=False)


def partial_trace(state: BipartiteState) -> DensityMatrix:
    """Reduced density matrix of subsystem A: ``rho[n, m] = sum_a c[n, a] c[m, a]*``."""
    c = state.amplitudes
    return DensityMatrix(c @ c.conj().T)


def _check_observable(rho: DensityMatrix, g) -> np.ndarray:
    g = hilbert.as_matrix(g, name="G")
    if g.ndim != 2 or g.shape != rho.rho.shape:
        raise ShapeError(f"operator shape {g.shape} does not match state dimension {rho.dim}")
    if not hilbert.is_hermitian(g):
        raise ValidationError("expectation requires a Hermitian operator")
    return g


def expectation(rho: DensityMatrix, g) -> float:
    """``Tr(G rho)`` for Hermitian ``G``."""
    g = _check_observable(rho, g)
    value = np.sum(g * rho.rho.T)
    if abs(value.imag) >= 1e-10:
        raise ValidationError(f"trace has imaginary residue {value.imag:.3e}")
    return float(value.real)


def direct_expectation(psi: PureState, g) -> float:
    """``<psi|G|psi>`` computed on the vector, without forming ``rho``."""
    g = hilbert.as_matrix(g, name="G")
    if g.shape != (psi.basis_dim, psi.basis_dim):
        raise ShapeError(f"operator shape {g.shape} does not match state dimension {psi.basis_dim}")
    value = np.vdot(psi.amplitudes, g @ psi.amplitudes)
    return float(value.real)


def purity(rho: DensityMatrix) -> float:
    return float(np.sum(np.abs(rho.rho) ** 2))


def in_basis(rho: DensityMatrix, basis: hilbert.EigenDecomposition) -> DensityMatrix:
    """Express ``rho`` in the basis formed by the columns of ``basis.eigenvectors``."""
    v = basis.eigenvectors
    if v.shape[0] != rho.dim:
        raise ShapeError("basis dimension does not match state")
    out = v.conj().T @ rho.rho @ v
    return DensityMatrix(0.5 * (out + out.conj().T), _checked=False)
