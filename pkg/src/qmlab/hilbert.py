"""Dense complex linear algebra on small matrices.

Matrices are plain ``numpy`` arrays of dtype ``complex128``. Functions here
validate shapes and finiteness and never modify their arguments. Kronecker
products use the left factor as the slow index, so ``kron(|up>, |down>)`` is
basis vector 1 of ``{uu, ud, du, dd}``; every multi-particle basis in the
package inherits this ordering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConditioningError, RankError, ShapeError, ValidationError

HERMITIAN_TOL = 1e-12
ORTHONORMAL_TOL = 1e-10
RESIDUAL_TOL = 1e-9
PIVOT_TOL = 1e-12

_MAX_SWEEPS = 100


def as_matrix(a, *, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite complex array with one or two axes.

    A new array is always returned so callers may keep it without aliasing
    the input.
    """
    arr = np.array(a, dtype=np.complex128)
    if arr.ndim not in (1, 2) or arr.size == 0:
        raise ShapeError(f"{name} must be a non-empty vector or matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or Inf entries")
    return arr


def _square(a, name: str) -> np.ndarray:
    arr = as_matrix(a, name=name)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {arr.shape}")
    return arr


def identity(n: int) -> np.ndarray:
    return np.eye(n, dtype=np.complex128)


def max_norm(a) -> float:
    """Largest entry magnitude."""
    return float(np.max(np.abs(a))) if np.size(a) else 0.0


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, name="a")
    b = as_matrix(b, name="b")
    inner_a = a.shape[-1]
    inner_b = b.shape[0]
    if inner_a != inner_b:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def dagger(a) -> np.ndarray:
    """Conjugate transpose. A 1-D ket becomes a 1 x n bra."""
    a = as_matrix(a)
    if a.ndim == 1:
        return a.conj()[np.newaxis, :]
    return a.conj().T.copy()


def kron(a, b) -> np.ndarray:
    return np.kron(as_matrix(a, name="a"), as_matrix(b, name="b"))


def kron_all(*factors) -> np.ndarray:
    out = as_matrix(factors[0])
    for f in factors[1:]:
        out = kron(out, f)
    return out


def commutator(a, b) -> np.ndarray:
    a = _square(a, "a")
    b = _square(b, "b")
    if a.shape != b.shape:
        raise ShapeError(f"commutator of {a.shape} and {b.shape}")
    return a @ b - b @ a


def trace(a) -> complex:
    return complex(np.trace(_square(a, "matrix")))


def hermiticity_defect(a) -> float:
    a = _square(a, "matrix")
    return max_norm(a - a.conj().T)


def is_hermitian(a, tol: float = HERMITIAN_TOL) -> bool:
    a = _square(a, "matrix")
    return hermiticity_defect(a) <= tol * max(1.0, max_norm(a))


@dataclass(frozen=True, eq=False)
class EigenDecomposition:
    """Spectral data of a Hermitian matrix.

    ``eigenvalues`` are ascending; column ``i`` of ``eigenvectors`` belongs
    to ``eigenvalues[i]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T

    def orthonormality_defect(self) -> float:
        v = self.eigenvectors
        return max_norm(v.conj().T @ v - np.eye(self.dim))

    def residual(self, a) -> float:
        """Max-norm of ``A V - V diag(lambda)``."""
        a = np.asarray(a, dtype=np.complex128)
        v = self.eigenvectors
        return max_norm(a @ v - v * self.eigenvalues)


def _jacobi_rotation(app: float, aqq: float, apq: complex) -> np.ndarray:
    """2x2 unitary that annihilates the (p, q) entry of a Hermitian block."""
    g = abs(apq)
    phase = apq / g
    theta = (aqq - app) / (2.0 * g)
    t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
    if theta < 0.0:
        t = -t
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c
    # diag(1, conj(phase)) makes the block real, then a real Givens rotation.
    return np.array([[c, s], [-s * phase.conjugate(), c * phase.conjugate()]])


def hermitian_eig(a) -> EigenDecomposition:
    """Eigen-decompose a Hermitian matrix with cyclic complex Jacobi sweeps.

    Raises
    ------
    ValidationError
        If ``a`` deviates from its adjoint by more than ``HERMITIAN_TOL``
        (scaled by the matrix magnitude when that exceeds one).
    """
    a = _square(a, "matrix")
    scale = max(1.0, max_norm(a))
    defect = hermiticity_defect(a)
    if defect > HERMITIAN_TOL * scale:
        raise ValidationError(f"matrix is not Hermitian (max |A - A^H| = {defect:.3e})")

    work = 0.5 * (a + a.conj().T)
    n = work.shape[0]
    vecs = identity(n)
    frob = np.linalg.norm(work)
    if n > 1 and frob > 0.0:
        floor = 1e-300
        for _ in range(_MAX_SWEEPS):
            off = np.linalg.norm(work - np.diag(np.diag(work)))
            if off <= 1e-15 * frob:
                break
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = work[p, q]
                    if abs(apq) <= floor or abs(apq) <= 1e-18 * frob:
                        continue
                    u = _jacobi_rotation(work[p, p].real, work[q, q].real, apq)
                    cols = [p, q]
                    work[:, cols] = work[:, cols] @ u
                    work[cols, :] = u.conj().T @ work[cols, :]
                    work[p, q] = work[q, p] = 0.0
                    vecs[:, cols] = vecs[:, cols] @ u
        else:
            raise ConditioningError("Jacobi sweeps did not converge")

    values = np.real(np.diag(work)).copy()
    order = np.argsort(values, kind="stable")
    return EigenDecomposition(values[order], vecs[:, order])


def _lu_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    rhs = b.reshape(n, -1).copy()
    lu = a.copy()
    scale = max_norm(a)
    if scale == 0.0:
        raise RankError("matrix is zero", pivot=0.0)

    for k in range(n):
        piv = k + int(np.argmax(np.abs(lu[k:, k])))
        pivot = abs(lu[piv, k])
        if pivot <= PIVOT_TOL * scale:
            raise RankError(
                f"matrix is singular to working precision (pivot {pivot:.3e} at column {k})",
                pivot=pivot,
            )
        if piv != k:
            lu[[k, piv]] = lu[[piv, k]]
            rhs[[k, piv]] = rhs[[piv, k]]
        factors = lu[k + 1 :, k] / lu[k, k]
        lu[k + 1 :, k:] -= np.outer(factors, lu[k, k:])
        rhs[k + 1 :] -= np.outer(factors, rhs[k])

    x = np.empty_like(rhs)
    for k in range(n - 1, -1, -1):
        x[k] = (rhs[k] - lu[k, k + 1 :] @ x[k + 1 :]) / lu[k, k]
    return x


def solve_linear(a, b) -> np.ndarray:
    """Solve ``a x = b`` by LU factorisation with partial pivoting.

    ``b`` may be a vector or a matrix of right-hand sides. A pivot whose
    magnitude falls below ``PIVOT_TOL`` times the largest entry of ``a``
    raises :class:`RankError` carrying that pivot. The normwise backward
    error ``||Ax - b|| / (||A|| ||x|| + ||b||)`` must stay below
    ``RESIDUAL_TOL``.
    """
    a = _square(a, "a")
    b = as_matrix(b, name="b")
    n = a.shape[0]
    if b.shape[0] != n:
        raise ShapeError(f"right-hand side has {b.shape[0]} rows, expected {n}")
    x = _lu_solve(a, b)
    bm = b.reshape(n, -1)
    resid = max_norm(a @ x - bm)
    ref = n * max_norm(a) * max_norm(x) + max_norm(bm)
    if ref > 0.0 and resid / ref > RESIDUAL_TOL:
        raise ConditioningError(f"solve backward error {resid / ref:.3e} exceeds {RESIDUAL_TOL:g}")
    return x[:, 0] if b.ndim == 1 else x


def condition_estimate(a) -> float:
    """1-norm condition number, ``||A||_1 ||A^-1||_1``.

    Returns ``inf`` for a numerically singular matrix.
    """
    a = _square(a, "a")
    try:
        inv = _lu_solve(a, identity(a.shape[0]))
    except RankError:
        return float("inf")
    norm1 = lambda m: float(np.max(np.sum(np.abs(m), axis=0)))  # noqa: E731
    return norm1(a) * norm1(inv)


def solve_tridiagonal(lower, diag, upper, rhs) -> np.ndarray:
    """Solve a tridiagonal system given its three diagonals.

    ``lower`` and ``upper`` have length ``n - 1``. Backed by LAPACK's banded
    solver; the time stepper calls this thousands of times per run.
    """
    diag = np.asarray(diag, dtype=np.complex128)
    n = diag.shape[0]
    lower = np.asarray(lower, dtype=np.complex128)
    upper = np.asarray(upper, dtype=np.complex128)
    if lower.shape != (n - 1,) or upper.shape != (n - 1,):
        raise ShapeError("off-diagonals must have length n - 1")
    bands = np.zeros((3, n), dtype=np.complex128)
    bands[0, 1:] = upper
    bands[1] = diag
    bands[2, :-1] = lower
    return solve_banded((1, 1), bands, rhs, check_finite=False)


def tridiagonal_matvec(lower, diag, upper, x) -> np.ndarray:
    out = diag * x
    out[:-1] += upper * x[1:]
    out[1:] += lower * x[:-1]
    return out
