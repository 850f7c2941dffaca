"""Outcome frequencies from moments, and empirical checks of Born weights.

Given the distinct eigenvalues ``f_1 .. f_D`` of an observable and the
averages ``<F^N>``, the relative frequencies ``P_n`` solve the Vandermonde
system ``sum_n f_n^N P_n = <F^N>``. Two power conventions are offered:

``"classical"`` (default)
    rows ``N = 0 .. D-1``. Row 0 is the normalisation ``sum P_n = 1``;
    invertible whenever the nodes are distinct, including a zero node.
``"moments"``
    rows ``N = 1 .. D``. The determinant carries a factor ``prod f_n``, so
    a zero node is rejected.

Moments beyond those the chosen rows consume are not ignored: their
residual is reported as ``consistency`` on the result.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import hilbert
from .errors import ConditioningError, ConventionError, DegeneracyError, ShapeError, ValidationError
from .io import csv_text
from .measure import sample_counts
from .observables import Observable
from .rng import as_rng
from .states import PureState

CONVENTIONS = ("classical", "moments")
MAX_CONDITION = 1e10
NEGATIVE_DUST = 1e-9
SUM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class MomentSystem:
    """Distinct nodes and their moments ``<F^N>`` for ``N = 1, 2, ...``."""

    nodes: np.ndarray
    moments: np.ndarray
    convention: str = "classical"

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float).reshape(-1)
        moments = np.asarray(self.moments, dtype=float).reshape(-1)
        if self.convention not in CONVENTIONS:
            raise ValidationError(f"unknown convention {self.convention!r}")
        if nodes.size == 0:
            raise ShapeError("need at least one node")
        needed = nodes.size - 1 if self.convention == "classical" else nodes.size
        if moments.size < needed:
            raise ShapeError(f"{self.convention} convention needs {needed} moments, got {moments.size}")
        if not (np.all(np.isfinite(nodes)) and np.all(np.isfinite(moments))):
            raise ValidationError("nodes and moments must be finite")

        ordered = np.sort(nodes)
        spread = ordered[-1] - ordered[0]
        if nodes.size > 1 and np.min(np.diff(ordered)) <= 1e-9 * spread:
            raise DegeneracyError(
                "repeated eigenvalue: resolve it with a compatible observable "
                "(see measure.JointMeasurement)"
            )
        if self.convention == "moments":
            scale = max(spread, float(np.max(np.abs(nodes))))
            if np.any(np.abs(nodes) <= 1e-9 * scale):
                raise ConventionError(
                    "a zero eigenvalue makes the N = 1..D system singular; use convention='classical'"
                )
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "moments", moments)

    @property
    def dim(self) -> int:
        return self.nodes.size

    @property
    def powers(self) -> np.ndarray:
        start = 0 if self.convention == "classical" else 1
        return np.arange(start, start + self.dim)

    def matrix(self) -> np.ndarray:
        """``V[m, n] = f_n ** powers[m]``."""
        return self.nodes[np.newaxis, :] ** self.powers[:, np.newaxis]

    def rhs(self) -> np.ndarray:
        if self.convention == "classical":
            return np.concatenate([[1.0], self.moments[: self.dim - 1]])
        return self.moments[: self.dim].copy()


@dataclass(frozen=True, eq=False)
class FrequencyTable:
    """Outcomes with their relative frequencies, optionally with raw counts."""

    outcomes: np.ndarray
    frequencies: np.ndarray
    counts: Optional[np.ndarray] = None
    seed: Optional[int] = None
    condition: Optional[float] = None
    consistency: Optional[float] = field(default=None)

    def __post_init__(self):
        outcomes = np.asarray(self.outcomes, dtype=float).reshape(-1)
        freqs = np.asarray(self.frequencies, dtype=float).reshape(-1)
        if outcomes.shape != freqs.shape:
            raise ShapeError("outcomes and frequencies differ in length")
        if np.any(freqs < -NEGATIVE_DUST):
            raise ValidationError(f"negative frequency {freqs.min():.3e}")
        if abs(freqs.sum() - 1.0) > SUM_TOL:
            raise ValidationError(f"frequencies sum to {freqs.sum()!r}")
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "frequencies", freqs)
        if self.counts is not None:
            counts = np.asarray(self.counts, dtype=np.int64)
            if counts.shape != outcomes.shape or np.any(counts < 0):
                raise ValidationError("counts must be non-negative and match outcomes")
            object.__setattr__(self, "counts", counts)

    @classmethod
    def from_counts(cls, outcomes, counts, seed=None) -> "FrequencyTable":
        counts = np.asarray(counts, dtype=np.int64)
        return cls(outcomes, counts / counts.sum(), counts=counts, seed=seed)


def forward_moments(table: FrequencyTable, order: int, convention: str = "classical") -> MomentSystem:
    """Exact moments ``sum_n f_n^N P_n`` for ``N = 1 .. order``."""
    if order < 1:
        raise ValidationError("order must be >= 1")
    powers = np.arange(1, order + 1)[:, np.newaxis]
    moments = (table.outcomes[np.newaxis, :] ** powers) @ table.frequencies
    return MomentSystem(table.outcomes, moments, convention)


def reconstruct_frequencies(system: MomentSystem) -> FrequencyTable:
    """Invert the moment system for the relative frequencies.

    Rows are equilibrated before the LU solve; the condition estimate of the
    equilibrated matrix is returned on the table. Negative entries down to
    ``-1e-9`` are clipped and the vector renormalised; anything more
    negative means the data and the nodes are inconsistent or the solve is
    not trustworthy, and raises.
    """
    vmat = system.matrix()
    rhs = system.rhs()
    row_scale = np.max(np.abs(vmat), axis=1)
    vmat = vmat / row_scale[:, np.newaxis]
    rhs = rhs / row_scale

    cond = hilbert.condition_estimate(vmat)
    if cond > MAX_CONDITION:
        raise ConditioningError(f"moment system condition estimate {cond:.3e} exceeds {MAX_CONDITION:g}", cond)

    solution = hilbert.solve_linear(vmat, rhs).real
    resid = np.max(np.abs(vmat @ solution - rhs)) / max(np.max(np.abs(rhs)), 1e-300)
    if resid > 1e-8:
        raise ConditioningError(f"moment solve residual {resid:.3e}", cond)
    if np.any(solution < -NEGATIVE_DUST):
        raise ConditioningError(
            f"reconstructed frequency {solution.min():.3e} is negative beyond round-off", cond
        )
    freqs = np.clip(solution, 0.0, None)
    freqs /= freqs.sum()

    used = system.dim - 1 if system.convention == "classical" else system.dim
    extra = system.moments[used:]
    consistency = None
    if extra.size:
        powers = np.arange(used + 1, system.moments.size + 1)[:, np.newaxis]
        predicted = (system.nodes[np.newaxis, :] ** powers) @ freqs
        consistency = float(np.max(np.abs(predicted - extra)))
    return FrequencyTable(system.nodes, freqs, condition=cond, consistency=consistency)


def moment_system_for(psi: PureState, obs: Observable, convention: str = "classical", order: Optional[int] = None) -> MomentSystem:
    """Moments of ``obs`` in ``psi`` computed directly as ``<psi|F^N|psi>``.

    Uses matrix powers on the state vector, not the spectral weights, so it
    is an independent route into :func:`reconstruct_frequencies`.
    """
    if obs.is_degenerate:
        raise DegeneracyError("observable has degenerate eigenvalues; measure it jointly with a compatible one")
    order = obs.n_outcomes if order is None else order
    vec = psi.amplitudes
    moments = []
    current = vec.copy()
    for _ in range(order):
        current = obs.matrix @ current
        moments.append(np.vdot(vec, current).real)
    return MomentSystem(obs.spectrum, np.array(moments), convention)


@dataclass(frozen=True, eq=False)
class BornComparison:
    """Empirical frequencies next to the Born weights they should match."""

    outcomes: np.ndarray
    theoretical: np.ndarray
    empirical: np.ndarray
    stderr: np.ndarray
    counts: np.ndarray
    shots: int
    seed: Optional[int]

    @property
    def zscores(self) -> np.ndarray:
        dev = self.empirical - self.theoretical
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(self.stderr > 0, dev / np.where(self.stderr > 0, self.stderr, 1.0), np.where(dev == 0, 0.0, np.inf))
        return z

    def within(self, n_sigma: float) -> bool:
        return bool(np.all(np.abs(self.zscores) <= n_sigma))

    def rows(self):
        return list(zip(self.outcomes, self.theoretical, self.empirical, self.stderr, self.zscores))

    def to_csv(self) -> str:
        return csv_text(["outcome", "theoretical", "empirical", "stderr", "zscore"], self.rows())


def empirical_vs_born(psi: PureState, obs: Observable, shots: int, seed) -> BornComparison:
    """Sample ``shots`` measurements and compare with ``|c_n|^2``.

    The binomial standard error ``sqrt(p (1 - p) / shots)`` uses the
    theoretical weight ``p``.
    """
    rng = as_rng(seed)
    counts = sample_counts(psi, obs, shots, rng)
    theory = obs.frequencies(psi)
    empirical = counts / shots
    stderr = np.sqrt(theory * (1.0 - np.clip(theory, 0.0, 1.0)) / shots)
    return BornComparison(obs.spectrum.copy(), theory, empirical, stderr, counts, shots, rng.seed)
