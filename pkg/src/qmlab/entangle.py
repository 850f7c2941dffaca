"""Two- and three-particle spin correlations.

Covers the singlet correlation ``<s.a s.b> = -(a.b)/4``, the CHSH
combination, a local hidden-variable baseline for contrast, and the
three-particle GHZ state with its four mutually commuting Mermin operators.

Correlators come in two normalisations. ``spin_correlation`` uses spin
operators ``s = sigma / 2``; ``sigma_correlation`` uses ``sigma`` (outcomes
+-1) and is four times larger. CHSH values are always built from the
latter.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import hilbert
from .errors import IncompatibleObservablesError, ValidationError
from .measure import JointMeasurement
from .observables import IDENTITY_2, SIGMA_X, SIGMA_Y, SIGMA_Z, Observable, embed, spin_half_along
from .rng import CounterRng, as_rng
from .states import PureState, expectation, to_density

SQRT_HALF = 1.0 / np.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class DetectorSetting:
    """Unit vector along which a Stern-Gerlach magnet is oriented."""

    direction: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float).reshape(-1)
        if d.shape != (3,):
            raise ValidationError("direction must be a 3-vector")
        if abs(np.linalg.norm(d) - 1.0) > 1e-10:
            raise ValidationError(f"direction norm is {np.linalg.norm(d)!r}, expected 1")
        d.setflags(write=False)
        object.__setattr__(self, "direction", d)

    @classmethod
    def in_plane(cls, angle: float) -> "DetectorSetting":
        """Direction at ``angle`` from z inside the x-z plane."""
        return cls(np.array([np.sin(angle), 0.0, np.cos(angle)]))

    @classmethod
    def from_angles(cls, theta: float, phi: float) -> "DetectorSetting":
        return cls(np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)]))

    @classmethod
    def random(cls, u1: float, u2: float) -> "DetectorSetting":
        """Uniform point on the sphere from two uniforms."""
        return cls(_sphere_points(np.array([[u1, u2]]))[0])

    def dot(self, other: "DetectorSetting") -> float:
        return float(np.clip(self.direction @ other.direction, -1.0, 1.0))

    def angle_to(self, other: "DetectorSetting") -> float:
        return float(np.arccos(self.dot(other)))


def _sphere_points(u: np.ndarray) -> np.ndarray:
    z = 2.0 * u[:, 0] - 1.0
    phi = 2.0 * np.pi * u[:, 1]
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    pts = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def singlet() -> PureState:
    """Total-spin-zero pair in the basis uu, ud, du, dd."""
    return PureState(np.array([0.0, SQRT_HALF, -SQRT_HALF, 0.0]))


def total_spin_squared() -> np.ndarray:
    """``(s_1 + s_2)^2`` on two spin-1/2 particles."""
    total = np.zeros((4, 4), dtype=np.complex128)
    for sigma in (SIGMA_X, SIGMA_Y, SIGMA_Z):
        s = 0.5 * (np.kron(sigma, IDENTITY_2) + np.kron(IDENTITY_2, sigma))
        total += s @ s
    return total


def pair_operator(a: DetectorSetting, b: DetectorSetting) -> np.ndarray:
    """``(s.a) (x) (s.b)``."""
    return hilbert.kron(spin_half_along(a.direction), spin_half_along(b.direction))


def spin_correlation(a: DetectorSetting, b: DetectorSetting) -> float:
    """Singlet average of ``(s.a)(s.b)``, evaluated as a trace against rho."""
    return expectation(to_density(singlet()), pair_operator(a, b))


def sigma_correlation(a: DetectorSetting, b: DetectorSetting) -> float:
    return 4.0 * spin_correlation(a, b)


def chsh_combination(e_ab: float, e_abp: float, e_apb: float, e_apbp: float) -> float:
    return e_ab - e_abp + e_apb + e_apbp


def chsh_value(a: DetectorSetting, a_p: DetectorSetting, b: DetectorSetting, b_p: DetectorSetting) -> float:
    """``S = E(a,b) - E(a,b') + E(a',b) + E(a',b')`` with +-1 outcomes."""
    return chsh_combination(
        sigma_correlation(a, b),
        sigma_correlation(a, b_p),
        sigma_correlation(a_p, b),
        sigma_correlation(a_p, b_p),
    )


def optimal_chsh_settings() -> tuple[DetectorSetting, DetectorSetting, DetectorSetting, DetectorSetting]:
    """Coplanar settings ``a, a', b, b'`` at 0, 90, 45 and 135 degrees."""
    return tuple(DetectorSetting.in_plane(np.deg2rad(d)) for d in (0.0, 90.0, 45.0, 135.0))


def sweep_settings(theta: float) -> tuple[DetectorSetting, DetectorSetting, DetectorSetting, DetectorSetting]:
    """``a, a', b, b'`` at ``0, 2 theta, theta, 3 theta``; theta = pi/4 is optimal."""
    return tuple(DetectorSetting.in_plane(k * theta) for k in (0.0, 2.0, 1.0, 3.0))


@dataclass(frozen=True)
class CorrelationEstimate:
    value: float
    stderr: float
    shots: int


def _estimate(products: np.ndarray, scale: float = 1.0) -> CorrelationEstimate:
    n = products.size
    mean = float(products.mean())
    var = max(scale * scale - mean * mean, 0.0)
    return CorrelationEstimate(mean, float(np.sqrt(var / n)), n)


@lru_cache(maxsize=256)
def _pair_measurement(a: tuple, b: tuple) -> JointMeasurement:
    fa = Observable(hilbert.kron(spin_half_along(a), IDENTITY_2), "s1.a")
    gb = Observable(hilbert.kron(IDENTITY_2, spin_half_along(b)), "s2.b")
    return JointMeasurement([fa, gb])


def sampled_spin_correlation(a: DetectorSetting, b: DetectorSetting, shots: int, rng: CounterRng) -> CorrelationEstimate:
    """Monte Carlo ``<(s.a)(s.b)>`` from joint single-event readings on the singlet."""
    joint = _pair_measurement(tuple(a.direction), tuple(b.direction))
    _, readings = joint.sample(singlet(), shots, as_rng(rng))
    return _estimate(readings[:, 0] * readings[:, 1], scale=0.25)


def hv_outcomes(a: DetectorSetting, b: DetectorSetting, shots: int, rng: CounterRng) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shared-vector model: ``A = sign(a.l)``, ``B = -sign(b.l)``, ``l`` uniform on the sphere.

    Returns ``(event_counters, A, B)``.
    """
    if shots < 1:
        raise ValidationError("shots must be >= 1")
    counters, u = as_rng(rng).take(shots, width=2)
    lam = _sphere_points(u)
    out_a = np.where(lam @ a.direction >= 0.0, 1, -1)
    out_b = -np.where(lam @ b.direction >= 0.0, 1, -1)
    return counters, out_a, out_b


def hv_baseline_correlation(a: DetectorSetting, b: DetectorSetting, shots: int, rng: CounterRng) -> float:
    _, out_a, out_b = hv_outcomes(a, b, shots, rng)
    return float(np.mean(out_a * out_b))


def hv_correlation_analytic(a: DetectorSetting, b: DetectorSetting) -> float:
    return -1.0 + 2.0 * a.angle_to(b) / np.pi


def _hv_estimate(a, b, shots, rng) -> CorrelationEstimate:
    _, out_a, out_b = hv_outcomes(a, b, shots, rng)
    return _estimate((out_a * out_b).astype(float))


@dataclass(frozen=True)
class ChshEstimate:
    value: float
    stderr: float
    correlators: tuple


def hv_chsh(settings, shots: int, rng: CounterRng) -> ChshEstimate:
    """CHSH value of the hidden-variable model, ``shots`` runs per correlator."""
    a, a_p, b, b_p = settings
    rng = as_rng(rng)
    ests = [_hv_estimate(x, y, shots, rng) for x, y in ((a, b), (a, b_p), (a_p, b), (a_p, b_p))]
    value = chsh_combination(*(e.value for e in ests))
    return ChshEstimate(value, float(np.sqrt(sum(e.stderr**2 for e in ests))), tuple(e.value for e in ests))


def sampled_chsh(settings, shots: int, rng: CounterRng) -> ChshEstimate:
    """CHSH value of the singlet from sampled joint readings."""
    a, a_p, b, b_p = settings
    rng = as_rng(rng)
    ests = [sampled_spin_correlation(x, y, shots, rng) for x, y in ((a, b), (a, b_p), (a_p, b), (a_p, b_p))]
    vals = [4.0 * e.value for e in ests]
    return ChshEstimate(chsh_combination(*vals), float(4.0 * np.sqrt(sum(e.stderr**2 for e in ests))), tuple(vals))


def chsh_sweep(thetas, shots: int, rng: CounterRng) -> list[dict]:
    """Quantum and hidden-variable CHSH along the ``sweep_settings`` family."""
    rng = as_rng(rng)
    rows = []
    for theta in thetas:
        settings = sweep_settings(float(theta))
        a, a_p, b, b_p = settings
        e_hv = _hv_estimate(a, b, shots, rng)
        s_hv = hv_chsh(settings, shots, rng)
        rows.append(
            {
                "theta": float(theta),
                "E_qm": sigma_correlation(a, b),
                "E_hv": e_hv.value,
                "S_qm": chsh_value(*settings),
                "S_hv": s_hv.value,
                "S_hv_stderr": s_hv.stderr,
            }
        )
    return rows


# GHZ / Mermin

MERMIN_SITES = {
    "M1": ("x", "y", "y"),
    "M2": ("y", "x", "y"),
    "M3": ("y", "y", "x"),
    "M4": ("x", "x", "x"),
}
MERMIN_SIGN = {"M1": 1, "M2": 1, "M3": 1, "M4": -1}
_PAULI = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}


def ghz_state() -> PureState:
    """``(|uuu> - |ddd>) / sqrt(2)``."""
    amps = np.zeros(8)
    amps[0] = SQRT_HALF
    amps[7] = -SQRT_HALF
    return PureState(amps)


def site_pauli(axis: str, site: int) -> np.ndarray:
    return embed(_PAULI[axis], site, 3)


def mermin_operator(which: str) -> np.ndarray:
    axes = MERMIN_SITES[_check_tag(which)]
    return hilbert.kron_all(*(_PAULI[ax] for ax in axes))


def _check_tag(which: str) -> str:
    if which not in MERMIN_SITES:
        raise ValidationError(f"unknown Mermin operator {which!r}; expected one of {sorted(MERMIN_SITES)}")
    return which


@dataclass(frozen=True)
class GhzOutcome:
    m1: int
    m2: int
    m3: int
    which: str
    event_counter: int

    @property
    def product(self) -> int:
        return self.m1 * self.m2 * self.m3

    @property
    def satisfies_constraint(self) -> bool:
        return self.product == MERMIN_SIGN[self.which]


@lru_cache(maxsize=None)
def _ghz_measurement(which: str) -> JointMeasurement:
    axes = MERMIN_SITES[which]
    return JointMeasurement([Observable(site_pauli(ax, k), f"sigma{k + 1}{ax}") for k, ax in enumerate(axes)])


def ghz_runs(which: str, n_runs: int, rng: CounterRng) -> list[GhzOutcome]:
    """``n_runs`` independent triple measurements, each on a fresh GHZ state."""
    joint = _ghz_measurement(_check_tag(which))
    counters, readings = joint.sample(ghz_state(), n_runs, as_rng(rng))
    signs = np.where(readings > 0, 1, -1)
    return [GhzOutcome(int(s[0]), int(s[1]), int(s[2]), which, int(c)) for c, s in zip(counters, signs)]


def ghz_run(which: str, rng: CounterRng) -> GhzOutcome:
    return ghz_runs(which, 1, rng)[0]


def classical_assignments() -> list[dict]:
    """All site-shared +-1 values satisfying the four product relations at once.

    Exhaustive over the 64 assignments of ``m_{k,x}, m_{k,y}``.
    """
    keys = [f"m{site}{ax}" for site in (1, 2, 3) for ax in ("x", "y")]
    solutions = []
    for values in itertools.product((1, -1), repeat=6):
        m = dict(zip(keys, values))
        ok = all(
            m[f"m1{axes[0]}"] * m[f"m2{axes[1]}"] * m[f"m3{axes[2]}"] == MERMIN_SIGN[tag]
            for tag, axes in MERMIN_SITES.items()
        )
        if ok:
            solutions.append(m)
    return solutions


@dataclass
class MerminReport:
    eigenvalues: dict = field(default_factory=dict)
    eigen_defects: dict = field(default_factory=dict)
    commutator_norms: dict = field(default_factory=dict)
    site_commutator_norm: float = 0.0
    joint_accepted: bool = False
    cross_run_rejected: bool = False
    runs: list = field(default_factory=list)
    classical_solutions: list = field(default_factory=list)
    assignments_checked: int = 64

    @property
    def consistent(self) -> bool:
        return (
            max(self.commutator_norms.values()) < 1e-10
            and abs(self.site_commutator_norm - 2.0) < 1e-12
            and self.joint_accepted
            and self.cross_run_rejected
            and all(r.satisfies_constraint for r in self.runs)
            and not self.classical_solutions
        )


def ghz_incompatibility_demo(rng: CounterRng | int = 0) -> MerminReport:
    """Why the four Mermin relations are four separate events.

    The operators commute pairwise, yet their single-site factors do not,
    so the readings entering different products cannot come from one
    event.
    """
    rng = as_rng(rng)
    report = MerminReport()
    psi = ghz_state().amplitudes
    ops = {tag: mermin_operator(tag) for tag in MERMIN_SITES}
    for tag, op in ops.items():
        image = op @ psi
        report.eigenvalues[tag] = float(np.vdot(psi, image).real)
        report.eigen_defects[tag] = hilbert.max_norm(image - MERMIN_SIGN[tag] * psi)
    for x, y in itertools.combinations(sorted(ops), 2):
        report.commutator_norms[(x, y)] = hilbert.max_norm(hilbert.commutator(ops[x], ops[y]))
    report.site_commutator_norm = hilbert.max_norm(hilbert.commutator(site_pauli("x", 0), site_pauli("y", 0)))

    _ghz_measurement("M1")
    report.joint_accepted = True
    try:
        JointMeasurement(
            [Observable(site_pauli(ax, k)) for k, ax in enumerate(MERMIN_SITES["M1"])]
            + [Observable(site_pauli(ax, k)) for k, ax in enumerate(MERMIN_SITES["M2"])]
        )
    except IncompatibleObservablesError:
        report.cross_run_rejected = True

    report.runs = [ghz_run(tag, rng) for tag in MERMIN_SITES]
    report.classical_solutions = classical_assignments()
    return report
