"""One-dimensional wave packets: barrier scattering and two-path interference.

Units: hbar = m = 1, so ``H = -(1/2) d^2/dx^2 + V(x)`` and a packet with
mean wavenumber ``k0`` moves at speed ``k0``. Time stepping is
Crank-Nicolson on a uniform grid with Dirichlet walls just outside the
first and last grid points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from . import hilbert
from .errors import InconclusiveRunError, InstabilityError, PlacementError, ValidationError
from .rng import CounterRng, as_rng

MIN_POINTS = 256
NORM_TOL = 1e-8
DRIFT_LIMIT = 1e-6
CLEARANCE_LIMIT = 0.01


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_points: int
    dt: Optional[float] = None

    def __post_init__(self):
        if self.n_points < MIN_POINTS:
            raise ValidationError(f"need at least {MIN_POINTS} grid points, got {self.n_points}")
        if not self.x_max > self.x_min:
            raise ValidationError("x_max must exceed x_min")
        if self.dt is None:
            object.__setattr__(self, "dt", self.dx**2)
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        # Accuracy guard for the phase error of the implicit scheme.
        if self.dt > self.dx**2 * (1.0 + 1e-12):
            raise ValidationError(f"dt = {self.dt:.3g} exceeds dx^2 = {self.dx**2:.3g}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)

    @property
    def wavenumbers(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)


@dataclass(frozen=True, eq=False)
class WavePacket:
    values: np.ndarray
    grid: Grid1D

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128).reshape(-1)
        if v.shape != (self.grid.n_points,):
            raise ValidationError("packet length does not match grid")
        norm = float(np.sum(np.abs(v) ** 2) * self.grid.dx)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValidationError(f"packet norm is {norm!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    @property
    def norm(self) -> float:
        return float(np.sum(self.density) * self.grid.dx)

    def mean_position(self) -> float:
        return float(np.sum(self.grid.x * self.density) * self.grid.dx)

    def position_spread(self) -> float:
        x = self.grid.x
        mean = self.mean_position()
        return float(np.sqrt(np.sum((x - mean) ** 2 * self.density) * self.grid.dx))

    def _momentum_weights(self):
        phi = np.fft.fft(self.values)
        w = np.abs(phi) ** 2
        return self.grid.wavenumbers, w / w.sum()

    def mean_momentum(self) -> float:
        """``<p>`` from the spectral derivative."""
        k, w = self._momentum_weights()
        return float(np.sum(k * w))

    def momentum_spread(self) -> float:
        k, w = self._momentum_weights()
        mean = np.sum(k * w)
        return float(np.sqrt(np.sum((k - mean) ** 2 * w)))

    def mass_where(self, mask) -> float:
        return float(np.sum(self.density[mask]) * self.grid.dx)


@dataclass(frozen=True)
class PacketParams:
    x_c: float
    k0: float
    sigma: float


def gaussian_packet(grid: Grid1D, x_c: float, k0: float, sigma: float) -> WavePacket:
    """``psi ~ exp(-(x - x_c)^2 / (4 sigma^2) + i k0 x)``, normalised on the grid."""
    if sigma < 4.0 * grid.dx:
        raise ValidationError(f"sigma = {sigma:.3g} is below 4 dx = {4 * grid.dx:.3g}")
    if x_c - 5.0 * sigma < grid.x_min or x_c + 5.0 * sigma > grid.x_max:
        raise PlacementError(f"packet at {x_c} with sigma {sigma} comes within 5 sigma of the grid edge")
    x = grid.x
    psi = np.exp(-((x - x_c) ** 2) / (4.0 * sigma**2) + 1j * k0 * x)
    return WavePacket(_normalised(psi, grid.dx), grid)


def _normalised(psi: np.ndarray, dx: float) -> np.ndarray:
    return psi / np.sqrt(np.sum(np.abs(psi) ** 2) * dx)


def hamiltonian_bands(grid: Grid1D, potential) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal and (symmetric) off-diagonal of the finite-difference Hamiltonian."""
    v = _potential_array(grid, potential)
    inv = 1.0 / grid.dx**2
    diag = inv + v
    off = np.full(grid.n_points - 1, -0.5 * inv)
    return diag, off


def _potential_array(grid: Grid1D, potential) -> np.ndarray:
    if potential is None:
        return np.zeros(grid.n_points)
    v = np.asarray(potential, dtype=float)
    if v.shape != (grid.n_points,):
        raise ValidationError("potential must be sampled on the grid")
    return v


def energy(psi: WavePacket, potential=None) -> float:
    """``<H>`` for the discrete Hamiltonian the stepper uses."""
    diag, off = hamiltonian_bands(psi.grid, potential)
    h_psi = hilbert.tridiagonal_matvec(off, diag, off, psi.values.astype(np.complex128))
    return float(np.vdot(psi.values, h_psi).real * psi.grid.dx)


def propagate(psi: WavePacket, potential, t_total: float) -> WavePacket:
    """Crank-Nicolson: ``(1 + i H dt/2) psi_new = (1 - i H dt/2) psi_old``.

    The step is shrunk so an integer number of steps lands on ``t_total``.

    Raises
    ------
    InstabilityError
        If the norm drifts by more than ``1e-6``.
    """
    if t_total < 0:
        raise ValidationError("t_total must be non-negative")
    grid = psi.grid
    n_steps = int(math.ceil(t_total / grid.dt - 1e-9))
    if n_steps == 0:
        return psi
    dt = t_total / n_steps
    diag, off = hamiltonian_bands(grid, potential)
    half = 0.5j * dt
    a_diag, a_off = 1.0 + half * diag, half * off
    b_diag, b_off = 1.0 - half * diag, -half * off

    values = psi.values.astype(np.complex128)
    for _ in range(n_steps):
        rhs = hilbert.tridiagonal_matvec(b_off, b_diag, b_off, values)
        values = hilbert.solve_tridiagonal(a_off, a_diag, a_off, rhs)

    norm = float(np.sum(np.abs(values) ** 2) * grid.dx)
    if not math.isfinite(norm) or abs(norm - 1.0) > DRIFT_LIMIT:
        raise InstabilityError(f"norm drifted to {norm!r} after {n_steps} steps")
    return WavePacket(_normalised(values, grid.dx), grid)


def free_width(sigma: float, t) -> np.ndarray:
    """Position spread of a free Gaussian: ``sqrt(sigma^2 + t^2 / (4 sigma^2))``."""
    return np.sqrt(sigma**2 + np.asarray(t) ** 2 / (4.0 * sigma**2))


# Barrier scattering


@dataclass(frozen=True)
class BarrierSpec:
    v0: float
    a: float
    x0: float = 0.0

    def __post_init__(self):
        if not self.a > 0:
            raise ValidationError("barrier width must be positive")

    @property
    def right(self) -> float:
        return self.x0 + self.a

    def potential(self, grid: Grid1D) -> np.ndarray:
        """Barrier height averaged over each grid cell, so edges need not sit on nodes."""
        x, dx = grid.x, grid.dx
        lo = np.maximum(x - 0.5 * dx, self.x0)
        hi = np.minimum(x + 0.5 * dx, self.right)
        return self.v0 * np.clip(hi - lo, 0.0, None) / dx


@dataclass(frozen=True)
class ScatteringResult:
    """``d``/``r``: norm right of the barrier and left of it at the final time.

    ``overlap`` is ``sum |psi_-| |psi_+| dx`` where ``psi_+`` and ``psi_-``
    are the right- and left-moving parts of the final packet (split by the
    sign of the wavenumber). It measures whether the transmitted and
    reflected pieces still share any support.
    """

    d: float
    r: float
    overlap: float
    inside: float
    clearance_mass: float
    t_total: float

    def __post_init__(self):
        for name in ("d", "r"):
            value = getattr(self, name)
            if not -1e-12 <= value <= 1.0 + 1e-12:
                raise ValidationError(f"{name} = {value!r} is outside [0, 1]")


def direction_split(psi: WavePacket) -> tuple[np.ndarray, np.ndarray]:
    """Right- and left-moving components of ``psi`` by wavenumber sign."""
    phi = np.fft.fft(psi.values)
    k = psi.grid.wavenumbers
    # The k = 0 bin is shared so the two parts add back up to psi.
    weight = np.where(k > 0, 1.0, np.where(k < 0, 0.0, 0.5))
    right = np.fft.ifft(weight * phi)
    left = np.fft.ifft((1.0 - weight) * phi)
    return right, left


def scatter_barrier(packet: PacketParams, barrier: BarrierSpec, grid: Grid1D, t_total: float) -> ScatteringResult:
    """Send a Gaussian packet at a square barrier and split the outcome by region.

    Raises
    ------
    PlacementError
        If the packet does not start at least 5 sigma left of the barrier.
    InconclusiveRunError
        If more than 1% of the norm is still within ``3 sigma(t)`` of the
        barrier at ``t_total``.
    """
    if packet.x_c + 5.0 * packet.sigma > barrier.x0:
        raise PlacementError("packet must start at least 5 sigma left of the barrier")
    psi0 = gaussian_packet(grid, packet.x_c, packet.k0, packet.sigma)
    psi = propagate(psi0, barrier.potential(grid), t_total)

    x = grid.x
    sigma_t = float(free_width(packet.sigma, t_total))
    near = (x > barrier.x0 - 3.0 * sigma_t) & (x < barrier.right + 3.0 * sigma_t)
    clearance = psi.mass_where(near)
    if clearance > CLEARANCE_LIMIT:
        raise InconclusiveRunError(
            f"{clearance:.2%} of the norm is still near the barrier at t = {t_total}; "
            "enlarge the grid or the propagation time"
        )
    d = psi.mass_where(x > barrier.right)
    r = psi.mass_where(x < barrier.x0)
    inside = psi.mass_where((x >= barrier.x0) & (x <= barrier.right))
    right, left = direction_split(psi)
    overlap = float(np.sum(np.abs(right) * np.abs(left)) * grid.dx)
    return ScatteringResult(d, r, overlap, inside, clearance, t_total)


def plane_wave_transmission(energy: float, v0: float, a: float) -> float:
    """Transmission of a plane wave of energy ``energy`` through a square barrier."""
    if energy <= 0:
        raise ValidationError("energy must be positive")
    if v0 == 0:
        return 1.0
    if energy < v0:
        kappa = math.sqrt(2.0 * (v0 - energy))
        return 1.0 / (1.0 + v0**2 * math.sinh(kappa * a) ** 2 / (4.0 * energy * (v0 - energy)))
    if energy == v0:
        return 1.0 / (1.0 + v0 * a**2 / 2.0)
    q = math.sqrt(2.0 * (energy - v0))
    return 1.0 / (1.0 + v0**2 * math.sin(q * a) ** 2 / (4.0 * energy * (energy - v0)))


@dataclass(frozen=True)
class BarrierSetup:
    packet: PacketParams
    barrier: BarrierSpec
    grid: Grid1D
    t_total: float


def barrier_setup(v0: float, energy: float, a: float, *, spread: float = 0.05, n_points: int = 4096,
                  half_width: Optional[float] = None) -> BarrierSetup:
    """Grid, packet and run time for a barrier experiment.

    ``spread`` is ``sigma_k / k0``. The packet starts 8 sigma left of the
    barrier, where its amplitude on the barrier is ~1e-7 (closer starts
    leave a broadband energy tail in the state), and runs for
    ``18 sigma / k0``, by which time both outgoing pieces sit several of
    their own widths clear of the barrier.
    """
    if energy <= 0 or spread <= 0:
        raise ValidationError("energy and spread must be positive")
    k0 = math.sqrt(2.0 * energy)
    sigma = 1.0 / (2.0 * spread * k0)
    x_c = -8.0 * sigma
    t_total = 18.0 * sigma / k0
    sigma_t = float(free_width(sigma, t_total))
    if half_width is None:
        travel = k0 * t_total + x_c
        half_width = max(-x_c + 6.0 * sigma, travel + 8.0 * sigma_t) + a
    grid = Grid1D(-half_width, half_width, n_points)
    return BarrierSetup(PacketParams(x_c, k0, sigma), BarrierSpec(v0, a, 0.0), grid, t_total)


# Position sampling and the double slit


@dataclass(frozen=True, eq=False)
class PositionSamples:
    counters: np.ndarray
    positions: np.ndarray
    indices: np.ndarray

    def histogram(self, bins):
        counts, edges = np.histogram(self.positions, bins=bins)
        return counts, edges


def sample_positions(psi: WavePacket, shots: int, rng: CounterRng) -> PositionSamples:
    """Draw grid positions with probability ``|psi(x_i)|^2 dx``, one event each."""
    if shots < 1:
        raise ValidationError("shots must be >= 1")
    rng = as_rng(rng)
    weights = psi.density * psi.grid.dx
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    counters, u = rng.take(shots)
    idx = np.minimum(np.searchsorted(cdf, u[:, 0], side="right"), psi.grid.n_points - 1)
    return PositionSamples(counters, psi.grid.x[idx], idx)


def binned_probabilities(psi: WavePacket, edges) -> np.ndarray:
    """Probability mass of the grid density falling in each bin of ``edges``."""
    edges = np.asarray(edges, dtype=float)
    which = np.digitize(psi.grid.x, edges) - 1
    inside = (which >= 0) & (which < len(edges) - 1)
    # np.histogram puts the right edge in the last bin.
    on_last = psi.grid.x == edges[-1]
    which = np.where(on_last, len(edges) - 2, which)
    inside |= on_last
    mass = psi.density * psi.grid.dx
    return np.bincount(which[inside], weights=mass[inside], minlength=len(edges) - 1)


def local_maxima(values: np.ndarray, floor: float = 1e-3) -> np.ndarray:
    """Indices of strict interior local maxima above ``floor * max``."""
    v = np.asarray(values)
    peak = (v[1:-1] > v[:-2]) & (v[1:-1] >= v[2:]) & (v[1:-1] > floor * v.max())
    return np.nonzero(peak)[0] + 1


@dataclass(frozen=True, eq=False)
class DoubleSlitResult:
    """Screen state, the two propagated paths it is built from, and arrivals."""

    screen: WavePacket
    path1: WavePacket
    path2: WavePacket
    arrivals: PositionSamples
    separation: float
    sigma: float
    t_screen: float

    @property
    def x(self) -> np.ndarray:
        return self.screen.grid.x

    @property
    def density(self) -> np.ndarray:
        return self.screen.density

    @property
    def far_field_spacing(self) -> float:
        """Stationary-phase fringe spacing ``2 pi t / d``."""
        return 2.0 * math.pi * self.t_screen / self.separation

    @property
    def exact_spacing(self) -> float:
        """Fringe spacing of two free Gaussians, including the near-field factor."""
        tau = self.t_screen / (2.0 * self.sigma**2)
        return self.far_field_spacing * (1.0 + 1.0 / tau**2)

    def _window(self, window):
        if window is None:
            window = float(free_width(self.sigma, self.t_screen))
        return np.abs(self.x) < window

    def measured_spacing(self, window: Optional[float] = None) -> float:
        """Fringe period from the slope of the relative phase of the two paths.

        The interference term of the density is ``cos`` of this phase, so
        the period is exactly the distance between fringe maxima once the
        envelopes are divided out.
        """
        inside = self._window(window)
        phase = np.unwrap(np.angle(np.conj(self.path1.values[inside]) * self.path2.values[inside]))
        slope = np.polyfit(self.x[inside], phase, 1)[0]
        return float(2.0 * math.pi / abs(slope))

    def peak_spacing(self, window: Optional[float] = None) -> float:
        """Mean distance between density maxima; the envelope biases it low."""
        inside = self._window(window)
        xs = self.x[local_maxima(self.density)]
        xs = xs[inside[np.searchsorted(self.x, xs)]]
        if xs.size < 2:
            return math.nan
        return float(np.mean(np.diff(xs)))

    def n_fringes(self) -> int:
        return int(local_maxima(self.density).size)


def _check_amplitudes(amplitude1, amplitude2, separation):
    a1, a2 = complex(amplitude1), complex(amplitude2)
    total = abs(a1) ** 2 + abs(a2) ** 2
    if abs(total - 1.0) > 1e-10:
        raise ValidationError(f"|a1|^2 + |a2|^2 = {total!r}, expected 1")
    if separation <= 0:
        raise ValidationError("slit separation must be positive")
    return a1, a2


def _superpose(a1, a2, psi1: WavePacket, psi2: WavePacket) -> WavePacket:
    return WavePacket(_normalised(a1 * psi1.values + a2 * psi2.values, psi1.grid.dx), psi1.grid)


def two_path_state(grid: Grid1D, amplitude1: complex, amplitude2: complex, separation: float, sigma: float) -> WavePacket:
    """Coherent sum of Gaussians centred at ``-d/2`` and ``+d/2``."""
    a1, a2 = _check_amplitudes(amplitude1, amplitude2, separation)
    left = gaussian_packet(grid, -0.5 * separation, 0.0, sigma)
    right = gaussian_packet(grid, 0.5 * separation, 0.0, sigma)
    return _superpose(a1, a2, left, right)


def double_slit(amplitude1: complex, amplitude2: complex, separation: float, sigma: float, t_screen: float,
                shots: int, rng: CounterRng, grid: Optional[Grid1D] = None) -> DoubleSlitResult:
    """Propagate a two-path state freely and record ``shots`` single arrivals.

    Each path is propagated on its own and the screen state is their
    superposition, which by linearity equals propagating the sum. The
    default grid spans ten screen-time widths beyond the outer source.
    """
    a1, a2 = _check_amplitudes(amplitude1, amplitude2, separation)
    if grid is None:
        reach = 0.5 * separation + 10.0 * float(free_width(sigma, t_screen))
        grid = Grid1D(-reach, reach, 4096)
    path1 = propagate(gaussian_packet(grid, -0.5 * separation, 0.0, sigma), None, t_screen)
    path2 = propagate(gaussian_packet(grid, 0.5 * separation, 0.0, sigma), None, t_screen)
    screen = _superpose(a1, a2, path1, path2)
    arrivals = sample_positions(screen, shots, rng)
    return DoubleSlitResult(screen, path1, path2, arrivals, separation, sigma, t_screen)


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    pvalue: float
    dof: int


def arrival_chisquare(psi: WavePacket, samples: PositionSamples, edges, min_expected: float = 5.0) -> ChiSquareResult:
    """Pearson test of sampled arrivals against the grid density.

    Bins expecting fewer than ``min_expected`` arrivals, plus all mass
    outside ``edges``, are pooled into one extra bin.
    """
    edges = np.asarray(edges, dtype=float)
    shots = samples.positions.size
    counts, _ = samples.histogram(edges)
    expected = binned_probabilities(psi, edges) * shots
    keep = expected >= min_expected
    observed = list(counts[keep])
    predicted = list(expected[keep])
    rest_obs = shots - int(np.sum(counts[keep]))
    rest_exp = shots - float(np.sum(expected[keep]))
    if rest_exp >= min_expected:
        observed.append(rest_obs)
        predicted.append(rest_exp)
    elif rest_obs:
        raise ValidationError(f"{rest_obs} arrivals fall in bins expecting {rest_exp:.3g}")
    observed = np.asarray(observed, dtype=float)
    predicted = np.asarray(predicted)
    predicted *= observed.sum() / predicted.sum()
    stat, p = stats.chisquare(observed, predicted)
    return ChiSquareResult(float(stat), float(p), int(observed.size - 1))
