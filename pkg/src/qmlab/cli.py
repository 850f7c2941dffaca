"""Command-line experiment runner.

    qmlab <experiment> [--config file.json] [--seed N] [--shots N] [--out path] [--param key=value ...]
    qmlab list

Each run writes a CSV and a JSON sidecar next to it (same stem, ``.json``)
holding the resolved configuration, library version, summary results and
wall-clock duration. For a fixed configuration and seed the CSV is
byte-identical across runs.

Exit codes: 0 ok, 2 usage, 3 configuration, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .born import MomentSystem, empirical_vs_born, moment_system_for, reconstruct_frequencies
from .entangle import (
    MERMIN_SITES,
    DetectorSetting,
    chsh_sweep,
    ghz_incompatibility_demo,
    ghz_runs,
    hv_chsh,
    hv_correlation_analytic,
    hv_outcomes,
    optimal_chsh_settings,
    sampled_spin_correlation,
    sigma_correlation,
    spin_correlation,
)
from .errors import LabError, ValidationError
from .io import csv_text
from .measure import MetastableSpec, decohere, sample_decay_times
from .observables import make_spin, projector_frequency, random_observable
from .rng import CounterRng
from .states import expectation, purity, random_state, to_density
from .wavepacket import (
    arrival_chisquare,
    barrier_setup,
    binned_probabilities,
    double_slit,
    free_width,
    plane_wave_transmission,
    scatter_barrier,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_NUMERICAL = 4


class ConfigError(Exception):
    """Configuration could not be parsed or validated."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int
    shots: int
    params: dict
    output_path: Path

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.shots < 1:
            raise ConfigError("shots must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def rng(self, tag: str = "") -> CounterRng:
        base = CounterRng(self.seed)
        return base.split(tag) if tag else base

    def resolved(self) -> dict:
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "shots": self.shots,
            "params": dict(self.params),
            "output_path": str(self.output_path),
        }


@dataclass
class ExperimentOutput:
    header: list
    rows: list
    results: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Experiment:
    tag: str
    summary: str
    topic: str
    defaults: dict
    shots: int
    run: Callable[[ExperimentConfig], ExperimentOutput]


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from exc


def _angles(text: str, standard: np.ndarray) -> np.ndarray:
    if str(text) == "standard":
        return standard
    return np.deg2rad(_floats(text))


# Experiments


def run_spin_frequencies(cfg: ExperimentConfig) -> ExperimentOutput:
    p = cfg.params
    spin = make_spin(p["j"])
    axes = {"x": spin.jx, "y": spin.jy, "z": spin.jz}
    if p["axis"] not in axes:
        raise ConfigError(f"axis must be one of x, y, z, got {p['axis']!r}")
    obs = axes[p["axis"]]
    psi = spin.state(spin.j if p["state"] == "highest-weight" else p["state"])
    order = obs.n_outcomes
    table = reconstruct_frequencies(moment_system_for(psi, obs, p["convention"], order=order))
    comparison = empirical_vs_born(psi, obs, cfg.shots, cfg.rng())
    rows = [
        (obs.spectrum[n], projector_frequency(psi, obs, n), table.frequencies[n], comparison.empirical[n], comparison.stderr[n])
        for n in range(obs.n_outcomes)
    ]
    results = {
        "condition": table.condition,
        "max_projector_vs_moments": float(np.max(np.abs(table.frequencies - [r[1] for r in rows]))),
        "max_abs_zscore": float(np.max(np.abs(comparison.zscores))),
    }
    return ExperimentOutput(["outcome", "projector", "reconstructed", "empirical", "stderr"], rows, results)


def run_born_reconstruct(cfg: ExperimentConfig) -> ExperimentOutput:
    p = cfg.params
    system = MomentSystem(_floats(p["nodes"]), _floats(p["moments"]), p["convention"])
    table = reconstruct_frequencies(system)
    rows = list(zip(table.outcomes, table.frequencies))
    results = {"condition": table.condition, "consistency": table.consistency, "convention": system.convention}
    return ExperimentOutput(["outcome", "frequency"], rows, results)


def run_decoherence(cfg: ExperimentConfig) -> ExperimentOutput:
    dim = int(cfg.params["dim"])
    if dim < 2:
        raise ConfigError("dim must be >= 2")
    psi = random_state(dim, cfg.rng("state"))
    obs = random_observable(dim, cfg.rng("observable"), "F")
    rho = to_density(psi)
    after = decohere(rho, obs)
    born = np.abs(obs.eigen.eigenvectors.conj().T @ psi.amplitudes) ** 2
    pointer_f = np.diag(obs.eigen.eigenvalues)
    rows = [(n, obs.eigen.eigenvalues[n], after.rho[n, n].real, born[n]) for n in range(dim)]
    results = {
        "purity_before": purity(rho),
        "purity_after": purity(after),
        "sum_c4": float(np.sum(born**2)),
        "mean_before": expectation(rho, obs.matrix),
        "mean_after": expectation(after, pointer_f),
        "max_offdiagonal_after": float(np.max(np.abs(after.rho - np.diag(np.diag(after.rho))))),
    }
    return ExperimentOutput(["index", "eigenvalue", "population", "born_weight"], rows, results)


def run_epr_correlation(cfg: ExperimentConfig) -> ExperimentOutput:
    n = int(cfg.params["n_settings"])
    if n < 1:
        raise ConfigError("n_settings must be >= 1")
    _, u = cfg.rng("settings").take(n, width=4)
    shots_rng = cfg.rng("shots")
    rows = []
    worst_z = 0.0
    for i in range(n):
        a = DetectorSetting.random(u[i, 0], u[i, 1])
        b = DetectorSetting.random(u[i, 2], u[i, 3])
        est = sampled_spin_correlation(a, b, cfg.shots, shots_rng)
        formula = -0.25 * float(a.direction @ b.direction)
        if est.stderr > 0:
            worst_z = max(worst_z, abs(est.value - formula) / est.stderr)
        rows.append((i, *a.direction, *b.direction, spin_correlation(a, b), formula, est.value, est.stderr))
    header = ["index", "ax", "ay", "az", "bx", "by", "bz", "analytic", "formula", "sampled", "stderr"]
    return ExperimentOutput(header, rows, {"max_abs_zscore": worst_z})


def run_chsh_sweep(cfg: ExperimentConfig) -> ExperimentOutput:
    thetas = _angles(cfg.params["angles"], np.deg2rad(np.arange(0.0, 91.0, 5.0)))
    sweep = chsh_sweep(thetas, cfg.shots, cfg.rng())
    header = ["theta_deg", "theta", "E_qm", "E_hv", "S_qm", "S_hv", "S_hv_stderr"]
    rows = [(np.rad2deg(r["theta"]), r["theta"], r["E_qm"], r["E_hv"], r["S_qm"], r["S_hv"], r["S_hv_stderr"]) for r in sweep]
    results = {
        "max_abs_S_qm": max(abs(r["S_qm"]) for r in sweep),
        "max_abs_S_hv": max(abs(r["S_hv"]) for r in sweep),
    }
    return ExperimentOutput(header, rows, results)


def run_hv_baseline(cfg: ExperimentConfig) -> ExperimentOutput:
    thetas = _angles(cfg.params["angles"], np.deg2rad(np.arange(0.0, 181.0, 15.0)))
    rng = cfg.rng()
    a = DetectorSetting.in_plane(0.0)
    rows = []
    for theta in thetas:
        b = DetectorSetting.in_plane(float(theta))
        _, out_a, out_b = hv_outcomes(a, b, cfg.shots, rng)
        prod = (out_a * out_b).astype(float)
        mean = float(prod.mean())
        stderr = math.sqrt(max(1.0 - mean * mean, 0.0) / cfg.shots)
        rows.append((np.rad2deg(theta), theta, mean, stderr, hv_correlation_analytic(a, b), sigma_correlation(a, b)))
    chsh = hv_chsh(optimal_chsh_settings(), cfg.shots, rng)
    results = {"S_hv_optimal": chsh.value, "S_hv_optimal_stderr": chsh.stderr}
    return ExperimentOutput(["theta_deg", "theta", "E_hv", "stderr", "E_hv_analytic", "E_qm"], rows, results)


def run_ghz_mermin(cfg: ExperimentConfig) -> ExperimentOutput:
    rng = cfg.rng()
    rows = []
    violations = 0
    for tag in MERMIN_SITES:
        for run in ghz_runs(tag, cfg.shots, rng):
            violations += not run.satisfies_constraint
            rows.append((run.event_counter, run.which, run.m1, run.m2, run.m3, run.product))
    report = ghz_incompatibility_demo(cfg.rng("demo"))
    results = {
        "constraint_violations": violations,
        "eigenvalues": report.eigenvalues,
        "max_eigen_defect": max(report.eigen_defects.values()),
        "max_commutator_norm": max(report.commutator_norms.values()),
        "site_commutator_norm": report.site_commutator_norm,
        "cross_run_rejected": report.cross_run_rejected,
        "classical_solutions": len(report.classical_solutions),
        "assignments_checked": report.assignments_checked,
    }
    return ExperimentOutput(["event_counter", "which", "m1", "m2", "m3", "product"], rows, results)


def run_barrier(cfg: ExperimentConfig) -> ExperimentOutput:
    p = cfg.params
    setup = barrier_setup(float(p["v0"]), float(p["energy"]), float(p["a"]), spread=float(p["spread"]),
                          n_points=int(p["n_points"]))
    res = scatter_barrier(setup.packet, setup.barrier, setup.grid, setup.t_total)
    d_plane = plane_wave_transmission(float(p["energy"]), float(p["v0"]), float(p["a"]))
    header = ["v0", "energy", "a", "d", "r", "d_plus_r", "overlap", "d_plane_wave"]
    rows = [(float(p["v0"]), float(p["energy"]), float(p["a"]), res.d, res.r, res.d + res.r, res.overlap, d_plane)]
    results = {"t_total": res.t_total, "clearance_mass": res.clearance_mass, "dx": setup.grid.dx}
    return ExperimentOutput(header, rows, results)


def run_double_slit(cfg: ExperimentConfig) -> ExperimentOutput:
    p = cfg.params
    a1 = float(p["amplitude1"])
    a2 = float(p["amplitude2"]) * np.exp(1j * float(p["phase"]))
    sep, sigma, t = float(p["separation"]), float(p["sigma"]), float(p["t_screen"])
    res = double_slit(a1, a2, sep, sigma, t, cfg.shots, cfg.rng())
    half = 0.5 * sep + 4.0 * float(free_width(sigma, t))
    edges = np.linspace(-half, half, int(p["bins"]) + 1)
    counts, _ = res.arrivals.histogram(edges)
    mass = binned_probabilities(res.screen, edges)
    rows = [(edges[i], edges[i + 1], mass[i], mass[i] * cfg.shots, counts[i]) for i in range(len(counts))]
    chi = arrival_chisquare(res.screen, res.arrivals, edges)
    results = {
        "chi2": chi.statistic,
        "chi2_pvalue": chi.pvalue,
        "chi2_dof": chi.dof,
        "fringe_spacing": res.measured_spacing() if abs(a2) > 0 and a1 != 0 else None,
        "fringe_spacing_exact": res.exact_spacing,
        "fringe_spacing_far_field": res.far_field_spacing,
        "density_maxima": res.n_fringes(),
    }
    return ExperimentOutput(["x_left", "x_right", "probability", "expected", "counts"], rows, results)


def run_decay_times(cfg: ExperimentConfig) -> ExperimentOutput:
    spec = MetastableSpec(float(cfg.params["gamma"]))
    counters, times = sample_decay_times(spec, cfg.shots, cfg.rng())
    survival = float(np.mean(times > spec.lifetime))
    results = {
        "mean": float(times.mean()),
        "lifetime": spec.lifetime,
        "mean_stderr": float(spec.lifetime / math.sqrt(cfg.shots)),
        "survival_past_lifetime": survival,
        "survival_expected": math.exp(-1.0),
    }
    return ExperimentOutput(["event_counter", "decay_time"], list(zip(counters, times)), results)


EXPERIMENTS = {
    e.tag: e
    for e in [
        Experiment("spin-frequencies", "spin-j outcome frequencies: projectors, moments and sampling",
                   "relative frequencies of spin components", {"j": "3/2", "axis": "x", "state": "highest-weight",
                                                               "convention": "classical"}, 100000, run_spin_frequencies),
        Experiment("born-reconstruct", "frequencies from eigenvalues and moments <F^N>",
                   "moments to frequencies (Vandermonde)", {"nodes": "-1.5,-0.5,0.5,1.5",
                                                            "moments": "0,0.75,0,1.3125", "convention": "moments"},
                   1, run_born_reconstruct),
        Experiment("decoherence", "coherences removed in the pointer basis of a random observable",
                   "reduced density matrix after measurement", {"dim": 4}, 1, run_decoherence),
        Experiment("epr-correlation", "singlet spin correlation at random detector settings",
                   "EPR pair correlations", {"n_settings": 10}, 100000, run_epr_correlation),
        Experiment("chsh-sweep", "CHSH value versus angle, quantum and hidden-variable",
                   "Bell/CHSH inequality", {"angles": "standard"}, 100000, run_chsh_sweep),
        Experiment("hv-baseline", "shared-vector hidden-variable correlations",
                   "local hidden-variable contrast", {"angles": "standard"}, 100000, run_hv_baseline),
        Experiment("ghz-mermin", "GHZ triple measurements for the four Mermin operators",
                   "GHZ state and Mermin operators", {}, 1000, run_ghz_mermin),
        Experiment("barrier", "Gaussian packet on a square barrier: transmission and reflection",
                   "wave-packet barrier scattering", {"v0": 2.0, "energy": 1.0, "a": 1.0, "spread": 0.05,
                                                      "n_points": 4096}, 1, run_barrier),
        Experiment("double-slit", "two-path interference built up from single arrivals",
                   "two-slit arrival statistics", {"amplitude1": math.sqrt(0.5), "amplitude2": math.sqrt(0.5),
                                                   "phase": 0.0, "separation": 20.0, "sigma": 1.0,
                                                   "t_screen": 20.0, "bins": 120}, 70000, run_double_slit),
        Experiment("decay-times", "exponential decay times of a metastable level",
                   "metastable states and lifetimes", {"gamma": 1.0}, 100000, run_decay_times),
    ]
}


def list_experiments() -> list[tuple[str, str, str]]:
    return [(e.tag, e.summary, e.topic) for e in EXPERIMENTS.values()]


# Configuration


def _coerce(key: str, value, default):
    if isinstance(default, bool):
        raise ConfigError(f"unsupported boolean parameter {key!r}")
    try:
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if isinstance(default, float):
            return float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"parameter {key!r} expects {type(default).__name__}, got {value!r}") from exc
    return str(value)


def _load_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data


def _parse_int(name: str, value) -> int:
    try:
        if isinstance(value, float):
            if not value.is_integer():
                raise ValueError
            return int(value)
        return int(str(value).replace("_", ""))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be an integer, got {value!r}") from exc


def build_config(tag: str, config_file=None, seed=None, shots=None, out=None, overrides=()) -> ExperimentConfig:
    """Merge defaults, the config file and command-line flags (flags win)."""
    if tag not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {tag!r}")
    spec = EXPERIMENTS[tag]
    data = _load_config_file(config_file) if config_file else {}
    data = dict(data)
    named = data.pop("experiment", tag)
    if named != tag:
        raise ConfigError(f"config is for {named!r}, not {tag!r}")

    file_params = dict(data.pop("params", {}) or {})
    file_seed = data.pop("seed", 0)
    file_shots = data.pop("shots", spec.shots)
    file_out = data.pop("output_path", data.pop("out", None))
    file_params.update(data)

    raw = dict(file_params)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        raw[key.strip()] = value.strip()

    unknown = sorted(set(raw) - set(spec.defaults))
    if unknown:
        raise ConfigError(f"unknown parameter(s) for {tag}: {', '.join(unknown)}")
    params = dict(spec.defaults)
    for key, value in raw.items():
        params[key] = _coerce(key, value, spec.defaults[key])

    seed = _parse_int("seed", file_seed if seed is None else seed)
    shots = _parse_int("shots", file_shots if shots is None else shots)
    out = Path(out or file_out or f"{tag}.csv")
    return ExperimentConfig(tag, seed, shots, params, out)


def sidecar_path(csv_path: Path) -> Path:
    return Path(csv_path).with_suffix(".json")


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    return value


def run(cfg: ExperimentConfig) -> ExperimentOutput:
    """Run one experiment and write its CSV and JSON sidecar."""
    start = time.perf_counter()
    try:
        output = EXPERIMENTS[cfg.experiment].run(cfg)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    duration = time.perf_counter() - start

    cfg.output_path.parent.mkdir(parents=True, exist_ok=True)
    with open(cfg.output_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(output.header, output.rows))
    sidecar = {
        "config": cfg.resolved(),
        "version": __version__,
        "duration_s": duration,
        "rows": len(output.rows),
        "results": output.results,
    }
    with open(sidecar_path(cfg.output_path), "w", encoding="utf-8", newline="") as fh:
        json.dump(_jsonable(sidecar), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return output


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmlab", description="Run a quantum measurement statistics experiment.")
    parser.add_argument("experiment", help="experiment tag (see 'qmlab list')")
    parser.add_argument("--config", help="flat JSON config file")
    parser.add_argument("--seed", help="64-bit integer seed")
    parser.add_argument("--shots", help="number of shots / events")
    parser.add_argument("--out", help="CSV output path")
    parser.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                        help="experiment parameter override (repeatable)")
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "list":
        if len(argv) > 1:
            print("usage: qmlab list", file=sys.stderr)
            return EXIT_USAGE
        for tag, summary, topic in list_experiments():
            print(f"{tag:18s} {summary}  [{topic}]")
        return EXIT_OK

    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.experiment not in EXPERIMENTS:
        print(f"qmlab: unknown experiment {args.experiment!r}; try 'qmlab list'", file=sys.stderr)
        return EXIT_USAGE

    try:
        cfg = build_config(args.experiment, args.config, args.seed, args.shots, args.out, args.param)
        output = run(cfg)
    except ConfigError as exc:
        print(f"qmlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LabError as exc:
        print(f"qmlab: numerical error in {args.experiment}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"wrote {len(output.rows)} rows to {cfg.output_path} (+ {sidecar_path(cfg.output_path).name})")
    return EXIT_OK
