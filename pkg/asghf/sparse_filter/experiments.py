"""
Experiment harness: Problem 1 quadrature comparison and the Monte Carlo
filter studies (sinusoids, tracking).

Every run gets its own RNG stream keyed by (seed, run_index); results are
collected in run-index order, so CSV outputs do not depend on the number
of worker threads.
"""
from __future__ import annotations
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple
import csv
import json
import logging
import os
import statistics

import numpy as np

from asghf.sparse_filter.adaptive_quadrature import AdaptConfig, adapt
from asghf.sparse_filter.benchmark_models import (
    CTParams, SinusoidParams, ct_model, load_scenario, problem1_exact, problem1_integrand,
    run_rng, simulate_truth, sinusoid_model,
)
from asghf.sparse_filter.errors import (
    ConfigError, FailureThresholdError, FilterError, InvalidArgumentError, NumericalEvaluationError,
)
from asghf.sparse_filter.gaussian_filtering import (
    AdaptiveSource, FilterGrids, FixedGridSource, FullTensorSource, GaussianBelief,
    GaussianFilter, GridSource, SmolyakSource, StateSpaceModel,
)
from asghf.sparse_filter.monitor import CLOCKS, PerformanceMonitor
from asghf.sparse_filter.tensor_smolyak import apply_grid, full_tensor_grid, smolyak_grid
from asghf.sparse_filter.utils import config_fingerprint, format_float

logger = logging.getLogger(__name__)

FILTER_KINDS = ("ghf", "sghf", "asghf")
FAILURE_THRESHOLD = 0.10
STEADY_STATE_STEPS = 100
DEFAULT_RUNS = 50
# час прогону: CPU-час робочого потоку
RUN_CLOCK = "thread"


# -----------------------------------------------------------
# Configuration
# -----------------------------------------------------------

@dataclass(frozen=True)
class FilterSpec:
    kind: str = "ghf"
    points: int = 3
    level: int = 3
    process: AdaptConfig = field(default_factory=AdaptConfig)
    measurement: AdaptConfig = field(default_factory=AdaptConfig)
    readapt_every: Optional[int] = None

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise ConfigError(f"Unknown filter {self.kind!r}; expected one of {FILTER_KINDS}")
        if self.points < 1 or self.level < 1:
            raise ConfigError("points and level must be >= 1")

    @property
    def label(self) -> str:
        if self.kind == "ghf":
            return f"GHF_{self.points}"
        if self.kind == "sghf":
            return f"SGHF_{self.level}"
        return "ASGHF"

    def source(self) -> GridSource:
        if self.kind == "ghf":
            return FullTensorSource(points=self.points)
        if self.kind == "sghf":
            return SmolyakSource(level=self.level)
        return AdaptiveSource(self.process, self.measurement, self.readapt_every)

    def to_dict(self) -> dict:
        data: Dict[str, Any] = {"kind": self.kind, "label": self.label}
        if self.kind == "ghf":
            data["points"] = self.points
        elif self.kind == "sghf":
            data["level"] = self.level
        else:
            data["process"] = self.process.to_dict()
            data["measurement"] = self.measurement.to_dict()
            data["readapt_every"] = self.readapt_every
        return data


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = "sinusoids"
    scenario: int = 1
    runs: int = DEFAULT_RUNS
    steps: Optional[int] = None
    seed: int = 0
    omega_deg: float = 3.0
    filters: Tuple[FilterSpec, ...] = ()
    out_dir: Optional[str] = None
    threads: Optional[int] = None
    clock: str = RUN_CLOCK

    def __post_init__(self):
        if self.problem not in ("sinusoids", "tracking"):
            raise ConfigError(f"Unknown problem {self.problem!r}")
        if self.scenario not in (1, 2):
            raise ConfigError(f"Scenario must be 1 or 2, got {self.scenario}")
        if self.runs < 1:
            raise ConfigError(f"runs must be >= 1, got {self.runs}")
        if self.steps is not None and self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.threads is not None and self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.clock not in CLOCKS:
            raise ConfigError(f"Unknown clock {self.clock!r}; expected one of {tuple(CLOCKS)}")
        labels = [spec.label for spec in self.filters]
        if len(labels) != len(set(labels)):
            raise ConfigError(f"Duplicate filter labels: {labels}")

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "scenario": self.scenario,
            "runs": self.runs,
            "steps": self.steps,
            "seed": self.seed,
            "omega_deg": self.omega_deg,
            "clock": self.clock,
            "filters": [spec.to_dict() for spec in self.filters],
        }


def resolve_threads(threads: Optional[int] = None) -> int:
    """Explicit value, else ASGHF_THREADS, else min(4, cpu count)."""
    if threads is not None:
        return threads
    raw = os.environ.get("ASGHF_THREADS")
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(f"ASGHF_THREADS must be an integer, got {raw!r}")
        if value < 1:
            raise ConfigError(f"ASGHF_THREADS must be >= 1, got {value}")
        return value
    return min(4, os.cpu_count() or 1)


def adapt_pair(section: Dict[str, Any], psi: Optional[Sequence[float]] = None,
               tol: Optional[Sequence[float]] = None) -> Tuple[AdaptConfig, AdaptConfig]:
    """
    (process, measurement) AdaptConfigs from a scenario "asghf" section.
    psi/tol override it: one value sets both, two values are (process, measurement).
    """
    process = dict(section["process"])
    measurement = dict(section["measurement"])
    for key, values in (("psi", psi), ("tol", tol)):
        if not values:
            continue
        if len(values) > 2:
            raise ConfigError(f"--{key} takes one or two values, got {len(values)}")
        process[key] = float(values[0])
        measurement[key] = float(values[-1])
    try:
        return AdaptConfig(**process), AdaptConfig(**measurement)
    except InvalidArgumentError as e:
        raise ConfigError(str(e)) from e


def default_filters(scenario_data: Dict[str, Any]) -> Tuple[FilterSpec, ...]:
    process, measurement = adapt_pair(scenario_data["asghf"])
    return (
        FilterSpec("ghf", points=3),
        FilterSpec("sghf", level=3),
        FilterSpec("asghf", process=process, measurement=measurement),
    )


# -----------------------------------------------------------
# Metrics
# -----------------------------------------------------------

def compute_err(errors: np.ndarray) -> float:
    """
    √((MSE_1 + ... + MSE_c) / c) at one step, errors of shape (M, c):
    per-component mean over runs, then mean over components.
    """
    errors = np.asarray(errors, dtype=float)
    if errors.ndim == 1:
        errors = errors[:, None]
    return float(np.sqrt(np.mean(errors ** 2)))


def compute_rmse(errors: np.ndarray) -> float:
    """√((1/M) Σ_runs Σ_components e²) at one step, errors of shape (M, c)."""
    errors = np.asarray(errors, dtype=float)
    if errors.ndim == 1:
        errors = errors[:, None]
    return float(np.sqrt(np.mean(np.sum(errors ** 2, axis=1))))


def err_series(errors: np.ndarray) -> np.ndarray:
    """compute_err for every step of an (M, K, c) error stack."""
    return np.sqrt(np.mean(np.asarray(errors, dtype=float) ** 2, axis=(0, 2)))


def rmse_series(errors: np.ndarray) -> np.ndarray:
    """compute_rmse for every step of an (M, K, c) error stack."""
    return np.sqrt(np.mean(np.sum(np.asarray(errors, dtype=float) ** 2, axis=2), axis=0))


def timing_report(durations: Dict[str, Sequence[float]], reference: Optional[str] = None,
                  clock: str = RUN_CLOCK) -> dict:
    """Median run time per filter, normalized to the GHF entry (or the first one)."""
    medians = {label: float(statistics.median(values)) for label, values in durations.items() if values}
    if not medians:
        return {"reference": None, "clock": clock, "median_seconds": {}, "relative": {}}
    if reference is None:
        reference = next((label for label in medians if label.startswith("GHF")), next(iter(medians)))
    if reference not in medians:
        raise ConfigError(f"Reference filter {reference!r} has no timings")
    base = medians[reference]
    relative = {label: (value / base if base > 0 else None) for label, value in medians.items()}
    return {"reference": reference, "clock": clock, "median_seconds": medians, "relative": relative}


# -----------------------------------------------------------
# Output helpers
# -----------------------------------------------------------

def write_series_csv(path: Path, series: Dict[str, np.ndarray]) -> Path:
    """step,<filter>,... with repr() floats; identical input gives identical bytes."""
    labels = list(series)
    length = len(next(iter(series.values()))) if series else 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step"] + labels)
        for k in range(length):
            writer.writerow([k + 1] + [format_float(series[label][k]) for label in labels])
    return path


def write_json(path: Path, data: dict) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return path


# -----------------------------------------------------------
# Problem 1 quadrature comparison
# -----------------------------------------------------------

def _table1_grid(variant: Dict[str, Any], n: int):
    kind = variant["kind"]
    if kind == "gh":
        grid = full_tensor_grid(n, int(variant["points"]))
        return grid, {}
    if kind == "sgh":
        grid = smolyak_grid(n, int(variant["level"]))
        return grid, {}
    if kind == "asgh":
        cfg = AdaptConfig(psi=float(variant["psi"]), tol=float(variant["tol"]),
                          work=variant.get("work", "increment"))
        compiled, _, report = adapt(problem1_integrand, n, cfg)
        return compiled.grid, report.summary()
    raise ConfigError(f"Unknown quadrature variant kind {kind!r}")


def run_table1(n: int = 6, variants: Optional[List[Dict[str, Any]]] = None,
               out_dir: Optional[str] = None) -> dict:
    """
    Problem 1 integral with every variant; each row carries the distinct
    point count, the value, %error against Σ(2i-1)!! and the published
    figures where known.
    """
    scenario = load_scenario("table1")
    if variants is None:
        variants = scenario["variants"]
    exact = problem1_exact(n)

    rows = []
    for variant in variants:
        grid, adaptation = _table1_grid(variant, n)
        value = float(apply_grid(grid, problem1_integrand)[0])
        row = {
            "variant": variant["label"],
            "points": grid.size,
            "value": value,
            "error_pct": 100.0 * abs(value - exact) / exact,
            "published_error_pct": variant.get("published_error_pct"),
            "published_points": variant.get("published_points"),
        }
        if adaptation:
            row["adaptation"] = adaptation
        rows.append(row)
        logger.info("%s: %d points, value %.6f", row["variant"], row["points"], value)

    config = {"problem": "table1", "n": n, "variants": variants}
    report = {
        "config": config,
        "fingerprint": config_fingerprint(config),
        "exact": exact,
        "rows": rows,
    }

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "table1.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["variant", "points", "value", "error_pct", "published_error_pct", "published_points"])
            for row in rows:
                writer.writerow([
                    row["variant"], row["points"], format_float(row["value"]),
                    format_float(row["error_pct"]),
                    "" if row["published_error_pct"] is None else format_float(row["published_error_pct"]),
                    "" if row["published_points"] is None else row["published_points"],
                ])
        write_json(out / "table1.json", report)
    return report


# -----------------------------------------------------------
# Monte Carlo studies
# -----------------------------------------------------------

@dataclass
class Problem:
    """Everything problem-specific the Monte Carlo loop needs."""
    model: StateSpaceModel
    truth_x0: np.ndarray
    nominal_prior: GaussianBelief
    prior_for_run: Callable[[int, int], GaussianBelief]
    metrics: Dict[str, Tuple[List[int], Callable[[np.ndarray], np.ndarray]]]
    params: dict


@dataclass
class RunOutcome:
    run_index: int
    label: str
    estimates: Optional[np.ndarray] = None
    duration: float = 0.0
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass
class ExperimentResult:
    series: Dict[str, Dict[str, np.ndarray]]
    report: dict
    paths: List[Path] = field(default_factory=list)


def sinusoids_problem(params: SinusoidParams) -> Problem:
    prior = params.prior()
    m = params.num_sinusoids
    return Problem(
        model=sinusoid_model(params),
        truth_x0=np.array(params.truth),
        nominal_prior=prior,
        # фіксована початкова оцінка для всіх прогонів
        prior_for_run=lambda seed, run_index: prior,
        metrics={
            "err_freq": (list(range(0, m)), err_series),
            "err_amp": (list(range(m, 2 * m)), err_series),
        },
        params=params.to_dict(),
    )


def tracking_problem(params: CTParams) -> Problem:
    nominal = GaussianBelief(params.x0, params.P0)

    def prior_for_run(seed: int, run_index: int) -> GaussianBelief:
        rng = run_rng(seed, run_index, stream=1)
        mean = rng.multivariate_normal(params.x0, params.P0)
        return GaussianBelief(mean, params.P0)

    return Problem(
        model=ct_model(params),
        truth_x0=params.x0,
        nominal_prior=nominal,
        prior_for_run=prior_for_run,
        metrics={
            "rmse_pos": ([0, 2], rmse_series),
            "rmse_vel": ([1, 3], rmse_series),
        },
        params=params.to_dict(),
    )


def _prepare_grids(spec: FilterSpec, problem: Problem) -> Tuple[GridSource, FilterGrids, float]:
    """Grids shared by every run of one filter, built once at the nominal prior."""
    source = spec.source()
    monitor = PerformanceMonitor()
    monitor.start_snapshot()
    grids = source.build(problem.model, problem.nominal_prior, 1)
    build_time = monitor.stop_snapshot(spec.label)["duration"]
    if spec.kind == "asghf" and spec.readapt_every is not None:
        return source, grids, build_time
    return FixedGridSource(grids.process, grids.measurement), grids, build_time


def _run_single(problem: Problem, spec: FilterSpec, source: GridSource, run_index: int,
                seed: int, measurements: np.ndarray, clock: str = RUN_CLOCK) -> RunOutcome:
    prior = problem.prior_for_run(seed, run_index)
    monitor = PerformanceMonitor(clock=clock)
    monitor.start_snapshot()
    try:
        history = GaussianFilter(problem.model, source).run(measurements, prior)
    except (FilterError, NumericalEvaluationError, InvalidArgumentError, np.linalg.LinAlgError) as e:
        logger.warning("run %d, %s failed: %s", run_index, spec.label, e)
        return RunOutcome(run_index, spec.label, error=f"{type(e).__name__}: {e}")
    duration = monitor.stop_snapshot(spec.label)["duration"]
    estimates = np.stack([belief.mean for belief in history])
    return RunOutcome(run_index, spec.label, estimates=estimates, duration=duration)


def run_monte_carlo(problem: Problem, filters: Sequence[FilterSpec], runs: int, steps: int,
                    seed: int, threads: Optional[int] = None, clock: str = RUN_CLOCK) -> Tuple[np.ndarray, Dict[str, List[RunOutcome]], dict]:
    """
    Simulates `runs` truths and runs every filter on the same measurement
    streams. Returns (truth stack (M, K, n), outcomes per filter in run
    order, per-filter grid info).
    """
    truths = []
    measurements = []
    for run_index in range(runs):
        states, ys = simulate_truth(problem.model, problem.truth_x0, steps, seed, run_index)
        truths.append(states)
        measurements.append(ys)

    workers = resolve_threads(threads)
    outcomes: Dict[str, List[RunOutcome]] = {}
    grid_info: Dict[str, dict] = {}
    for spec in filters:
        source, grids, build_time = _prepare_grids(spec, problem)
        grid_info[spec.label] = {
            "points": grids.point_counts(),
            "build_seconds": build_time,
            "adaptation": {name: report.summary() for name, report in grids.reports.items()},
        }
        logger.info("%s: %d points per step, %d runs on %d threads",
                    spec.label, grids.point_counts()["per_step"], runs, workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            # map() віддає результати в порядку run_index
            outcomes[spec.label] = list(pool.map(
                lambda i: _run_single(problem, spec, source, i, seed, measurements[i], clock),
                range(runs),
            ))
    return np.stack(truths), outcomes, grid_info


def _aggregate(problem: Problem, truths: np.ndarray, outcomes: Dict[str, List[RunOutcome]]):
    series: Dict[str, Dict[str, np.ndarray]] = {name: {} for name in problem.metrics}
    failures: Dict[str, Dict[int, str]] = {}
    for label, results in outcomes.items():
        ok = [r for r in results if not r.failed]
        failures[label] = {r.run_index: r.error for r in results if r.failed}
        if not ok:
            continue
        estimates = np.stack([r.estimates for r in ok])
        errors = truths[[r.run_index for r in ok]] - estimates
        for name, (components, reducer) in problem.metrics.items():
            series[name][label] = reducer(errors[:, :, components])
    return series, failures


def _steady_state(series: Dict[str, Dict[str, np.ndarray]]) -> Dict[str, Dict[str, float]]:
    summary: Dict[str, Dict[str, float]] = {}
    for name, per_filter in series.items():
        for label, values in per_filter.items():
            tail = values[-min(STEADY_STATE_STEPS, len(values)):]
            summary.setdefault(label, {})[name] = float(np.mean(tail))
    return summary


def _run_study(config: ExperimentConfig, problem: Problem, steps: int,
               filters: Tuple[FilterSpec, ...]) -> ExperimentResult:
    truths, outcomes, grid_info = run_monte_carlo(
        problem, filters, config.runs, steps, config.seed, config.threads, config.clock
    )
    series, failures = _aggregate(problem, truths, outcomes)

    durations = {label: [r.duration for r in results if not r.failed]
                 for label, results in outcomes.items()}
    resolved = dict(config.to_dict(), steps=steps,
                    filters=[spec.to_dict() for spec in filters], params=problem.params)
    report = {
        "config": resolved,
        "fingerprint": config_fingerprint(resolved),
        "filters": {
            label: dict(grid_info[label], failed=len(failures[label]), failures=failures[label])
            for label in outcomes
        },
        "steady_state": _steady_state(series),
        "timing": timing_report(durations, clock=config.clock),
    }

    paths: List[Path] = []
    if config.out_dir is not None:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, per_filter in series.items():
            if per_filter:
                paths.append(write_series_csv(out / f"{name}.csv", per_filter))
        paths.append(write_json(out / "timing.json", report["timing"]))
        paths.append(write_json(out / "report.json", report))

    too_many = {label: len(f) for label, f in failures.items()
                if len(f) > FAILURE_THRESHOLD * config.runs}
    if too_many:
        raise FailureThresholdError(
            f"More than {FAILURE_THRESHOLD:.0%} of runs failed: {too_many}", failures=failures
        )
    return ExperimentResult(series=series, report=report, paths=paths)


def run_sinusoids(config: ExperimentConfig) -> ExperimentResult:
    data = load_scenario(f"sinusoids_scenario{config.scenario}")
    params = SinusoidParams.from_dict(data["params"])
    filters = config.filters or default_filters(data)
    steps = config.steps or int(data["steps"])
    return _run_study(config, sinusoids_problem(params), steps, filters)


def run_tracking(config: ExperimentConfig) -> ExperimentResult:
    data = load_scenario(f"tracking_scenario{config.scenario}")
    params = CTParams.from_dict(dict(data["params"], omega_deg=config.omega_deg))
    filters = config.filters or default_filters(data)
    steps = config.steps or int(data["steps"])
    return _run_study(config, tracking_problem(params), steps, filters)
