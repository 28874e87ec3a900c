"""
Configuration-driven sweeps, regression fits and witness crossing search.
"""

import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import linregress

from .estimators import estimate_mes_fidelity, estimate_Tk
from .oracle import criterion_report, exact_mes_fidelity, exact_Tk
from .qcore import (
    CapExceededError,
    Partition,
    QuantumState,
    bell_product_mixture,
    depolarize,
    make_state,
)
from .sampler import run_global_protocol, run_indexed, run_local_protocol, run_mes_fidelity_protocol

logger = logging.getLogger(__name__)

VAR_VS_NU = "var_vs_NU"
VAR_VS_N = "var_vs_n"
VAR_VS_NM = "var_vs_NM"
NOISY_STATE_ESTIMATE = "noisy_state_estimate"
CRITERION_SCAN = "criterion_scan"
FIDELITY_CURVE = "fidelity_curve"
EXPERIMENTS = (VAR_VS_NU, VAR_VS_N, VAR_VS_NM, NOISY_STATE_ESTIMATE, CRITERION_SCAN, FIDELITY_CURVE)

WITNESSES = ("ppt", "entropy", "p3ppt", "t2")

STAT_COLUMNS = [
    "experiment",
    "grid_value",
    "n_qubits",
    "n_u",
    "n_m",
    "replications",
    "mean",
    "variance",
    "std_error_mean",
    "oracle",
    "abs_error",
    "mean_abs_error",
    "status",
    "message",
]
CRITERION_COLUMNS = ["experiment", "grid_value", *WITNESSES, "status", "message"]

STATE_SPEC = re.compile(r"^(?P<kind>[a-z_]+?)(?P<n>\d*)$")
ZERO_TOL = 1e-12


class ConfigError(ValueError):
    """Invalid sweep configuration or state spec"""


class RegressionError(ValueError):
    """Least-squares fit impossible on the supplied points"""


def parse_state_spec(spec: str) -> Tuple[str, Optional[int]]:
    """Split ``"ghz3"`` into ``("ghz", 3)``; the qubit count is optional"""
    match = STATE_SPEC.match(spec.strip().lower())
    if not match:
        raise ConfigError(f"Cannot parse state spec {spec!r}; expected e.g. ghz3, bell, w6")
    n = match.group("n")
    return match.group("kind"), int(n) if n else None


def build_state(kind: str, n: Optional[int], noise: float = 0.0, seed: int = 0) -> QuantumState:
    """Named state of n qubits, depolarized with strength ``noise``"""
    if n is None:
        if kind != "bell":
            raise ConfigError(f"State kind {kind!r} needs a qubit count, e.g. {kind}3")
        n = 2
    if kind == "mixed":
        state = depolarize(make_state("zero", n), 1.0).with_label(f"mixed{n}")
    else:
        state = make_state(kind, n, seed)
    if noise:
        state = depolarize(state, noise)
    return state


def state_from_spec(spec: str, noise: float = 0.0, seed: int = 0) -> QuantumState:
    kind, n = parse_state_spec(spec)
    return build_state(kind, n, noise, seed)


class RegressionResult(NamedTuple):
    slope: float
    intercept: float
    residual_rms: float
    grid: Tuple[float, ...]


def regress(xs: Sequence[float], ys: Sequence[float]) -> RegressionResult:
    """Ordinary least squares of ys on xs; callers choose any log transform"""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise RegressionError(f"xs and ys must be 1-D of equal length, got {x.shape}, {y.shape}")
    if len(x) < 2:
        raise RegressionError(f"Need at least two points, got {len(x)}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise RegressionError("Non-finite values in regression input")
    if np.ptp(x) == 0:
        raise RegressionError("Degenerate x-grid: every x is equal")
    fit = linregress(x, y)
    residuals = y - (fit.slope * x + fit.intercept)
    return RegressionResult(
        float(fit.slope),
        float(fit.intercept),
        float(np.sqrt(np.mean(residuals**2))),
        tuple(float(v) for v in x),
    )


def find_crossing(
    witness: Callable[[float], float],
    lo: float = 0.0,
    hi: float = 1.0,
    step: float = 0.01,
    tol: float = 1e-3,
) -> float:
    """First sign change of ``witness`` on [lo, hi], refined by bisection; hi if none"""
    points = np.linspace(lo, hi, int(round((hi - lo) / step)) + 1)
    prev_x, prev_v = float(points[0]), witness(float(points[0]))
    for x in points[1:]:
        x = float(x)
        v = witness(x)
        if abs(v) <= ZERO_TOL:
            return x
        if prev_v * v < 0:
            a, b, fa = prev_x, x, prev_v
            while b - a > tol:
                mid = 0.5 * (a + b)
                fm = witness(mid)
                if fm == 0:
                    return mid
                if fa * fm < 0:
                    b = mid
                else:
                    a, fa = mid, fm
            return 0.5 * (a + b)
        prev_x, prev_v = x, v
    return float(hi)


def mixture_witness(name: str) -> Callable[[float], float]:
    """Witness ``name`` as a function of p along (1-p)|Psi+><Psi+| + p|0+><0+|"""
    if name not in WITNESSES:
        raise ConfigError(f"Unknown witness {name!r}; choose from {', '.join(WITNESSES)}")

    def witness(p: float) -> float:
        return float(getattr(criterion_report(bell_product_mixture(p)), name))

    return witness


@dataclass
class SweepConfig:
    experiment: str
    grid: List[float] = field(default_factory=list)
    state: str = "ghz"
    n_qubits: int = 3
    noise: float = 0.0
    parties: Optional[int] = None
    partition: Optional[str] = None
    n_u: int = 100
    n_m: int = 10
    replications: int = 50
    seed: int = 0
    output: Optional[str] = None
    threads: int = 1
    protocol: str = "local"
    method: str = "chain"

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(
                f"Unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}"
            )
        if not self.grid:
            raise ConfigError("grid must be nonempty")
        if self.replications < 1:
            raise ConfigError(f"replications must be at least 1, got {self.replications}")
        for name in ("n_qubits", "n_u", "n_m", "threads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.noise <= 1.0:
            raise ConfigError(f"noise must lie in [0, 1], got {self.noise}")
        if self.protocol not in ("local", "global"):
            raise ConfigError(f"protocol must be local or global, got {self.protocol!r}")
        if self.experiment in (CRITERION_SCAN, FIDELITY_CURVE):
            if any(not 0.0 <= g <= 1.0 for g in self.grid):
                raise ConfigError("Mixing-weight grids must lie in [0, 1]")
        elif any(g < 1 for g in self.grid):
            raise ConfigError("Count grids must hold positive values")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SweepConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")
        try:
            config = cls(**data)
        except TypeError as e:
            raise ConfigError(f"Invalid config: {e}") from e
        config.validate()
        return config

    @classmethod
    def from_file(cls, path: str) -> "SweepConfig":
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except (FileNotFoundError, IOError) as e:
            message = f"Error reading config {path}: {e}"
            logger.error(message)
            raise ConfigError(message) from e
        except json.JSONDecodeError as e:
            message = f"Error parsing JSON in config {path}: {e}"
            logger.error(message)
            raise ConfigError(message) from e
        if not isinstance(data, dict):
            raise ConfigError(f"Config {path} must hold a JSON object")
        return cls.from_dict(data)

    @classmethod
    def preset(cls, experiment: str) -> "SweepConfig":
        """Default configuration for each experiment at desk scale"""
        presets: Dict[str, Dict[str, Any]] = {
            VAR_VS_NU: {"grid": [32, 64, 128, 256, 512, 1024], "n_m": 10},
            VAR_VS_N: {"grid": [6, 9, 12, 15], "parties": 3, "n_u": 100, "n_m": 10},
            VAR_VS_NM: {"grid": [10, 20, 50, 100], "n_u": 100},
            NOISY_STATE_ESTIMATE: {
                "state": "w",
                "n_qubits": 6,
                "noise": 0.2,
                "parties": 3,
                "grid": [10, 20, 50],
                "replications": 20,
            },
            CRITERION_SCAN: {"grid": [round(0.05 * i, 2) for i in range(21)], "replications": 1},
            FIDELITY_CURVE: {
                "state": "mes",
                "n_qubits": 2,
                "grid": [0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
                "n_u": 200,
                "n_m": 50,
                "replications": 10,
            },
        }
        if experiment not in presets:
            raise ConfigError(f"No preset for experiment {experiment!r}")
        return cls.from_dict({"experiment": experiment, **presets[experiment]})

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def resolve_partition(self, n: int) -> Partition:
        if self.partition:
            partition = Partition.parse(self.partition)
        else:
            partition = Partition.equal(n, self.parties or min(n, 3))
        partition.check_within(n)
        return partition


class SweepResult(NamedTuple):
    table: pd.DataFrame
    summary: Dict[str, Any]


def _error_row(config: SweepConfig, grid_value: float, error: Exception) -> Dict[str, Any]:
    logger.warning(f"{config.experiment} grid point {grid_value:g} failed: {error}")
    columns = CRITERION_COLUMNS if config.experiment == CRITERION_SCAN else STAT_COLUMNS
    row: Dict[str, Any] = {name: math.nan for name in columns}
    row.update(experiment=config.experiment, grid_value=grid_value, status="error")
    row["message"] = str(error)
    return row


def _stat_row(
    config: SweepConfig,
    grid_value: float,
    n_qubits: int,
    n_u: int,
    n_m: int,
    estimates: Sequence[float],
    oracle: float,
) -> Dict[str, Any]:
    values = np.asarray(estimates, dtype=float)
    mean = math.fsum(values) / len(values)
    variance = float(np.var(values, ddof=1)) if len(values) > 1 else math.nan
    return {
        "experiment": config.experiment,
        "grid_value": grid_value,
        "n_qubits": n_qubits,
        "n_u": n_u,
        "n_m": n_m,
        "replications": len(values),
        "mean": mean,
        "variance": variance,
        "std_error_mean": math.sqrt(variance / len(values)) if len(values) > 1 else math.nan,
        "oracle": oracle,
        "abs_error": abs(mean - oracle),
        "mean_abs_error": float(np.mean(np.abs(values - oracle))),
        "status": "ok",
        "message": "",
    }


def _tk_point(
    config: SweepConfig,
    state: QuantumState,
    n_u: int,
    n_m: int,
    seeds: Sequence[np.random.SeedSequence],
) -> Tuple[List[float], float]:
    partition = config.resolve_partition(state.n_qubits)

    def replicate(r: int) -> float:
        if config.protocol == "global":
            dataset = run_global_protocol(state, partition, n_u, n_m, seeds[r], threads=1)
        else:
            dataset = run_local_protocol(state, n_u, n_m, seeds[r], threads=1)
        return estimate_Tk(dataset, partition, method=config.method, threads=1).value

    estimates = run_indexed(replicate, config.replications, config.threads)
    return estimates, exact_Tk(state, partition)


def _fidelity_point(
    config: SweepConfig, state: QuantumState, seeds: Sequence[np.random.SeedSequence]
) -> Tuple[List[float], float]:
    def replicate(r: int) -> float:
        dataset = run_mes_fidelity_protocol(state, config.n_u, config.n_m, seeds[r], threads=1)
        return estimate_mes_fidelity(dataset).value

    estimates = run_indexed(replicate, config.replications, config.threads)
    return estimates, exact_mes_fidelity(state)


def _grid_row(
    config: SweepConfig, grid_value: float, seeds: Sequence[np.random.SeedSequence]
) -> Dict[str, Any]:
    experiment = config.experiment
    if experiment == CRITERION_SCAN:
        report = criterion_report(bell_product_mixture(grid_value))
        row: Dict[str, Any] = {"experiment": experiment, "grid_value": grid_value}
        row.update(report._asdict())
        row.update(status="ok", message="")
        return row

    n, n_u, n_m = config.n_qubits, config.n_u, config.n_m
    if experiment == VAR_VS_N:
        n = int(grid_value)
    elif experiment == VAR_VS_NU:
        n_u = int(grid_value)
    elif experiment in (VAR_VS_NM, NOISY_STATE_ESTIMATE):
        n_m = int(grid_value)

    if experiment == FIDELITY_CURVE:
        state = depolarize(build_state(config.state, n, 0.0, config.seed), grid_value)
        estimates, oracle = _fidelity_point(config, state, seeds)
    else:
        state = build_state(config.state, n, config.noise, config.seed)
        estimates, oracle = _tk_point(config, state, n_u, n_m, seeds)
    return _stat_row(config, grid_value, n, n_u, n_m, estimates, oracle)


def _summarize(config: SweepConfig, table: pd.DataFrame) -> Dict[str, Any]:
    summary: Dict[str, Any] = {"config": config.to_dict()}
    experiment = config.experiment
    if experiment == CRITERION_SCAN:
        summary["crossings"] = {name: find_crossing(mixture_witness(name)) for name in WITNESSES}
        return summary

    ok = table[(table["status"] == "ok")]
    if experiment in (VAR_VS_NU, VAR_VS_NM, VAR_VS_N):
        usable = ok[ok["variance"] > 0]
        xs = usable["grid_value"].astype(float)
        x_label = "n_qubits" if experiment == VAR_VS_N else "log2_grid"
        if experiment != VAR_VS_N:
            xs = np.log2(xs)
        try:
            fit = regress(list(xs), list(np.log2(usable["variance"].astype(float))))
            summary["regression"] = {"x": x_label, "y": "log2_variance", **fit._asdict()}
        except RegressionError as e:
            logger.warning(f"Skipping regression: {e}")
            summary["regression"] = None
    else:
        summary["mean_abs_error"] = {
            str(g): float(v) for g, v in zip(ok["grid_value"], ok["mean_abs_error"])
        }
    return summary


def run_sweep(config: SweepConfig) -> SweepResult:
    """Run every grid point; failures become error rows and the sweep continues"""
    config.validate()
    logger.info(
        f"Sweep {config.experiment}: {len(config.grid)} grid points, "
        f"{config.replications} replications, seed={config.seed}"
    )
    grid_seeds = np.random.SeedSequence(config.seed).spawn(len(config.grid))
    rows = []
    for grid_value, grid_seed in zip(config.grid, grid_seeds):
        seeds = grid_seed.spawn(config.replications)
        try:
            rows.append(_grid_row(config, grid_value, seeds))
        except (CapExceededError, ValueError) as e:
            rows.append(_error_row(config, grid_value, e))
            continue
        logger.info(f"{config.experiment} grid point {grid_value:g} done")

    columns = CRITERION_COLUMNS if config.experiment == CRITERION_SCAN else STAT_COLUMNS
    table = pd.DataFrame(rows, columns=columns)
    summary = _summarize(config, table)
    if config.output:
        write_sweep(SweepResult(table, summary), config.output)
    return SweepResult(table, summary)


def summary_path(output: str) -> Path:
    return Path(output).with_suffix(".summary.json")


def write_sweep(result: SweepResult, output: str) -> Path:
    out = Path(output)
    out.parent.mkdir(parents=True, exist_ok=True)
    result.table.to_csv(out, index=False)
    with open(summary_path(output), "w", encoding="utf-8") as f:
        json.dump(result.summary, f, indent=2, sort_keys=True)
    logger.info(f"Wrote sweep table to {out}\n{result.table.to_markdown(index=False)}")
    return out
