"""Monte Carlo experiments and perturbation-bound diagnostics.

Random streams are keyed by (master seed, N index, rho index, repetition).
The tau multiplier is deliberately not part of the key: every tau on the
grid sees the same simulated responses, so tau sweeps compare methods on
common data.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import NamedTuple

import numpy as np

from .estimators import EstimationError, Method, default_tau, fit
from .metrics import METRIC_NAMES, estimate_k, score
from .model import (ItemParams, Labeling, ModelError, PopulationModel, ResponseMatrix, sample_binomial,
                    sample_response, sample_synthetic)
from .rng import stream, substream_seed
from .schemas import SCHEMA_VERSION
from .spectral import regularized_laplacian, spectral_norm

ALL_METHODS = tuple(m.value for m in Method)


class ConfigError(ValueError):
    pass


def _grid(start: float, stop: float, step: float) -> list[float]:
    count = int(round((stop - start) / step)) + 1
    return [round(start + i * step, 10) for i in range(count)]


@dataclass
class ExperimentConfig:
    experiment: str = "custom"
    n_values: list[int] = field(default_factory=lambda: [500])
    rho_values: list[float] = field(default_factory=lambda: [0.8])
    tau_multipliers: list[float] = field(default_factory=lambda: [1.0])
    k: int = 3
    j_ratio: int = 5
    m_levels: int = 5
    repetitions: int = 20
    seed: int = 0
    methods: list[str] = field(default_factory=lambda: list(ALL_METHODS))
    select_k: bool = True
    k_max: int = 6
    population: bool = False

    def __post_init__(self):
        self.methods = [Method(m).value for m in self.methods]

    def validate(self) -> "ExperimentConfig":
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        for name in ("n_values", "rho_values", "tau_multipliers", "methods"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must be non-empty")
        if self.m_levels < 1 or self.k < 1 or self.j_ratio < 1:
            raise ConfigError("k, j_ratio and m_levels must be positive")
        for n in self.n_values:
            if n % self.j_ratio:
                raise ConfigError(f"J = N/{self.j_ratio} is not an integer for N={n}")
            if self.k > min(n, n // self.j_ratio):
                raise ConfigError(f"k={self.k} exceeds min(N, J) at N={n}")
            if self.select_k and self.k_max > min(n, n // self.j_ratio):
                raise ConfigError(f"k_max={self.k_max} exceeds min(N, J) at N={n}")
        for rho in self.rho_values:
            if not 0 < rho <= self.m_levels:
                raise ConfigError(f"rho={rho} outside (0, M={self.m_levels}]")
        if any(c <= 0 for c in self.tau_multipliers):
            raise ConfigError("tau multipliers must be positive")
        if self.k_max < 1:
            raise ConfigError("k_max must be >= 1")
        if self.k < 2 and Method.RSCORS.value in self.methods:
            raise ConfigError("rscors needs k >= 2")
        return self

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data).validate()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return asdict(self)


def preset(experiment: int, repetitions: int = 20, seed: int = 0) -> ExperimentConfig:
    """Desk-scale versions of the three simulation studies."""
    if experiment == 1:
        cfg = ExperimentConfig("1", [500], [0.8], _grid(0.2, 2.0, 0.2),
                               methods=["rsc", "rscn", "rscors", "rlmk"])
    elif experiment == 2:
        cfg = ExperimentConfig("2", [500], _grid(0.2, 2.0, 0.2), [1.0])
    elif experiment == 3:
        cfg = ExperimentConfig("3", [1000, 2000, 4000], [0.15], [1.0])
    else:
        raise ConfigError(f"no preset for experiment {experiment}")
    cfg.repetitions = repetitions
    cfg.seed = seed
    return cfg.validate()


# ------------------------------------------------------------------ running


@dataclass
class RunRecord:
    metrics: dict | None
    wall_time: float | None
    k_hat: int | None
    error: str | None = None


def _run_task(config: ExperimentConfig, n_idx: int, rho_idx: int, rep: int) -> dict:
    """One simulated dataset, all tau multipliers and methods.

    Returns {(c0_idx, method): RunRecord}.
    """
    n = config.n_values[n_idx]
    j = n // config.j_ratio
    rho = config.rho_values[rho_idx]
    m = config.m_levels
    key = (config.seed, n_idx, rho_idx, rep)
    labeling, items, resp = sample_synthetic(n, j, config.k, m, rho, substream_seed(*key, 0))
    data = items.theta.T[labeling.labels] if config.population else resp.entries
    fit_seed = substream_seed(*key, 1)
    select_seed = substream_seed(*key, 2)
    base_tau = default_tau(n, j, m)
    out = {}
    for method in map(Method, config.methods):
        plain_record = None
        for c_idx, c0 in enumerate(config.tau_multipliers):
            if not method.uses_tau and plain_record is not None:
                out[(c_idx, method.value)] = plain_record
                continue
            tau = c0 * base_tau if method.uses_tau else None
            try:
                start = time.perf_counter()
                res = fit(data, config.k, method, tau, fit_seed, m_levels=m)
                elapsed = time.perf_counter() - start
                report = score(labeling, res.labeling, items.theta, res.theta_hat)
                k_hat = None
                if config.select_k:
                    k_hat = estimate_k(data, method, config.k_max, lambda *_: c0 * base_tau,
                                       select_seed, m_levels=m).k_hat
                record = RunRecord(report.as_dict(), elapsed, k_hat)
            except (EstimationError, ValueError, ModelError, np.linalg.LinAlgError) as exc:
                record = RunRecord(None, None, None, f"{type(exc).__name__}: {exc}")
            out[(c_idx, method.value)] = record
            if not method.uses_tau:
                plain_record = record
    return out


def _star_task(args):
    return _run_task(*args)


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rows: list[dict]

    @property
    def failures(self) -> int:
        return sum(r["failures"] for r in self.rows)

    def row(self, method: str, **grid) -> dict:
        hits = [r for r in self.rows if r["method"] == Method(method).value
                and all(math.isclose(r[k], v) for k, v in grid.items())]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match method={method} {grid}")
        return hits[0]

    def _public_rows(self, include_timing: bool) -> list[dict]:
        if include_timing:
            return [dict(r) for r in self.rows]
        return [{k: v for k, v in r.items() if k != "mean_wall_time"} for r in self.rows]

    def to_json(self, include_timing: bool = False) -> str:
        doc = {"schema_version": SCHEMA_VERSION, "kind": "experiment_report",
               "config": self.config.to_dict(), "rows": self._public_rows(include_timing)}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_csv(self, include_timing: bool = False) -> str:
        rows = self._public_rows(include_timing)
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: "" if v is None else v for k, v in r.items()})
        return buf.getvalue()


def _mean(values):
    return float(math.fsum(values) / len(values)) if values else None


def run_experiment(config: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """Simulate, fit, score and aggregate over the whole grid.

    Aggregation walks repetitions in index order, so the report does not
    depend on ``workers``.
    """
    config.validate()
    tasks = [(config, ni, ri, rep) for ni in range(len(config.n_values))
             for ri in range(len(config.rho_values)) for rep in range(config.repetitions)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_star_task, tasks))
    else:
        results = [_run_task(*t) for t in tasks]
    by_key = {(t[1], t[2], t[3]): res for t, res in zip(tasks, results)}

    rows = []
    for ni, ri, ci in itertools.product(range(len(config.n_values)), range(len(config.rho_values)),
                                        range(len(config.tau_multipliers))):
        n = config.n_values[ni]
        j = n // config.j_ratio
        c0 = config.tau_multipliers[ci]
        for method in config.methods:
            recs = [by_key[(ni, ri, rep)][(ci, method)] for rep in range(config.repetitions)]
            ok = [r for r in recs if r.error is None]
            row = {"experiment": config.experiment, "n": n, "j": j, "rho": config.rho_values[ri],
                   "c0": c0, "tau": c0 * default_tau(n, j, config.m_levels) if Method(method).uses_tau else None,
                   "method": method, "repetitions": config.repetitions, "n_ok": len(ok),
                   "failures": len(recs) - len(ok)}
            for name in METRIC_NAMES:
                row[f"mean_{name}"] = _mean([r.metrics[name] for r in ok])
            row["mean_wall_time"] = _mean([r.wall_time for r in ok])
            row["k_accuracy"] = (sum(r.k_hat == config.k for r in recs) / len(recs)
                                 if config.select_k else None)
            row["ari_ce_mismatches"] = sum(
                (r.metrics["ari"] == 1.0) != (r.metrics["clustering_error"] == 0.0) for r in ok)
            rows.append(row)
    return ExperimentReport(config, rows)


def consistency_trend(config: ExperimentConfig, workers: int = 1):
    """Mean clustering error per N, and whether it falls from the smallest to the largest N.

    Returns ``(flag, table)`` where ``table[method]`` lists (N, mean clustering
    error, mean relative l2 error) in increasing N.  Equal errors count as a
    pass only when both are zero.
    """
    if len(config.rho_values) != 1 or len(config.tau_multipliers) != 1:
        raise ConfigError("consistency_trend needs a single rho and a single tau multiplier")
    report = run_experiment(config, workers)
    ns = sorted(config.n_values)
    table = {}
    flag = True
    for method in config.methods:
        series = [(n, report.row(method, n=n)["mean_clustering_error"], report.row(method, n=n)["mean_rel_l2"])
                  for n in ns]
        table[method] = series
        first, last = series[0][1], series[-1][1]
        if len(series) > 1 and not (last < first or (last == 0.0 and first == 0.0)):
            flag = False
    return flag, table


# ---------------------------------------------------------- toy example


def toy_instance(seed: int = 0, n: int = 16, j: int = 10, m_levels: int = 3):
    """Two balanced classes with column-separated item parameters.

    Items alternate between favouring class 1 and class 2; the favoured class
    gets a parameter in [0.75, 1] * M, the other one in [0, 0.25] * M, so the
    columns differ by at least M/2 = 1.5 on every item when M = 3.
    """
    rng = stream(seed, 4)
    labels = np.repeat([0, 1], [n - n // 2, n // 2])
    labels = rng.permutation(labels)
    high = rng.uniform(0.75, 1.0, size=j) * m_levels
    low = rng.uniform(0.0, 0.25, size=j) * m_levels
    favour = np.arange(j) % 2
    theta = np.empty((j, 2))
    theta[np.arange(j), favour] = high
    theta[np.arange(j), 1 - favour] = low
    model = PopulationModel(Labeling(labels, 2), ItemParams(theta, m_levels))
    resp = ResponseMatrix(sample_binomial(model.expected / m_levels, m_levels, rng), m_levels)
    return model, resp


def run_toy_example(seed: int = 0, methods=ALL_METHODS) -> dict:
    """Fit every method to one small instance; returns the instance and a per-method table."""
    model, resp = toy_instance(seed)
    tau = default_tau(model.n, model.j, model.m_levels)
    table = []
    theta_hats = {}
    for method in map(Method, methods):
        res = fit(resp, model.k, method, tau, substream_seed(seed, 1))
        rep = score(model.labeling, res.labeling, model.items.theta, res.theta_hat)
        k_hat = estimate_k(resp, method, seed=substream_seed(seed, 2)).k_hat
        table.append({"method": method.value, **rep.as_dict(), "k_hat": k_hat})
        theta_hats[method.value] = res.theta_hat
    return {"model": model, "responses": resp, "table": table, "theta_hat": theta_hats}


# ----------------------------------------------------------- diagnostics


def epsilon_tau(model: PopulationModel, tau: float) -> float:
    """Closed-form order of ||L_tau - population L_tau|| (natural log)."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    n, j, m = model.n, model.j, model.m_levels
    denom = tau + model.delta_min
    return float((1 + math.sqrt(m * n / denom)) * math.sqrt(model.rho * max(n, j) * math.log(n + j) / denom))


def varrho_tau(model: PopulationModel, tau: float) -> float:
    denom = tau + model.delta_min
    x = model.m_levels * model.n / denom
    return float((1 + x + 2 * math.sqrt(x)) * (tau + model.delta_max) / denom)


def assumption_holds(model: PopulationModel) -> bool:
    n, j = model.n, model.j
    return bool(model.rho * max(n, j) >= model.m_levels**2 * math.log(n + j))


def theory_diagnostics(model: PopulationModel, tau: float) -> dict:
    return {
        "delta_min": model.delta_min,
        "delta_max": model.delta_max,
        "sigma_k_b": model.items.sigma_k,
        "rho": model.rho,
        "tau": float(tau),
        "epsilon_tau": epsilon_tau(model, tau),
        "varrho_tau": varrho_tau(model, tau),
        "mn_over_tau_delta_min": model.m_levels * model.n / (tau + model.delta_min),
        "assumption_1_holds": assumption_holds(model),
    }


class BoundPoint(NamedTuple):
    tau: float
    ratio: float
    epsilon: float


def bound_ratio_curve(model: PopulationModel, seed: int, tau_grid, responses=None) -> list[BoundPoint]:
    """||L_tau - population L_tau|| / epsilon_tau along ``tau_grid`` for one response draw.

    ``responses`` overrides the draw (e.g. pass the population matrix itself).
    """
    tau_grid = [float(t) for t in tau_grid]
    if not tau_grid:
        raise ValueError("tau grid must be non-empty")
    r = sample_response(model, seed).entries if responses is None else np.asarray(
        getattr(responses, "entries", responses), dtype=float)
    pop = model.expected
    out = []
    for tau in tau_grid:
        gap = spectral_norm(regularized_laplacian(r, tau) - regularized_laplacian(pop, tau))
        eps = epsilon_tau(model, tau)
        out.append(BoundPoint(tau, gap / eps, eps))
    return out


def canned_bound_model(seed: int = 0) -> PopulationModel:
    """N=500, J=200, K=3, M=5, rho=1, uniform item parameters, equal class probabilities."""
    labeling, items, _ = sample_synthetic(500, 200, 3, 5, 1.0, seed)
    return PopulationModel(labeling, items)
