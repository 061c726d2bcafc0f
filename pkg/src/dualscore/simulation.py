"""Synthetic scenarios with known truth, the link-recovery metric and
the experiments built on top of them.

Each sample draws from named random sub-streams derived from one integer
seed, so parameters, covariates, treatment and labels can be reproduced (or
varied) independently.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DualScoreError, InvalidInputError, NumericFailure, SingularityError
from .model import Dataset, FitConfig, ModelFit, estimate_g, fit, heatmap_grid, sigmoid
from .optimize import project_to_constraint

logger = logging.getLogger(__name__)

SCENARIO_DIMS = {1: 8, 2: 8, 3: 4, 4: 20}
SCENARIO_NAMES = {1: "constant", 2: "linear", 3: "unimodal", 4: "multimodal"}
N_CONTINUOUS_4 = 12
N_BINARY_4 = 8
CHAIN_SLOPE = 0.5
CHAIN_INTERCEPT = -0.25
SINGULAR_EXCLUSION = 0.05

STREAMS = ("parameters", "covariates", "treatment", "noise", "labels")


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named sub-stream of ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), STREAMS.index(name)]))


@dataclass(frozen=True)
class ScenarioTruth:
    scenario_id: int
    beta_true: np.ndarray
    xi_true: np.ndarray

    @property
    def p(self) -> int:
        return SCENARIO_DIMS[self.scenario_id]

    def g(self, u):
        return true_g(self, u)


@dataclass
class SimulatedSample:
    dataset: Dataset
    truth: ScenarioTruth
    seed: int


def _check_scenario(scenario_id) -> int:
    if scenario_id not in SCENARIO_DIMS:
        raise InvalidInputError(f"scenario must be one of 1-4, got {scenario_id!r}")
    return int(scenario_id)


def true_g(truth: ScenarioTruth, u):
    """Closed-form link of the truth's scenario."""
    arr = np.asarray(u, dtype=np.float64)
    sid = truth.scenario_id
    if sid == 1:
        out = np.full_like(arr, 3.0)
    elif sid == 2:
        out = arr.copy()
    elif sid == 3:
        if np.any(arr == 0):
            raise SingularityError("the unimodal link -0.5*log|u| is singular at u = 0")
        out = -0.5 * np.log(np.abs(arr))
    else:
        out = -1.2 * np.cos(np.pi * arr) * np.exp(-arr * arr)
    return float(out) if out.ndim == 0 else out


def _quadrant_direction(rng: np.random.Generator, p: int) -> np.ndarray:
    v = np.abs(rng.standard_normal(p))
    return v / np.linalg.norm(v)


def _gaussian_covariates(params, covs, n: int, p: int) -> np.ndarray:
    mu = params.uniform(-1.0, 1.0, size=p)
    A = params.uniform(0.0, 1.0, size=(p, p))
    return mu + covs.standard_normal((n, p)) @ A.T


def scenario3_covariates(rng: np.random.Generator, n: int) -> np.ndarray:
    x4 = rng.uniform(-1.0, 1.0, n)
    x1 = np.sqrt(np.abs(x4)) + rng.uniform(-1.0, 1.0, n)
    x2 = 0.5 * x1 + rng.uniform(-0.5, 0.5, n)
    x3 = 0.3 * x1 + 0.3 * x2 + rng.uniform(-0.4, 0.4, n)
    return np.column_stack([x1, x2, x3, x4])


def scenario3_treatment(X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Treatment assignment confounded through the second and third covariates."""
    return np.sin(X[:, 1] * X[:, 2]) + rng.uniform(-0.6, 0.6, X.shape[0])


def binary_chain(params, covs, n: int, n_binary: int = N_BINARY_4) -> np.ndarray:
    """Markov chain of Bernoulli columns; column ``i`` depends on column ``i - 1``."""
    p1 = params.uniform(0.0, 1.0)
    out = np.empty((n, n_binary))
    out[:, 0] = covs.random(n) < p1
    for i in range(1, n_binary):
        prob = sigmoid(CHAIN_SLOPE * out[:, i - 1] + CHAIN_INTERCEPT)
        out[:, i] = covs.random(n) < prob
    return out


def generate_scenario(scenario_id: int, n: int, seed: int) -> SimulatedSample:
    sid = _check_scenario(scenario_id)
    if n < 2:
        raise InvalidInputError("n must be at least 2")
    p = SCENARIO_DIMS[sid]
    params = stream(seed, "parameters")
    covs = stream(seed, "covariates")
    treat = stream(seed, "treatment")

    beta = params.uniform(-1.0, 1.0, size=p)
    xi = _quadrant_direction(params, p)
    if sid in (1, 2):
        X = _gaussian_covariates(params, covs, n, p)
        tau = treat.standard_normal(n)
    elif sid == 3:
        X = scenario3_covariates(covs, n)
        tau = scenario3_treatment(X, treat)
    else:
        Xc = _gaussian_covariates(params, covs, n, N_CONTINUOUS_4)
        Xb = binary_chain(params, covs, n)
        X = np.column_stack([Xc, Xb])
        tau = treat.uniform(-1.0, 1.0, n)

    truth = ScenarioTruth(sid, beta, xi)
    u = X @ xi - tau
    if sid == 3 and np.any(u == 0):
        raise NumericFailure("scenario 3 drew an index value exactly at the singularity")
    ybar = X @ beta + true_g(truth, u)
    probs = sigmoid(ybar)
    labels = (stream(seed, "labels").random(n) < probs).astype(np.int64)
    names = [f"x{j + 1}" for j in range(p)]
    return SimulatedSample(Dataset(X, tau, probs, labels, names), truth, int(seed))


def mse_grid(fit_: ModelFit, truth: ScenarioTruth, grid_size: int = 200):
    """Integration segments over the central 95% of the training index.

    Returns a list of grids; scenario 3 drops a small neighbourhood of the
    singularity at 0 and can yield two segments.
    """
    if grid_size < 2:
        raise InvalidInputError("grid_size must be at least 2")
    lo, hi = np.quantile(fit_.train_index, [0.025, 0.975])
    if not hi > lo:
        raise InvalidInputError("training index has no spread to integrate over")
    if truth.scenario_id != 3:
        return [np.linspace(lo, hi, grid_size)]
    segs = []
    width = hi - lo
    for a, b in ((lo, min(hi, -SINGULAR_EXCLUSION)), (max(lo, SINGULAR_EXCLUSION), hi)):
        if b > a:
            m = max(2, int(round(grid_size * (b - a) / width)))
            segs.append(np.linspace(a, b, m))
    if not segs:
        raise InvalidInputError("no usable integration grid away from the singularity")
    return segs


def g_mse(fit_: ModelFit, truth: ScenarioTruth, grid_size: int = 200) -> float:
    """Mean squared gap between fitted and true link (trapezoid rule)."""
    total = width = 0.0
    for grid in mse_grid(fit_, truth, grid_size):
        diff2 = (estimate_g(fit_, grid) - true_g(truth, grid)) ** 2
        total += float(np.trapezoid(diff2, grid))
        width += grid[-1] - grid[0]
    return total / width


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(abs(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def rep_seed(base_seed: int, *keys: int) -> int:
    """Deterministic 32-bit seed for one cell of an experiment."""
    return int(np.random.SeedSequence([int(base_seed), *map(int, keys)]).generate_state(1)[0])


@dataclass
class RunRecord:
    scenario_id: int
    n: int
    rep: int
    seed: int
    mse: float
    runtime_s: float
    objective: float
    cosine: float
    error: str = ""
    fit: ModelFit | None = field(default=None, repr=False)
    truth: ScenarioTruth | None = field(default=None, repr=False)


@dataclass
class ConvergenceTable:
    scenario_id: int
    rows: list[tuple[int, float, float]]
    records: list[RunRecord]
    heatmaps: dict = field(default_factory=dict)


def _summary(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray([v for v in values if math.isfinite(v)], dtype=float)
    if arr.size == 0:
        return math.nan, math.nan
    return float(arr.mean()), float(arr.std(ddof=1)) if arr.size > 1 else math.nan


def run_cell(
    scenario_id: int, n: int, rep: int, config: FitConfig, seed: int, grid_size: int = 200
) -> RunRecord:
    """Generate, fit and score one (scenario, n, rep) cell; never raises."""
    data_seed = rep_seed(seed, scenario_id, n, rep)
    try:
        sample = generate_scenario(scenario_id, n, data_seed)
        start = time.perf_counter()
        model = fit(sample.dataset, config.replace(seed=data_seed))
        runtime = time.perf_counter() - start
        return RunRecord(
            scenario_id, n, rep, data_seed,
            g_mse(model, sample.truth, grid_size), runtime, model.objective_value,
            cosine(model.xi, sample.truth.xi_true), fit=model, truth=sample.truth,
        )
    except DualScoreError as exc:
        logger.warning("cell scenario=%s n=%s rep=%s failed: %s", scenario_id, n, rep, exc)
        return RunRecord(scenario_id, n, rep, data_seed, math.nan, math.nan, math.nan,
                         math.nan, error=f"{type(exc).__name__}: {exc}")


def truth_heatmap(truth: ScenarioTruth, prognostic_axis, index_axis) -> np.ndarray:
    g = np.asarray(true_g(truth, np.where(index_axis == 0, 1e-12, index_axis)))
    return np.asarray(prognostic_axis)[:, None] + g[None, :]


def convergence_experiment(
    scenario_id: int,
    sample_sizes: Sequence[int],
    reps: int,
    config: FitConfig,
    seed: int = 0,
    heatmap_resolution: tuple[int, int] | None = (40, 40),
    keep_fits: bool = False,
) -> ConvergenceTable:
    """Fresh data per (n, rep): generate, fit, score the link recovery.

    ``heatmaps`` maps each ``n`` to the heatmap of its first successful
    replicate on a common axis range (taken from that replicate's training
    data), for panel-style comparison with the truth.
    """
    sid = _check_scenario(scenario_id)
    if reps < 1:
        raise InvalidInputError("reps must be >= 1")
    records, rows, heatmaps = [], [], {}
    for n in sample_sizes:
        cell = [run_cell(sid, int(n), r, config, seed) for r in range(reps)]
        mean, std = _summary([c.mse for c in cell])
        rows.append((int(n), mean, std))
        first = next((c for c in cell if c.fit is not None), None)
        if heatmap_resolution and first is not None:
            heatmaps[int(n)] = heatmap_grid(
                first.fit, _prognostic_range(first.fit, sid, first.seed, int(n)),
                tuple(np.quantile(first.fit.train_index, [0.025, 0.975])), heatmap_resolution,
            )
        if not keep_fits:
            for c in cell:
                c.fit = None
        records.extend(cell)
    return ConvergenceTable(sid, rows, records, heatmaps)


def _prognostic_range(model: ModelFit, sid: int, seed: int, n: int) -> tuple[float, float]:
    X = generate_scenario(sid, n, seed).dataset.features
    lo, hi = np.quantile(X @ model.beta, [0.025, 0.975])
    return (float(lo), float(hi)) if hi > lo else (float(lo) - 1, float(lo) + 1)


@dataclass
class CoefficientInterval:
    name: str
    estimate: float
    low: float
    high: float


@dataclass
class BootstrapResult:
    beta: list[CoefficientInterval]
    xi: list[CoefficientInterval]
    failures: int
    level: float


def bootstrap_ci(
    dataset: Dataset,
    config: FitConfig,
    k: int = 30,
    level: float = 0.95,
    seed: int = 0,
    resamples=None,
) -> BootstrapResult:
    """Percentile intervals for every coefficient of ``beta`` and ``xi``.

    Parameters
    ----------
    resamples : sequence of index arrays, optional
        Explicit row draws to use instead of seeded uniform resampling; its
        length overrides ``k``.
    """
    if resamples is not None:
        resamples = [np.asarray(r, dtype=int) for r in resamples]
        k = len(resamples)
    if k < 2:
        raise InvalidInputError("k must be at least 2")
    if not 0 < level < 1:
        raise InvalidInputError("level must lie in (0, 1)")
    full = fit(dataset, config)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7919]))
    betas, xis, failures = [], [], 0
    for b in range(k):
        rows = resamples[b] if resamples is not None else rng.integers(0, dataset.n, size=dataset.n)
        try:
            m = fit(dataset.subset(rows), config)
        except DualScoreError as exc:
            failures += 1
            logger.warning("bootstrap resample %d failed: %s", b, exc)
            if failures > k / 2:
                raise NumericFailure(f"{failures} of {k} bootstrap refits failed") from exc
            continue
        betas.append(m.beta)
        xis.append(project_to_constraint(m.xi))
    alpha = (1.0 - level) / 2.0

    def intervals(est, draws):
        lo, hi = np.quantile(np.asarray(draws), [alpha, 1 - alpha], axis=0)
        return [CoefficientInterval(name, float(e), float(a), float(b))
                for name, e, a, b in zip(dataset.feature_names, est, lo, hi)]

    return BootstrapResult(intervals(full.beta, betas), intervals(full.xi, xis), failures, level)
