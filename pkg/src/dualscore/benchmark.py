"""Optimizer comparison on simulated data: runtime, objective and link MSE."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidInputError
from .model import FitConfig
from .simulation import SCENARIO_DIMS, run_cell

METRICS = ("runtime_s", "objective", "heatmap_mse")


@dataclass
class BenchmarkRecord:
    method: str
    n: int
    rep: int
    runtime_s: float
    objective: float
    heatmap_mse: float
    error: str = ""


def default_configs(bandwidth: float = 0.15, lasso_penalty: float = 1e-4) -> dict[str, FitConfig]:
    """TPE at 200 evaluations, DE run longer with a compact population, random at 200."""
    base = FitConfig(bandwidth=bandwidth, lasso_penalty=lasso_penalty)
    return {
        "tpe": base.replace(optimizer="tpe", optimizer_budget=200),
        "de": base.replace(optimizer="de", optimizer_budget=2000, optimizer_params={"popsize": 20}),
        "random": base.replace(optimizer="random", optimizer_budget=200),
    }


def benchmark_optimizers(
    scenario_id: int,
    sample_sizes: Sequence[int],
    reps: int,
    config_map: Mapping[str, FitConfig],
    seed: int = 0,
) -> list[BenchmarkRecord]:
    """Run every (method, n, rep) cell; data for a given (n, rep) is shared by all methods.

    Runtime covers the fit only. Failing cells are recorded with NaN metrics.
    """
    if scenario_id not in SCENARIO_DIMS:
        raise InvalidInputError(f"scenario must be one of 1-4, got {scenario_id!r}")
    if reps < 1:
        raise InvalidInputError("reps must be >= 1")
    records = []
    for method, cfg in config_map.items():
        for n in sample_sizes:
            for rep in range(reps):
                cell = run_cell(scenario_id, int(n), rep, cfg, seed)
                records.append(BenchmarkRecord(
                    method, int(n), rep, cell.runtime_s, cell.objective, cell.mse, cell.error
                ))
    return records


def summarize(records: Sequence[BenchmarkRecord]) -> dict[tuple[str, int], dict[str, tuple[float, float]]]:
    """Mean and sample std of each metric per (method, n), ignoring failed cells."""
    out: dict = {}
    keys = sorted({(r.method, r.n) for r in records}, key=lambda k: (k[0], k[1]))
    for key in keys:
        cell = [r for r in records if (r.method, r.n) == key and not r.error]
        stats = {}
        for m in METRICS:
            vals = np.array([getattr(r, m) for r in cell], dtype=float)
            vals = vals[np.isfinite(vals)]
            mean = float(vals.mean()) if vals.size else math.nan
            std = float(vals.std(ddof=1)) if vals.size > 1 else math.nan
            stats[m] = (mean, std)
        out[key] = stats
    return out


def summary_rows(summary) -> tuple[list[str], list[list]]:
    """Wide layout: one row per method, one column block per metric and n."""
    methods = sorted({k[0] for k in summary})
    sizes = sorted({k[1] for k in summary})
    header = ["method"] + [f"{m}_n{n}" for m in METRICS for n in sizes]
    rows = []
    for method in methods:
        row = [method]
        for m in METRICS:
            for n in sizes:
                mean, std = summary.get((method, n), {}).get(m, (math.nan, math.nan))
                row.append(f"{mean:.4g} ± {std:.3g}")
        rows.append(row)
    return header, rows
