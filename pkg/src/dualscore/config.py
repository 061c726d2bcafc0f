"""Flat ``key = value`` run configuration shared by every subcommand.

Example::

    # model
    bandwidth = 0.15
    lasso_penalty = 1e-4
    kernel = epanechnikov
    optimizer = de
    optimizer_budget = 4000
    de.popsize = 20
    # tuning
    h_grid = 0.15, 0.2, 0.25, 0.3, 0.35, 0.4
    lambda_grid = 1e-5, 1e-4, 1e-3, 1e-2, 1e-1
    cv_folds = 5
    # experiments
    scenario = 4
    sizes = 100, 500, 1000
    reps = 5
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidInputError
from .model import FitConfig

DEFAULT_H_GRID = (0.15, 0.2, 0.25, 0.3, 0.35, 0.4)
DEFAULT_LAMBDA_GRID = (1e-5, 1e-4, 1e-3, 1e-2, 1e-1)

_FIT_KEYS = {
    "bandwidth": float,
    "lasso_penalty": float,
    "kernel": str,
    "optimizer": str,
    "optimizer_budget": int,
    "seed": int,
    "prob_clip": float,
}


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(float(v)) for v in text.replace(";", ",").split(",") if v.strip())


@dataclass(frozen=True)
class RunConfig:
    fit: FitConfig = field(default_factory=FitConfig)
    h_grid: tuple[float, ...] = ()
    lambda_grid: tuple[float, ...] = ()
    cv_folds: int = 5
    train_fraction: float = 0.9
    output_dir: str = "out"
    seed: int = 0
    scenario: int | None = None
    sizes: tuple[int, ...] = ()
    reps: int = 1
    distill_rounds: int = 200
    distill_depth: int = 4
    distill_learning_rate: float = 0.1
    smote_k: int = 5

    def __post_init__(self):
        if self.cv_folds < 2:
            raise InvalidInputError("cv_folds must be >= 2")
        if not 0 < self.train_fraction < 1:
            raise InvalidInputError("train_fraction must lie in (0, 1)")
        for name in ("h_grid", "lambda_grid"):
            grid = getattr(self, name)
            if any(v < 0 for v in grid) or (name == "h_grid" and any(v == 0 for v in grid)):
                raise InvalidInputError(f"{name} has out-of-range values")
        if self.reps < 1:
            raise InvalidInputError("reps must be >= 1")

    @property
    def tuning(self) -> bool:
        return len(self.h_grid) * len(self.lambda_grid) > 1

    def grid(self) -> tuple[tuple[float, ...], tuple[float, ...]]:
        """Effective grids; an empty grid falls back to the fit's single value."""
        return (self.h_grid or (self.fit.bandwidth,),
                self.lambda_grid or (self.fit.lasso_penalty,))


def parse_kv(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInputError(f"config line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key] = val
    return out


def parse_config(text: str) -> RunConfig:
    kv = parse_kv(text)
    fit_kwargs, params, run = {}, {}, {}
    for key, val in kv.items():
        if key in _FIT_KEYS:
            fit_kwargs[key] = _FIT_KEYS[key](val)
        elif "." in key:
            method, name = key.split(".", 1)
            params.setdefault(method.lower(), {})[name] = float(val)
        elif key in ("h_grid", "lambda_grid"):
            run[key] = _floats(val)
        elif key == "sizes":
            run[key] = _ints(val)
        elif key in ("cv_folds", "reps", "scenario", "distill_rounds", "distill_depth", "smote_k"):
            run[key] = int(val)
        elif key in ("train_fraction", "distill_learning_rate"):
            run[key] = float(val)
        elif key == "output_dir":
            run[key] = val
        else:
            raise InvalidInputError(f"unknown config key {key!r}")
    method = fit_kwargs.get("optimizer", FitConfig.optimizer).lower()
    opt_params = params.get(method, {})
    if "popsize" in opt_params:
        opt_params["popsize"] = int(opt_params["popsize"])
    fit = FitConfig(**fit_kwargs, optimizer_params=opt_params)
    return RunConfig(fit=fit, seed=fit.seed, **run)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))
