"""Semiparametric dual-score model for binary outcomes under continuous treatment.

The log-odds of the outcome are modelled as ``x @ beta + g(x @ xi - tau)``,
where ``beta`` is an unrestricted prognostic coefficient vector, ``xi`` is a
unit-norm index direction and ``g`` is an unknown link estimated by
Nadaraya-Watson smoothing. ``beta`` is profiled out in closed form for every
candidate ``xi``, so the outer search runs over ``xi`` alone.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    DegenerateIndexError,
    InvalidCandidateError,
    InvalidInputError,
    PreconditionError,
)
from .kernels import Kernel, nw_estimate_many, nw_residuals_loo
from .optimize import METHODS, SearchConfig, minimize, project_to_constraint

logger = logging.getLogger(__name__)

DEFAULT_PROB_CLIP = 1e-6


@dataclass
class Dataset:
    """Features, treatment and outcome for ``n`` subjects.

    ``soft_probs`` holds outcome probabilities (for example from an expert
    classifier); ``hard_labels`` holds observed 0/1 outcomes. Fitting needs the
    former.
    """

    features: np.ndarray
    treatment: np.ndarray
    soft_probs: np.ndarray | None = None
    hard_labels: np.ndarray | None = None
    feature_names: list[str] | None = None

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        self.treatment = np.asarray(self.treatment, dtype=np.float64).ravel()
        n, p = self.features.shape
        if n < 2 or p < 1:
            raise InvalidInputError(f"need n >= 2 rows and p >= 1 features, got {n}x{p}")
        if self.treatment.size != n:
            raise InvalidInputError(f"treatment has {self.treatment.size} entries, expected {n}")
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.treatment))):
            raise InvalidInputError("features and treatment must be finite")
        if self.soft_probs is not None:
            self.soft_probs = np.asarray(self.soft_probs, dtype=np.float64).ravel()
            if self.soft_probs.size != n:
                raise InvalidInputError("soft_probs length does not match the number of rows")
            if not np.all((self.soft_probs >= 0) & (self.soft_probs <= 1)):
                raise InvalidInputError("soft_probs must lie in [0, 1]")
        if self.hard_labels is not None:
            self.hard_labels = np.asarray(self.hard_labels).ravel().astype(np.int64)
            if self.hard_labels.size != n:
                raise InvalidInputError("hard_labels length does not match the number of rows")
            if not np.all(np.isin(self.hard_labels, (0, 1))):
                raise InvalidInputError("hard_labels must be 0/1")
        if self.soft_probs is None and self.hard_labels is None:
            raise InvalidInputError("a dataset needs soft_probs or hard_labels")
        if self.feature_names is None:
            self.feature_names = [f"x{j + 1}" for j in range(p)]
        elif len(self.feature_names) != p:
            raise InvalidInputError("feature_names length does not match the feature count")
        self.feature_names = list(self.feature_names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(
            self.features[rows],
            self.treatment[rows],
            None if self.soft_probs is None else self.soft_probs[rows],
            None if self.hard_labels is None else self.hard_labels[rows],
            self.feature_names,
        )


@dataclass(frozen=True)
class FitConfig:
    bandwidth: float = 0.3
    lasso_penalty: float = 1e-3
    kernel: Kernel = Kernel.EPANECHNIKOV
    optimizer: str = "tpe"
    optimizer_budget: int = 200
    seed: int = 0
    prob_clip: float = DEFAULT_PROB_CLIP
    optimizer_params: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kernel", Kernel.parse(self.kernel))
        object.__setattr__(self, "optimizer", str(self.optimizer).lower())
        if not (math.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise InvalidInputError(f"bandwidth must be positive, got {self.bandwidth}")
        if not (math.isfinite(self.lasso_penalty) and self.lasso_penalty >= 0):
            raise InvalidInputError(f"lasso_penalty must be >= 0, got {self.lasso_penalty}")
        if self.optimizer not in METHODS:
            raise InvalidInputError(f"unknown optimizer {self.optimizer!r}")
        if int(self.optimizer_budget) < 1:
            raise InvalidInputError("optimizer_budget must be >= 1")
        if not 0 < self.prob_clip < 0.5:
            raise InvalidInputError("prob_clip must lie in (0, 0.5)")
        if self.seed < 0:
            raise InvalidInputError("seed must be non-negative")

    def replace(self, **changes) -> "FitConfig":
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return FitConfig(**values)


@dataclass(frozen=True)
class ModelFit:
    """Everything needed to evaluate the fitted link and predict.

    ``train_index`` holds the raw (unstandardized) training index values
    ``X @ xi - tau``; ``index_scale`` is their sample standard deviation and is
    applied to every query before smoothing.
    """

    beta: np.ndarray
    xi: np.ndarray
    train_index: np.ndarray
    link_residuals: np.ndarray
    bandwidth: float
    kernel: Kernel
    lasso_penalty: float
    index_scale: float
    objective_value: float
    feature_names: tuple[str, ...] = ()
    evaluations: int = 0
    rank_deficient: bool = False
    smoothing_fallbacks: int = 0

    def __post_init__(self):
        for name in ("beta", "xi", "train_index", "link_residuals"):
            arr = np.array(getattr(self, name), dtype=np.float64).ravel()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "kernel", Kernel.parse(self.kernel))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if self.beta.size != self.xi.size:
            raise InvalidInputError("beta and xi must have the same length")
        if self.train_index.size != self.link_residuals.size:
            raise InvalidInputError("train_index and link_residuals lengths differ")
        if not np.all(np.isfinite(self.link_residuals)):
            raise InvalidInputError("link residuals must be finite")
        if abs(np.linalg.norm(self.xi) - 1.0) > 1e-10:
            raise InvalidInputError("xi must have unit norm")
        if not self.index_scale > 0:
            raise InvalidInputError("index_scale must be positive")

    @property
    def p(self) -> int:
        return self.beta.size


class Profile(NamedTuple):
    beta: np.ndarray
    residuals: np.ndarray
    rank_deficient: bool
    fallbacks: int


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return float(out) if out.ndim == 0 else out


def log_odds_targets(dataset: Dataset, prob_clip: float = DEFAULT_PROB_CLIP) -> np.ndarray:
    """Clipped log-odds of the dataset's soft probabilities."""
    if dataset.soft_probs is None:
        raise PreconditionError(
            "dataset has no soft probabilities; run distillation "
            "(dualscore.distill.soft_label_dataset) before fitting"
        )
    if not 0 < prob_clip < 0.5:
        raise InvalidInputError("prob_clip must lie in (0, 0.5)")
    # Clipping p to [eps, 1 - eps] is the same as clipping the log-odds to
    # +-log((1 - eps) / eps); the latter avoids rounding in 1 - eps.
    bound = math.log1p(-prob_clip) - math.log(prob_clip)
    p = dataset.soft_probs
    with np.errstate(divide="ignore"):
        y = np.log(p) - np.log1p(-p)
    return np.clip(y, -bound, bound)


def index_values(dataset: Dataset, xi) -> np.ndarray:
    """Raw index ``X @ xi - tau`` for every row."""
    xi = np.asarray(xi, dtype=np.float64).ravel()
    if xi.size != dataset.p:
        raise InvalidInputError(f"xi has length {xi.size}, expected {dataset.p}")
    return dataset.features @ xi - dataset.treatment


def _index_scale(z: np.ndarray) -> float:
    scale = float(np.std(z, ddof=1))
    # rounding leaves a tiny nonzero sd when every value is the same
    if not (np.isfinite(scale) and scale > 1e-12 * max(1.0, float(np.abs(z).max()))):
        raise DegenerateIndexError("index values have zero variance")
    return scale


def profile_beta(
    dataset: Dataset,
    targets,
    xi,
    bandwidth: float,
    kernel: Kernel | str = Kernel.EPANECHNIKOV,
) -> Profile:
    """Profiled least-squares ``beta`` for a fixed index direction.

    Both the features and the targets are residualized against their
    leave-one-out NW means along the standardized index; ``beta`` solves the
    least-squares problem between those residuals. A rank-deficient system is
    solved in the minimum-norm sense and flagged.
    """
    targets = np.asarray(targets, dtype=np.float64).ravel()
    z = index_values(dataset, xi)
    zs = z / _index_scale(z)
    stacked = np.column_stack([dataset.features, targets])
    resid, fallbacks = nw_residuals_loo(zs, stacked, bandwidth, kernel, return_fallbacks=True)
    return _solve_profile(resid[:, :-1], resid[:, -1], fallbacks)


def _solve_profile(ex: np.ndarray, ey: np.ndarray, fallbacks: int = 0) -> Profile:
    beta, _, rank, _ = np.linalg.lstsq(ex, ey, rcond=None)
    rank_deficient = rank < ex.shape[1]
    return Profile(beta, ey - ex @ beta, bool(rank_deficient), fallbacks)


def penalized_objective(dataset: Dataset, targets, xi_raw, config: FitConfig) -> float:
    """Mean squared profiled residual plus ``lasso_penalty * ||xi||_1``.

    ``xi_raw`` is projected onto the unit sphere (canonical sign) first, so
    the value is invariant to rescaling or negating the candidate.
    """
    xi = project_to_constraint(xi_raw)
    prof = profile_beta(dataset, targets, xi, config.bandwidth, config.kernel)
    return float(np.mean(prof.residuals**2) + config.lasso_penalty * np.abs(xi).sum())


def _make_objective(dataset: Dataset, targets: np.ndarray, config: FitConfig):
    stacked = np.column_stack([dataset.features, targets])

    def objective(xi):
        z = dataset.features @ xi - dataset.treatment
        try:
            zs = z / _index_scale(z)
        except DegenerateIndexError:
            return math.inf
        resid = nw_residuals_loo(zs, stacked, config.bandwidth, config.kernel, fast=True)
        prof = _solve_profile(resid[:, :-1], resid[:, -1])
        return float(np.mean(prof.residuals**2) + config.lasso_penalty * np.abs(xi).sum())

    return objective


def fit(dataset: Dataset, config: FitConfig | None = None) -> ModelFit:
    """Estimate ``beta``, ``xi`` and the link function.

    Deterministic for a given dataset and config (including the seed).
    """
    config = config or FitConfig()
    targets = log_odds_targets(dataset, config.prob_clip)
    search = SearchConfig(
        dimension=dataset.p,
        budget=int(config.optimizer_budget),
        seed=int(config.seed),
        method=config.optimizer,
        params=dict(config.optimizer_params),
    )
    result = minimize(_make_objective(dataset, targets, config), search)
    if not math.isfinite(result.best_value):
        raise DegenerateIndexError(
            f"optimizer found no candidate with a non-degenerate index after "
            f"{result.evaluations} evaluations"
        )
    xi = result.best_xi
    prof = profile_beta(dataset, targets, xi, config.bandwidth, config.kernel)
    if prof.rank_deficient:
        logger.warning("residualized design is rank deficient; using minimum-norm beta")
    z = index_values(dataset, xi)
    return ModelFit(
        beta=prof.beta,
        xi=xi,
        train_index=z,
        link_residuals=targets - dataset.features @ prof.beta,
        bandwidth=config.bandwidth,
        kernel=config.kernel,
        lasso_penalty=config.lasso_penalty,
        index_scale=_index_scale(z),
        objective_value=result.best_value,
        feature_names=tuple(dataset.feature_names),
        evaluations=result.evaluations,
        rank_deficient=prof.rank_deficient,
        smoothing_fallbacks=prof.fallbacks,
    )


def estimate_g(fit: ModelFit, z):
    """Fitted link evaluated at raw index value(s) ``z``."""
    arr = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("link argument must be finite")
    out = nw_estimate_many(
        fit.train_index / fit.index_scale,
        fit.link_residuals,
        arr.ravel() / fit.index_scale,
        fit.bandwidth,
        fit.kernel,
    )
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def _check_x(fit: ModelFit, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != fit.p:
        raise InvalidInputError(f"subject has {x.shape[-1]} features, model expects {fit.p}")
    return x


def dual_scores(fit: ModelFit, x) -> tuple[float, float]:
    """Prognostic score ``x @ beta`` and interaction score ``x @ xi``."""
    x = _check_x(fit, x)
    return float(x @ fit.beta), float(x @ fit.xi)


class Prediction(NamedTuple):
    log_odds: float
    prob: float
    label: int


def predict(fit: ModelFit, x, tau: float) -> Prediction:
    x = _check_x(fit, x)
    prognostic, interaction = dual_scores(fit, x)
    lo = prognostic + estimate_g(fit, interaction - tau)
    return Prediction(lo, sigmoid(lo), int(lo >= 0))


def predict_log_odds(fit: ModelFit, features, treatment) -> np.ndarray:
    """Vectorized log-odds for a batch of subjects."""
    X = np.atleast_2d(_check_x(fit, features))
    tau = np.asarray(treatment, dtype=np.float64).ravel()
    return X @ fit.beta + estimate_g(fit, X @ fit.xi - tau)


def optimal_treatment(
    fit: ModelFit, x, tau_min: float, tau_max: float, grid_size: int = 512
) -> tuple[float, float]:
    """Grid argmax over ``tau`` of ``g(x @ xi - tau)``; ties go to the lowest tau."""
    x = _check_x(fit, x)
    if not (math.isfinite(tau_min) and math.isfinite(tau_max) and tau_min < tau_max):
        raise InvalidInputError(f"invalid treatment range [{tau_min}, {tau_max}]")
    if grid_size < 2:
        raise InvalidInputError("grid_size must be at least 2")
    taus = np.linspace(tau_min, tau_max, int(grid_size))
    g = estimate_g(fit, float(x @ fit.xi) - taus)
    k = int(np.argmax(g))
    return float(taus[k]), float(g[k])


@dataclass(frozen=True)
class Heatmap:
    """Log-odds surface over (prognostic score, index - treatment)."""

    prognostic_axis: np.ndarray
    index_axis: np.ndarray
    values: np.ndarray


def heatmap_grid(
    fit: ModelFit,
    prognostic_range: Sequence[float],
    index_arg_range: Sequence[float],
    resolution: Sequence[int],
) -> Heatmap:
    """Cell ``(i, j)`` is ``prognostic_axis[i] + g(index_axis[j])``."""
    rows, cols = (int(r) for r in resolution)
    if rows < 1 or cols < 1:
        raise InvalidInputError("resolution must be positive")
    axes = []
    for (lo, hi), count in ((prognostic_range, rows), (index_arg_range, cols)):
        if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo or (count > 1 and hi == lo):
            raise InvalidInputError(f"invalid range ({lo}, {hi})")
        axes.append(np.linspace(lo, hi, count))
    g = estimate_g(fit, axes[1])
    return Heatmap(axes[0], axes[1], axes[0][:, None] + g[None, :])
