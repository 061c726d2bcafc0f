"""Derivative-free search over the unit sphere with a canonical sign.

All methods sample in the box ``[-1, 1]^p`` and map every candidate onto the
constraint set with :func:`project_to_constraint` before evaluating it. The
objective is treated as a black box that may return ``inf`` for candidates it
cannot score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidCandidateError, InvalidInputError

Objective = Callable[[np.ndarray], float]

DE_DEFAULTS = {"F": 0.8, "CR": 0.9}
TPE_DEFAULTS = {"gamma": 0.25, "n_startup": 24, "n_candidates": 24, "min_bandwidth": 1e-3}


def project_to_constraint(v) -> np.ndarray:
    """Scale ``v`` to unit length and flip it so its first nonzero entry is positive."""
    v = np.asarray(v, dtype=np.float64).ravel()
    if not np.all(np.isfinite(v)):
        raise InvalidCandidateError("candidate has non-finite entries")
    nz = np.flatnonzero(v)
    if nz.size == 0:
        raise InvalidCandidateError("the zero vector has no direction")
    # Prescale by the max magnitude so tiny or huge inputs do not under/overflow.
    v = v / np.abs(v).max()
    v = v / np.linalg.norm(v)
    if v[nz[0]] < 0:
        v = -v
    return v


@dataclass(frozen=True)
class SearchConfig:
    dimension: int
    budget: int = 200
    seed: int = 0
    method: str = "tpe"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "method", str(self.method).lower())
        if self.dimension < 1:
            raise InvalidInputError("dimension must be >= 1")
        if self.budget < 1:
            raise InvalidInputError("budget must be >= 1")
        if self.seed < 0:
            raise InvalidInputError("seed must be non-negative")
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown search method {self.method!r}")
        known = {"de": set(DE_DEFAULTS) | {"popsize"}, "tpe": set(TPE_DEFAULTS), "random": set()}
        unknown = set(self.params) - known[self.method]
        if unknown:
            raise InvalidInputError(f"unknown {self.method} parameters: {sorted(unknown)}")


@dataclass
class SearchResult:
    best_xi: np.ndarray
    best_value: float
    evaluations: int
    trace: list[tuple[int, float]]


class _Tracker:
    """Counts evaluations and keeps the best point seen so far."""

    def __init__(self, objective: Objective, budget: int):
        self.objective = objective
        self.budget = budget
        self.evaluations = 0
        self.best_xi: np.ndarray | None = None
        self.best_value = math.inf
        self.trace: list[tuple[int, float]] = []

    @property
    def exhausted(self) -> bool:
        return self.evaluations >= self.budget

    def __call__(self, v: np.ndarray) -> tuple[np.ndarray, float]:
        try:
            xi = project_to_constraint(v)
        except InvalidCandidateError:
            xi, value = None, math.inf
        else:
            value = float(self.objective(xi))
            if math.isnan(value):
                value = math.inf
        self.evaluations += 1
        if xi is not None and (self.best_xi is None or value < self.best_value):
            self.best_xi, self.best_value = xi, value
        self.trace.append((self.evaluations, self.best_value))
        return xi, value

    def result(self) -> SearchResult:
        if self.best_xi is None:
            raise InvalidCandidateError("no valid candidate was evaluated")
        return SearchResult(self.best_xi.copy(), self.best_value, self.evaluations, self.trace)


def _uniform(rng: np.random.Generator, p: int) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=p)


def random_minimize(objective: Objective, config: SearchConfig) -> SearchResult:
    rng = np.random.default_rng(config.seed)
    track = _Tracker(objective, config.budget)
    while not track.exhausted:
        track(_uniform(rng, config.dimension))
    return track.result()


def de_minimize(objective: Objective, config: SearchConfig) -> SearchResult:
    """DE/rand/1/bin in the box, stopping as soon as the budget is spent.

    Population members are stored as the projected points that were actually
    evaluated, so they stay inside the box on the unit sphere.
    """
    params = {**DE_DEFAULTS, **config.params}
    p = config.dimension
    pop_size = int(params.get("popsize", max(15, 4 * p)))
    F, CR = float(params["F"]), float(params["CR"])
    rng = np.random.default_rng(config.seed)
    track = _Tracker(objective, config.budget)

    pop = np.empty((pop_size, p))
    fitness = np.full(pop_size, math.inf)
    filled = 0
    while filled < pop_size and not track.exhausted:
        v = _uniform(rng, p)
        xi, value = track(v)
        pop[filled] = v if xi is None else xi
        fitness[filled] = value
        filled += 1
    if filled < pop_size:
        return track.result()

    idx = np.arange(pop_size)
    while not track.exhausted:
        for i in range(pop_size):
            if track.exhausted:
                break
            a, b, c = rng.choice(idx[idx != i], size=3, replace=False)
            mutant = np.clip(pop[a] + F * (pop[b] - pop[c]), -1.0, 1.0)
            cross = rng.random(p) < CR
            cross[rng.integers(p)] = True
            trial = np.where(cross, mutant, pop[i])
            xi, value = track(trial)
            if xi is not None and value <= fitness[i]:
                pop[i], fitness[i] = xi, value
    return track.result()


def _silverman(x: np.ndarray, floor: float) -> float:
    """Silverman's rule, floored at ``floor`` and at ``2 / min(100, m + 1)``.

    The count-dependent floor (box width over the number of points, capped at
    100) keeps a collapsing good set from freezing the search on near
    duplicates.
    """
    m = x.size
    floor = max(floor, 2.0 / min(100, m + 1))
    if m < 2:
        return max(floor, 1.0)
    sd = float(np.std(x, ddof=1))
    return max(floor, 1.06 * sd * m ** (-0.2))


def _log_parzen(points: np.ndarray, centers: np.ndarray, bws: np.ndarray) -> np.ndarray:
    """Sum over coordinates of log univariate Gaussian mixture densities.

    ``points`` is (k, p); ``centers`` is (m, p); ``bws`` is (p,).
    """
    t = (points[:, None, :] - centers[None, :, :]) / bws
    comp = -0.5 * t * t - np.log(bws) - 0.5 * math.log(2 * math.pi)
    top = comp.max(axis=1)
    dens = top + np.log(np.exp(comp - top[:, None, :]).mean(axis=1))
    return dens.sum(axis=1)


def tpe_minimize(objective: Objective, config: SearchConfig) -> SearchResult:
    """Tree-structured Parzen estimator with independent per-coordinate densities.

    The first ``n_startup`` candidates consume the random stream exactly as
    :func:`random_minimize` does.
    """
    params = {**TPE_DEFAULTS, **config.params}
    gamma = float(params["gamma"])
    n_startup = int(params["n_startup"])
    n_cand = int(params["n_candidates"])
    floor = float(params["min_bandwidth"])
    p = config.dimension
    rng = np.random.default_rng(config.seed)
    track = _Tracker(objective, config.budget)

    points: list[np.ndarray] = []
    values: list[float] = []
    while not track.exhausted:
        if len(points) < max(n_startup, 2):
            v = _uniform(rng, p)
        else:
            X = np.asarray(points)
            y = np.asarray(values)
            order = np.argsort(y, kind="stable")
            n_good = max(1, int(math.ceil(gamma * len(y))))
            good, bad = X[order[:n_good]], X[order[n_good:]]
            bw_good = np.array([_silverman(good[:, j], floor) for j in range(p)])
            bw_bad = np.array([_silverman(bad[:, j], floor) for j in range(p)])
            pick = rng.integers(n_good, size=(n_cand, p))
            cand = good[pick, np.arange(p)] + rng.normal(size=(n_cand, p)) * bw_good
            cand = np.clip(cand, -1.0, 1.0)
            score = _log_parzen(cand, good, bw_good) - _log_parzen(cand, bad, bw_bad)
            v = cand[int(np.argmax(score))]
        xi, value = track(v)
        points.append(v if xi is None else xi)
        values.append(value if math.isfinite(value) else np.finfo(float).max)
    return track.result()


METHODS = {"de": de_minimize, "tpe": tpe_minimize, "random": random_minimize}


def minimize(objective: Objective, config: SearchConfig) -> SearchResult:
    return METHODS[config.method](objective, config)
