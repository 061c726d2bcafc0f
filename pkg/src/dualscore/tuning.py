"""K-fold selection of bandwidth and lasso penalty."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from sklearn.model_selection import KFold, StratifiedKFold

from .config import RunConfig
from .errors import DualScoreError, NumericFailure
from .model import Dataset, fit, log_odds_targets, predict_log_odds

logger = logging.getLogger(__name__)


@dataclass
class CVResult:
    best_h: float
    best_lambda: float
    # rows of (h, lambda, mean held-out squared error, failed folds)
    table: list[tuple[float, float, float, int]]


def fold_indices(dataset: Dataset, folds: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Seeded folds, stratified on hard labels when both classes are present."""
    y = dataset.hard_labels
    if y is not None and np.bincount(y, minlength=2).min() >= folds:
        splitter = StratifiedKFold(folds, shuffle=True, random_state=seed)
        return list(splitter.split(dataset.features, y))
    return list(KFold(folds, shuffle=True, random_state=seed).split(dataset.features))


def cross_validate(dataset: Dataset, config: RunConfig) -> CVResult:
    """Grid search scored by held-out squared error on the log-odds scale.

    Ties go to the smaller bandwidth, then the smaller penalty. A cell whose
    folds all fail scores ``inf``.
    """
    h_grid, lam_grid = config.grid()
    splits = fold_indices(dataset, config.cv_folds, config.seed)
    smallest = min(len(test) for _, test in splits)
    if smallest < 2 * dataset.p:
        logger.warning("smallest CV fold has %d rows, fewer than 2p = %d", smallest, 2 * dataset.p)
    targets = log_odds_targets(dataset, config.fit.prob_clip)
    table = []
    for h in h_grid:
        for lam in lam_grid:
            cfg = config.fit.replace(bandwidth=h, lasso_penalty=lam)
            errors, failed = [], 0
            for train, test in splits:
                try:
                    model = fit(dataset.subset(train), cfg)
                except DualScoreError as exc:
                    failed += 1
                    logger.warning("CV fit failed at h=%g lambda=%g: %s", h, lam, exc)
                    continue
                pred = predict_log_odds(model, dataset.features[test], dataset.treatment[test])
                errors.append(float(np.mean((pred - targets[test]) ** 2)))
            score = float(np.mean(errors)) if errors else math.inf
            table.append((float(h), float(lam), score, failed))
    best = min(table, key=lambda row: (row[2], row[0], row[1]))
    if not math.isfinite(best[2]):
        raise NumericFailure("every cross-validation cell failed")
    return CVResult(best[0], best[1], table)
