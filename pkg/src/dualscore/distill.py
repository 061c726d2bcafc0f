"""Soft labels from binary outcomes.

An expert classifier (gradient-boosted regression trees with logistic loss)
is trained on minority-oversampled data, and its probabilities on the
original rows replace the hard labels so that log-odds targets exist.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import rankdata

from .errors import InvalidInputError
from .model import DEFAULT_PROB_CLIP, Dataset, sigmoid

FORMAT_HEADER = "# dualscore-expert v1"


def _binary(labels) -> np.ndarray:
    y = np.asarray(labels).ravel()
    if not np.all(np.isin(y, (0, 1))):
        raise InvalidInputError("labels must be 0/1")
    return y.astype(np.int64)


def smote(features, labels, k_neighbors: int = 5, target_ratio: float = 1.0, seed: int = 0):
    """Synthetic minority oversampling.

    Synthetic rows are appended after the original ones until the minority to
    majority ratio reaches ``target_ratio``. Each synthetic row lies on the
    segment between a random minority row and one of its ``k_neighbors``
    nearest minority neighbours.
    """
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = _binary(labels)
    if X.shape[0] != y.size:
        raise InvalidInputError("features and labels have different lengths")
    counts = np.bincount(y, minlength=2)
    if counts.min() == 0:
        raise InvalidInputError("SMOTE needs both classes present")
    minority = int(np.argmin(counts)) if counts[0] != counts[1] else 1
    minor = X[y == minority]
    if minor.shape[0] <= 1:
        raise InvalidInputError("SMOTE needs at least two minority rows")
    needed = int(round(target_ratio * counts[1 - minority])) - minor.shape[0]
    if needed <= 0:
        return X.copy(), y.copy()
    k = min(int(k_neighbors), minor.shape[0] - 1)
    if k < 1:
        raise InvalidInputError("k_neighbors must be >= 1")
    _, nbrs = cKDTree(minor).query(minor, k=k + 1)
    nbrs = nbrs[:, 1:]
    rng = np.random.default_rng(seed)
    base = rng.integers(minor.shape[0], size=needed)
    partner = nbrs[base, rng.integers(k, size=needed)]
    gap = rng.random(needed)[:, None]
    synth = minor[base] + gap * (minor[partner] - minor[base])
    return np.vstack([X, synth]), np.concatenate([y, np.full(needed, minority)])


@dataclass
class Tree:
    """Regression tree stored as parallel arrays in preorder.

    Internal nodes have ``feature >= 0``; leaves have ``feature == -1`` and a
    ``value``. Rows with ``x[feature] <= threshold`` go left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            f = self.feature[node[idx]]
            go_left = X[idx, f] <= self.threshold[node[idx]]
            node[idx] = np.where(go_left, self.left[node[idx]], self.right[node[idx]])
            active = self.feature[node] >= 0
        return self.value[node]


@dataclass
class ExpertModel:
    trees: list[Tree]
    learning_rate: float
    base_score: float
    feature_count: int

    def raw_score(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.feature_count:
            raise InvalidInputError(
                f"expert expects {self.feature_count} features, got {X.shape[1]}"
            )
        out = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out


def _best_split(X, grad, hess_unused, min_leaf):
    """Exact greedy split minimising squared error of ``grad`` over all features."""
    m, p = X.shape
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    gs = grad[order]
    csum = np.cumsum(gs, axis=0)[:-1]
    total = gs.sum(axis=0)
    nl = np.arange(1, m)[:, None].astype(float)
    nr = m - nl
    gain = csum**2 / nl + (total - csum) ** 2 / nr - total**2 / m
    valid = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
    gain = np.where(valid, gain, -np.inf)
    flat = int(np.argmax(gain))
    pos, feat = divmod(flat, p)
    if not np.isfinite(gain[pos, feat]) or gain[pos, feat] <= 1e-12:
        return None
    return feat, 0.5 * (xs[pos, feat] + xs[pos + 1, feat])


def _grow(X, grad, hess, depth, l2, min_leaf):
    feats, thrs, lefts, rights, vals = [], [], [], [], []

    def build(rows, level):
        node = len(feats)
        feats.append(-1)
        thrs.append(0.0)
        lefts.append(-1)
        rights.append(-1)
        vals.append(-grad[rows].sum() / (hess[rows].sum() + l2))
        if level >= depth or rows.size < 2 * min_leaf:
            return node
        split = _best_split(X[rows], grad[rows], hess[rows], min_leaf)
        if split is None:
            return node
        f, t = split
        mask = X[rows, f] <= t
        feats[node], thrs[node] = f, t
        lefts[node] = build(rows[mask], level + 1)
        rights[node] = build(rows[~mask], level + 1)
        return node

    build(np.arange(X.shape[0]), 0)
    return Tree(
        np.asarray(feats, dtype=np.int64),
        np.asarray(thrs, dtype=float),
        np.asarray(lefts, dtype=np.int64),
        np.asarray(rights, dtype=np.int64),
        np.asarray(vals, dtype=float),
    )


def logistic_loss(labels, raw) -> float:
    y = np.asarray(labels, dtype=float)
    return float(np.mean(np.logaddexp(0.0, raw) - y * raw))


def train_expert(
    features,
    labels,
    rounds: int = 200,
    depth: int = 4,
    learning_rate: float = 0.1,
    seed: int = 0,
    l2: float = 1.0,
    min_leaf: int = 1,
) -> ExpertModel:
    """Gradient boosting with logistic loss and Newton leaf values.

    Each round fits a depth-limited tree to the gradient ``p - y`` with exact
    greedy squared-error splits; leaves take ``-sum(grad) / (sum(hess) + l2)``.
    Training is deterministic; ``seed`` is accepted for interface symmetry.
    """
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = _binary(labels)
    if X.shape[0] != y.size:
        raise InvalidInputError("features and labels have different lengths")
    if y.size < 10:
        raise InvalidInputError("the expert needs at least 10 training rows")
    if y.min() == y.max():
        raise InvalidInputError("the expert needs both classes present")
    if rounds < 0 or depth < 1 or not learning_rate > 0:
        raise InvalidInputError("invalid boosting hyperparameters")
    mean = y.mean()
    base = math.log(mean / (1 - mean))
    raw = np.full(y.size, base)
    trees = []
    for _ in range(int(rounds)):
        prob = sigmoid(raw)
        grad = prob - y
        hess = prob * (1 - prob)
        tree = _grow(X, grad, hess, int(depth), float(l2), int(min_leaf))
        trees.append(tree)
        raw = raw + learning_rate * tree.predict(X)
    return ExpertModel(trees, float(learning_rate), base, X.shape[1])


def expert_probabilities(model: ExpertModel, features) -> np.ndarray:
    return sigmoid(model.raw_score(features))


def soft_label_dataset(
    dataset: Dataset, expert: ExpertModel, prob_clip: float = DEFAULT_PROB_CLIP
) -> Dataset:
    """Copy of ``dataset`` whose soft probabilities come from ``expert``."""
    if dataset.p != expert.feature_count:
        raise InvalidInputError(
            f"expert was trained on {expert.feature_count} features, dataset has {dataset.p}"
        )
    if not 0 < prob_clip < 0.5:
        raise InvalidInputError("prob_clip must lie in (0, 0.5)")
    probs = np.clip(expert_probabilities(expert, dataset.features), prob_clip, 1 - prob_clip)
    return Dataset(dataset.features, dataset.treatment, probs, dataset.hard_labels,
                   dataset.feature_names)


def distill(
    dataset: Dataset,
    rounds: int = 200,
    depth: int = 4,
    learning_rate: float = 0.1,
    k_neighbors: int = 5,
    seed: int = 0,
    prob_clip: float = DEFAULT_PROB_CLIP,
) -> tuple[Dataset, ExpertModel]:
    """Oversample, train the expert and attach soft labels to the original rows."""
    if dataset.hard_labels is None:
        raise InvalidInputError("distillation needs hard labels")
    X, y = smote(dataset.features, dataset.hard_labels, k_neighbors, 1.0, seed)
    expert = train_expert(X, y, rounds, depth, learning_rate, seed)
    return soft_label_dataset(dataset, expert, prob_clip), expert


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    recall: float
    f1: float
    auc: float


def auc_score(labels, scores) -> float:
    """Mann-Whitney AUC with half credit for ties."""
    y = _binary(labels)
    n1 = int(y.sum())
    n0 = y.size - n1
    if n1 == 0 or n0 == 0:
        raise InvalidInputError("AUC is undefined when only one class is present")
    ranks = rankdata(np.asarray(scores, dtype=float))
    return float((ranks[y == 1].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))


def classification_metrics(labels, probabilities, threshold: float = 0.5) -> MetricsReport:
    """Threshold metrics (positive at ``prob >= threshold``) plus AUC.

    With a single class present, AUC is reported as NaN.
    """
    y = _binary(labels)
    prob = np.asarray(probabilities, dtype=float).ravel()
    if prob.size != y.size:
        raise InvalidInputError("labels and probabilities have different lengths")
    pred = prob >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    try:
        auc = auc_score(y, prob)
    except InvalidInputError:
        auc = math.nan
    return MetricsReport(precision, recall, f1, auc)


def format_expert(model: ExpertModel) -> str:
    lines = [
        FORMAT_HEADER,
        f"base_score = {model.base_score!r}",
        f"learning_rate = {model.learning_rate!r}",
        f"feature_count = {model.feature_count}",
        f"trees = {len(model.trees)}",
    ]
    for i, t in enumerate(model.trees):
        lines.append(f"tree {i} {t.feature.size}")
        for f, th, lft, rgt, v in zip(t.feature, t.threshold, t.left, t.right, t.value):
            lines.append(f"{int(f)} {float(th)!r} {int(lft)} {int(rgt)} {float(v)!r}")
    return "\n".join(lines) + "\n"


def parse_expert(text: str) -> ExpertModel:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != FORMAT_HEADER:
        raise InvalidInputError("not a dualscore expert file (bad header)")
    head = {}
    pos = 1
    while pos < len(lines) and "=" in lines[pos]:
        key, val = lines[pos].split("=", 1)
        head[key.strip()] = val.strip()
        pos += 1
    trees = []
    for _ in range(int(head["trees"])):
        _, _, size = lines[pos].split()
        rows = [ln.split() for ln in lines[pos + 1: pos + 1 + int(size)]]
        pos += 1 + int(size)
        cols = list(zip(*rows))
        trees.append(Tree(
            np.array(cols[0], dtype=np.int64), np.array(cols[1], dtype=float),
            np.array(cols[2], dtype=np.int64), np.array(cols[3], dtype=np.int64),
            np.array(cols[4], dtype=float),
        ))
    return ExpertModel(trees, float(head["learning_rate"]), float(head["base_score"]),
                       int(head["feature_count"]))
