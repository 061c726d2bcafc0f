"""CSV ingestion and preprocessing into :class:`~dualscore.model.Dataset`."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, SchemaError
from .model import Dataset

logger = logging.getLogger(__name__)

ROLES = ("continuous", "categorical", "binary", "treatment", "outcome", "soft_label", "ignore")
POLICIES = ("drop_row", "fill_mean", "fill_mode")
MISSING = {"", "na", "nan", "null", "none"}


@dataclass
class ColumnSpec:
    name: str
    role: str
    missing: str = "drop_row"
    standardize: bool = False


@dataclass
class SchemaSpec:
    """Role and missing-value policy for every used column.

    Columns of the CSV that are not listed are ignored. ``soft_label`` marks
    an optional column of outcome probabilities (e.g. simulated truth or an
    earlier distillation run). A ``treatment`` column may carry the extra flag
    ``standardize``.
    """

    columns: list[ColumnSpec]

    def __post_init__(self):
        for c in self.columns:
            if c.role not in ROLES:
                raise SchemaError(f"column {c.name!r}: unknown role {c.role!r}")
            if c.missing not in POLICIES:
                raise SchemaError(f"column {c.name!r}: unknown missing-value policy {c.missing!r}")
        for role in ("treatment", "outcome"):
            n = sum(c.role == role for c in self.columns)
            if n != 1:
                raise SchemaError(f"schema needs exactly one {role} column, found {n}")
        if not self.features:
            raise SchemaError("schema needs at least one feature column")
        if sum(c.role == "soft_label" for c in self.columns) > 1:
            raise SchemaError("schema allows at most one soft_label column")

    @property
    def features(self) -> list[ColumnSpec]:
        return [c for c in self.columns if c.role in ("continuous", "categorical", "binary")]

    def role(self, role: str) -> ColumnSpec | None:
        return next((c for c in self.columns if c.role == role), None)

    @classmethod
    def parse(cls, text: str) -> "SchemaSpec":
        """Parse ``name = role [policy] [standardize]`` lines; ``#`` starts a comment."""
        cols = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SchemaError(f"schema line {lineno}: expected 'name = role [policy]'")
            name, rest = (s.strip() for s in line.split("=", 1))
            words = rest.split()
            if not words:
                raise SchemaError(f"schema line {lineno}: missing role for {name!r}")
            missing = next((w for w in words[1:] if w in POLICIES), "drop_row")
            cols.append(ColumnSpec(name, words[0], missing, "standardize" in words[1:]))
        return cls(cols)

    @classmethod
    def load(cls, path) -> "SchemaSpec":
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    def format(self) -> str:
        lines = []
        for c in self.columns:
            extra = " standardize" if c.standardize else ""
            lines.append(f"{c.name} = {c.role} {c.missing}{extra}")
        return "\n".join(lines) + "\n"


@dataclass
class Table:
    """Typed columns after missing-value handling.

    Numeric columns are float arrays; categorical columns are string arrays.
    """

    columns: dict[str, np.ndarray]
    n_rows: int
    dropped_rows: int = 0


def _parse_float(cell: str, row: int, col: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"row {row}, column {col!r}: cannot parse {cell!r} as a number") from None
    if not math.isfinite(value):
        raise DataError(f"row {row}, column {col!r}: non-finite value {cell!r}")
    return value


def load_csv(path, schema: SchemaSpec) -> Table:
    """Read a headed UTF-8 CSV and apply the schema's missing-value policies."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: file is empty")
        header = [h.strip() for h in header]
        records = [r for r in reader if any(cell.strip() for cell in r)]
    if not records:
        raise DataError(f"{path}: no data rows")
    used = [c for c in schema.columns if c.role != "ignore"]
    missing_cols = [c.name for c in used if c.name not in header]
    if missing_cols:
        raise SchemaError(f"{path}: missing required column(s): {', '.join(missing_cols)}")

    raw: dict[str, list] = {}
    for spec in used:
        j = header.index(spec.name)
        vals = []
        for i, rec in enumerate(records, start=2):
            cell = rec[j].strip() if j < len(rec) else ""
            if cell.lower() in MISSING:
                vals.append(None)
            elif spec.role == "categorical":
                vals.append(cell)
            else:
                vals.append(_parse_float(cell, i, spec.name))
        raw[spec.name] = vals

    keep = np.ones(len(records), dtype=bool)
    for spec in used:
        if spec.missing == "drop_row" or spec.role in ("treatment", "outcome", "soft_label"):
            keep &= np.array([v is not None for v in raw[spec.name]])
    columns = {}
    for spec in used:
        vals = [v for v, k in zip(raw[spec.name], keep) if k]
        present = [v for v in vals if v is not None]
        if not present:
            raise DataError(f"column {spec.name!r} has no usable values")
        if spec.missing == "fill_mean" and spec.role != "categorical":
            fill = float(np.mean(present))
        else:
            levels, counts = np.unique(np.asarray(present, dtype=object).astype(str), return_counts=True)
            fill = levels[np.argmax(counts)]
            if spec.role != "categorical":
                fill = float(fill)
        vals = [fill if v is None else v for v in vals]
        dtype = object if spec.role == "categorical" else float
        columns[spec.name] = np.asarray(vals, dtype=dtype)
    n_rows = int(keep.sum())
    dropped = len(records) - n_rows
    if n_rows == 0:
        raise DataError(f"{path}: every row was dropped by the missing-value policy")
    logger.info("loaded %s: %d rows kept, %d dropped, %d columns", path, n_rows, dropped, len(used))
    return Table(columns, n_rows, dropped)


@dataclass
class TransformRecord:
    """Training-split statistics reused to encode new rows identically."""

    means: dict[str, float] = field(default_factory=dict)
    sds: dict[str, float] = field(default_factory=dict)
    levels: dict[str, list[str]] = field(default_factory=dict)
    dropped: list[str] = field(default_factory=list)
    treatment_mean: float = 0.0
    treatment_sd: float = 1.0
    feature_names: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "TransformRecord":
        return cls(**d)


def fit_transform(table: Table, schema: SchemaSpec, rows=None) -> TransformRecord:
    """Collect standardization and level statistics from ``rows`` of ``table``."""
    rows = np.arange(table.n_rows) if rows is None else np.asarray(rows)
    rec = TransformRecord()
    for spec in schema.features:
        col = table.columns[spec.name][rows]
        if spec.role == "continuous":
            sd = float(np.std(col, ddof=1)) if col.size > 1 else 0.0
            if not sd > 0:
                logger.warning("dropping zero-variance continuous column %r", spec.name)
                rec.dropped.append(spec.name)
                continue
            rec.means[spec.name] = float(np.mean(col))
            rec.sds[spec.name] = sd
            rec.feature_names.append(spec.name)
        elif spec.role == "categorical":
            levels = sorted(set(col.astype(str)))
            rec.levels[spec.name] = levels
            rec.feature_names.extend(f"{spec.name}={lv}" for lv in levels[1:])
        else:
            rec.feature_names.append(spec.name)
    tspec = schema.role("treatment")
    if tspec.standardize:
        tau = table.columns[tspec.name][rows]
        rec.treatment_mean = float(np.mean(tau))
        rec.treatment_sd = float(np.std(tau, ddof=1))
        if not rec.treatment_sd > 0:
            raise DataError("treatment column has zero variance")
    return rec


def apply_transform(table: Table, schema: SchemaSpec, rec: TransformRecord, rows=None) -> Dataset:
    rows = np.arange(table.n_rows) if rows is None else np.asarray(rows)
    blocks = []
    for spec in schema.features:
        if spec.name in rec.dropped:
            continue
        col = table.columns[spec.name][rows]
        if spec.role == "continuous":
            blocks.append(((col - rec.means[spec.name]) / rec.sds[spec.name])[:, None])
        elif spec.role == "categorical":
            levels = rec.levels[spec.name]
            col = col.astype(str)
            unseen = ~np.isin(col, levels)
            if unseen.any():
                logger.warning("column %r: %d row(s) with unseen categories encoded as all zeros",
                               spec.name, int(unseen.sum()))
            blocks.append(np.column_stack([col == lv for lv in levels[1:]]).astype(float)
                          if len(levels) > 1 else np.zeros((rows.size, 0)))
        else:
            if not np.all(np.isin(col, (0.0, 1.0))):
                raise DataError(f"binary column {spec.name!r} has values other than 0/1")
            blocks.append(col[:, None])
    X = np.hstack(blocks) if blocks else np.zeros((rows.size, 0))
    tspec = schema.role("treatment")
    tau = (table.columns[tspec.name][rows] - rec.treatment_mean) / rec.treatment_sd
    y = table.columns[schema.role("outcome").name][rows]
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise DataError("outcome column must be binary 0/1")
    soft = None
    sspec = schema.role("soft_label")
    if sspec is not None:
        soft = table.columns[sspec.name][rows]
        if not np.all((soft >= 0) & (soft <= 1)):
            raise DataError(f"soft label column {sspec.name!r} must lie in [0, 1]")
    return Dataset(X, tau, soft, y.astype(int), rec.feature_names)


def preprocess(table: Table, schema: SchemaSpec, train_rows=None) -> tuple[Dataset, TransformRecord]:
    """Encode all rows using statistics from ``train_rows`` (default: all rows).

    Continuous columns are standardized with the sample standard deviation,
    categorical columns are one-hot encoded with the first (sorted) level
    dropped, and binary columns pass through.
    """
    rec = fit_transform(table, schema, train_rows)
    return apply_transform(table, schema, rec), rec
