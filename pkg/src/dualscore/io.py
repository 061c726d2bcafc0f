"""Text formats: fitted models, heatmap grids and delimited tables.

Floats are written with ``repr``, which is the shortest decimal string that
round-trips to the same double.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError
from .kernels import Kernel
from .model import Heatmap, ModelFit

MODEL_HEADER = "# dualscore-model v1"
_ARRAYS = ("beta", "xi", "train_index", "link_residuals")
_SCALARS = ("bandwidth", "lasso_penalty", "index_scale", "objective_value")


def atomic_write(path, text: str) -> Path:
    """Write ``text`` to a temp file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt(values: Iterable[float]) -> str:
    return ",".join(repr(float(v)) for v in values)


def format_model(fit: ModelFit) -> str:
    lines = [MODEL_HEADER, f"kernel = {fit.kernel.value}"]
    lines += [f"{k} = {float(getattr(fit, k))!r}" for k in _SCALARS]
    lines.append(f"evaluations = {fit.evaluations}")
    lines.append(f"rank_deficient = {int(fit.rank_deficient)}")
    lines.append(f"feature_names = {','.join(fit.feature_names)}")
    for name in _ARRAYS:
        arr = getattr(fit, name)
        lines.append(f"{name}[{arr.size}] = {_fmt(arr)}")
    return "\n".join(lines) + "\n"


def parse_model(text: str) -> ModelFit:
    lines = text.splitlines()
    if not lines or lines[0].strip() != MODEL_HEADER:
        raise DataError("not a dualscore model file (missing or unsupported version header)")
    fields = {}
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip() or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"model file line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        fields[key] = val
    arrays = {}
    for name in _ARRAYS:
        key = next((k for k in fields if k.startswith(name + "[")), None)
        if key is None:
            raise DataError(f"model file is missing {name}")
        size = int(key[len(name) + 1: -1])
        arr = np.array([float(v) for v in fields[key].split(",")] if size else [], dtype=float)
        if arr.size != size:
            raise DataError(f"model file: {name} declares {size} values but has {arr.size}")
        arrays[name] = arr
    names = fields.get("feature_names", "")
    return ModelFit(
        **arrays,
        kernel=Kernel.parse(fields["kernel"]),
        **{k: float(fields[k]) for k in _SCALARS},
        feature_names=tuple(names.split(",")) if names else (),
        evaluations=int(fields.get("evaluations", 0)),
        rank_deficient=bool(int(fields.get("rank_deficient", 0))),
    )


def save_model(fit: ModelFit, path) -> Path:
    return atomic_write(path, format_model(fit))


def load_model(path) -> ModelFit:
    return parse_model(Path(path).read_text(encoding="utf-8"))


def format_heatmap(hm: Heatmap, delimiter: str = ",") -> str:
    """Two axis lines (rows, then columns) followed by one line per grid row."""
    lines = [
        delimiter.join(["prognostic", *(repr(float(v)) for v in hm.prognostic_axis)]),
        delimiter.join(["index_arg", *(repr(float(v)) for v in hm.index_axis)]),
    ]
    lines += [delimiter.join(repr(float(v)) for v in row) for row in hm.values]
    return "\n".join(lines) + "\n"


def parse_heatmap(text: str, delimiter: str = ",") -> Heatmap:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) < 3:
        raise DataError("heatmap file needs two axis lines and at least one grid row")
    rows_axis = np.array([float(v) for v in lines[0].split(delimiter)[1:]])
    cols_axis = np.array([float(v) for v in lines[1].split(delimiter)[1:]])
    values = np.array([[float(v) for v in ln.split(delimiter)] for ln in lines[2:]])
    if values.shape != (rows_axis.size, cols_axis.size):
        raise DataError(f"heatmap grid shape {values.shape} does not match its axes")
    return Heatmap(rows_axis, cols_axis, values)


def format_table(header: Sequence[str], rows: Iterable[Sequence], delimiter: str = ",") -> str:
    def cell(v):
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        return str(v)

    out = [delimiter.join(header)]
    out += [delimiter.join(cell(v) for v in row) for row in rows]
    return "\n".join(out) + "\n"


def read_table(path, delimiter: str = ",") -> tuple[list[str], list[list[str]]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DataError(f"{path}: empty table")
    return lines[0].split(delimiter), [ln.split(delimiter) for ln in lines[1:] if ln]


TRUTH_HEADER = "# dualscore-truth v1"


def format_truth(truth) -> str:
    return "\n".join([
        TRUTH_HEADER,
        f"scenario = {truth.scenario_id}",
        f"beta = {_fmt(truth.beta_true)}",
        f"xi = {_fmt(truth.xi_true)}",
    ]) + "\n"


def parse_truth(text: str):
    from .simulation import ScenarioTruth

    lines = text.splitlines()
    if not lines or lines[0].strip() != TRUTH_HEADER:
        raise DataError("not a dualscore truth file (bad header)")
    kv = dict((s.strip() for s in ln.split("=", 1)) for ln in lines[1:] if "=" in ln)
    try:
        return ScenarioTruth(
            int(kv["scenario"]),
            np.array([float(v) for v in kv["beta"].split(",")]),
            np.array([float(v) for v in kv["xi"].split(",")]),
        )
    except KeyError as exc:
        raise DataError(f"truth file is missing {exc.args[0]!r}") from None
