"""Command-line entry point: ``dualscore <subcommand> ...``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure. On
failure a single ``error: <kind>: <message>`` line goes to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import RunConfig, load_config
from .data import SchemaSpec, TransformRecord, apply_transform, fit_transform, load_csv
from .errors import DualScoreError, InvalidInputError
from .model import Heatmap, fit, heatmap_grid, optimal_treatment, dual_scores, predict_log_odds, sigmoid

logger = logging.getLogger("dualscore")


def _pair(text: str) -> tuple[float, float]:
    parts = [p for p in text.split(",") if p.strip()]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}")
    return float(parts[0]), float(parts[1])


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _run_config(path) -> RunConfig:
    return load_config(path) if path else RunConfig()


def _schema_for(data: Path, schema: str | None) -> SchemaSpec:
    path = Path(schema) if schema else data.with_name("schema.txt")
    if not path.exists():
        raise InvalidInputError(f"no schema given and {path} does not exist")
    return SchemaSpec.load(path)


def _write(path: Path, text: str) -> Path:
    io.atomic_write(path, text)
    logger.info("wrote %s", path)
    return path


# -- subcommands -------------------------------------------------------------


def cmd_simulate(args) -> None:
    from .simulation import generate_scenario

    sample = generate_scenario(args.scenario, args.n, args.seed)
    d = sample.dataset
    out = Path(args.out)
    header = [*d.feature_names, "tau", "y", "soft_prob"]
    rows = [[*x, t, int(y), p] for x, t, y, p in
            zip(d.features, d.treatment, d.hard_labels, d.soft_probs)]
    _write(out / "data.csv", io.format_table(header, rows))
    _write(out / "truth.txt", io.format_truth(sample.truth))
    roles = ["binary" if np.all(np.isin(d.features[:, j], (0, 1))) else "continuous"
             for j in range(d.p)]
    schema = "".join(f"{name} = {role}\n" for name, role in zip(d.feature_names, roles))
    schema += "tau = treatment\ny = outcome\nsoft_prob = soft_label\n"
    _write(out / "schema.txt", schema)
    print(f"simulated scenario={args.scenario} n={args.n} seed={args.seed} -> {out}")


def _split(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    k = min(n - 1, max(2, int(round(fraction * n))))
    return np.sort(perm[:k]), np.sort(perm[k:])


def cmd_fit(args) -> None:
    from .distill import classification_metrics, distill, expert_probabilities, format_expert
    from .tuning import cross_validate

    data = Path(args.data)
    schema = _schema_for(data, args.schema)
    cfg = _run_config(args.config)
    out = Path(args.out)
    table = load_csv(data, schema)
    train_rows, test_rows = _split(table.n_rows, cfg.train_fraction, cfg.seed)
    rec = fit_transform(table, schema, train_rows)
    train = apply_transform(table, schema, rec, train_rows)
    test = apply_transform(table, schema, rec, test_rows)
    diagnostics = {"train_rows": train.n, "test_rows": test.n, "features": train.p,
                   "dropped_rows": table.dropped_rows}

    expert = None
    if train.soft_probs is None:
        logger.info("no soft labels: distilling from an expert classifier")
        train, expert = distill(train, cfg.distill_rounds, cfg.distill_depth,
                                cfg.distill_learning_rate, cfg.smote_k, cfg.seed,
                                cfg.fit.prob_clip)
        _write(out / "expert.txt", format_expert(expert))
        diagnostics["distilled"] = 1
    else:
        logger.info("soft labels present: skipping distillation")
        diagnostics["distilled"] = 0

    fit_cfg = cfg.fit
    if cfg.tuning:
        cv = cross_validate(train, cfg)
        _write(out / "cv.csv", io.format_table(["h", "lambda", "cv_mse", "failed_folds"], cv.table))
        fit_cfg = fit_cfg.replace(bandwidth=cv.best_h, lasso_penalty=cv.best_lambda)
        diagnostics.update(cv_best_h=cv.best_h, cv_best_lambda=cv.best_lambda)

    model = fit(train, fit_cfg)
    io.save_model(model, out / "model.txt")
    _write(out / "transform.json", json.dumps(rec.to_dict(), indent=1, sort_keys=True) + "\n")
    diagnostics.update(objective=model.objective_value, evaluations=model.evaluations,
                       rank_deficient=int(model.rank_deficient),
                       smoothing_fallbacks=model.smoothing_fallbacks,
                       bandwidth=model.bandwidth, lasso_penalty=model.lasso_penalty)
    if test.n and test.hard_labels is not None:
        probs = sigmoid(predict_log_odds(model, test.features, test.treatment))
        m = classification_metrics(test.hard_labels, probs)
        diagnostics.update({f"test_{k}": v for k, v in m.__dict__.items()})
        if expert is not None:
            e = classification_metrics(test.hard_labels, expert_probabilities(expert, test.features))
            diagnostics.update({f"expert_test_{k}": v for k, v in e.__dict__.items()})
    _write(out / "diagnostics.txt", "".join(f"{k} = {v}\n" for k, v in diagnostics.items()))
    print(f"fitted model objective={model.objective_value:.6g} -> {out / 'model.txt'}")


def cmd_evaluate(args) -> None:
    from .distill import classification_metrics
    from .simulation import g_mse

    model = io.load_model(args.model)
    if args.truth:
        truth = io.parse_truth(Path(args.truth).read_text(encoding="utf-8"))
        result = {"g_mse": float(g_mse(model, truth, args.grid))}
    else:
        data = Path(args.data)
        schema = _schema_for(data, args.schema)
        transform = Path(args.transform) if args.transform else Path(args.model).with_name("transform.json")
        rec = TransformRecord.from_dict(json.loads(transform.read_text(encoding="utf-8")))
        ds = apply_transform(load_csv(data, schema), schema, rec)
        probs = sigmoid(predict_log_odds(model, ds.features, ds.treatment))
        result = classification_metrics(ds.hard_labels, probs, args.threshold).__dict__
    text = "".join(f"{k} = {v!r}\n" for k, v in result.items())
    if args.out:
        _write(Path(args.out), text)
    sys.stdout.write(text)


def cmd_heatmap(args) -> None:
    model = io.load_model(args.model)
    index_range = args.index_range or tuple(np.quantile(model.train_index, [0.025, 0.975]))
    hm = heatmap_grid(model, args.prognostic_range, index_range, (args.rows, args.cols))
    out = Path(args.out)
    _write(out, io.format_heatmap(hm))
    if not args.no_figure:
        from .plotting import heatmap_figure

        heatmap_figure(hm, out.with_suffix(".png"))
    print(f"heatmap {args.rows}x{args.cols} -> {out}")


def cmd_bootstrap(args) -> None:
    from .simulation import bootstrap_ci

    data = Path(args.data)
    schema = _schema_for(data, args.schema)
    cfg = _run_config(args.config)
    table = load_csv(data, schema)
    rec = fit_transform(table, schema)
    ds = apply_transform(table, schema, rec)
    if ds.soft_probs is None:
        from .distill import distill

        ds, _ = distill(ds, cfg.distill_rounds, cfg.distill_depth, cfg.distill_learning_rate,
                        cfg.smote_k, cfg.seed, cfg.fit.prob_clip)
    res = bootstrap_ci(ds, cfg.fit, args.k, args.level, cfg.seed)
    rows = [[vec, c.name, c.estimate, c.low, c.high]
            for vec, coefs in (("beta", res.beta), ("xi", res.xi)) for c in coefs]
    out = Path(args.out)
    _write(out / "intervals.csv", io.format_table(["vector", "feature", "estimate", "low", "high"], rows))
    if not args.no_figure:
        from .plotting import interval_figure

        interval_figure(res, out / "intervals.png")
    print(f"bootstrap k={args.k} level={args.level} failures={res.failures} -> {out}")


def cmd_benchmark(args) -> None:
    from .benchmark import benchmark_optimizers, default_configs, summarize, summary_rows

    cfg = _run_config(args.config)
    configs = default_configs(cfg.fit.bandwidth, cfg.fit.lasso_penalty)
    methods = [m.strip().lower() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in configs]
    if unknown:
        raise InvalidInputError(f"unknown method(s): {', '.join(unknown)}")
    for m in methods:
        if args.budget:
            configs[m] = configs[m].replace(optimizer_budget=args.budget)
    records = benchmark_optimizers(args.scenario, args.sizes, args.reps,
                                   {m: configs[m] for m in methods}, cfg.seed)
    out = Path(args.out)
    _write(out / "runs.csv", io.format_table(
        ["method", "n", "rep", "runtime_s", "objective", "heatmap_mse", "error"],
        [[r.method, r.n, r.rep, r.runtime_s, r.objective, r.heatmap_mse, r.error] for r in records],
    ))
    summary = summarize(records)
    header, rows = summary_rows(summary)
    _write(out / "summary.csv", io.format_table(header, rows))
    if not args.no_figure:
        from .plotting import benchmark_figure

        benchmark_figure(summary, out / "benchmark.png")
    print(f"benchmark scenario={args.scenario} cells={len(records)} -> {out}")


def cmd_converge(args) -> None:
    from .simulation import convergence_experiment, truth_heatmap

    cfg = _run_config(args.config)
    scenario = args.scenario or cfg.scenario
    sizes = args.sizes or list(cfg.sizes)
    reps = args.reps or cfg.reps
    if not scenario or not sizes:
        raise InvalidInputError("scenario and sizes are required (flags or config)")
    table = convergence_experiment(scenario, sizes, reps, cfg.fit, cfg.seed,
                                   heatmap_resolution=(args.rows, args.cols), keep_fits=True)
    out = Path(args.out)
    _write(out / "runs.csv", io.format_table(
        ["n", "rep", "mse", "runtime_s", "objective", "cosine", "error"],
        [[r.n, r.rep, r.mse, r.runtime_s, r.objective, r.cosine, r.error] for r in table.records],
    ))
    _write(out / "summary.csv", io.format_table(["n", "mean_mse", "std_mse"], table.rows))
    truth = next((r.truth for r in table.records if r.truth is not None), None)
    for n, hm in table.heatmaps.items():
        _write(out / f"heatmap_n{n}.csv", io.format_heatmap(hm))
    if not args.no_figure:
        from .plotting import convergence_figure, heatmap_figure

        convergence_figure(table, out / "convergence.png")
        for n, hm in table.heatmaps.items():
            first = next(r for r in table.records if r.n == n and r.truth is not None)
            heatmap_figure(hm, out / f"heatmap_n{n}.png", f"n = {n}",
                           truth_heatmap(first.truth, hm.prognostic_axis, hm.index_axis))
    print(f"convergence scenario={scenario} sizes={sizes} reps={reps} -> {out}")


def cmd_recommend(args) -> None:
    model = io.load_model(args.model)
    x = np.array([float(v) for v in args.subject.split(",") if v.strip()])
    prognostic, interaction = dual_scores(model, x)
    tau_star, g_star = optimal_treatment(model, x, *args.tau_range, args.grid)
    result = {"prognostic": prognostic, "interaction": interaction,
              "tau_star": tau_star, "g_at_star": g_star}
    sys.stdout.write("".join(f"{k} = {v!r}\n" for k, v in result.items()))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualscore", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a simulated scenario")
    p.add_argument("--scenario", type=int, required=True, choices=(1, 2, 3, 4))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a model to a CSV dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--schema")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("evaluate", help="score a model against truth or labelled data")
    p.add_argument("--model", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--truth")
    g.add_argument("--data")
    p.add_argument("--schema")
    p.add_argument("--transform")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--grid", type=int, default=200)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("heatmap", help="export the log-odds surface")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rows", type=int, default=50)
    p.add_argument("--cols", type=int, default=50)
    p.add_argument("--prognostic-range", type=_pair, default=(-3.0, 3.0))
    p.add_argument("--index-range", type=_pair)
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("bootstrap", help="bootstrap coefficient intervals")
    p.add_argument("--data", required=True)
    p.add_argument("--schema")
    p.add_argument("--config")
    p.add_argument("--k", type=int, default=30)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--out", default="bootstrap")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("benchmark", help="compare optimizers on a scenario")
    p.add_argument("--scenario", type=int, default=4, choices=(1, 2, 3, 4))
    p.add_argument("--sizes", type=_int_list, default=[100, 500, 1000])
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--methods", default="de,tpe,random")
    p.add_argument("--budget", type=int, help="override every method's evaluation budget")
    p.add_argument("--config")
    p.add_argument("--out", default="benchmark")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("converge", help="link MSE versus sample size")
    p.add_argument("--scenario", type=int, choices=(1, 2, 3, 4))
    p.add_argument("--sizes", type=_int_list)
    p.add_argument("--reps", type=int)
    p.add_argument("--config")
    p.add_argument("--rows", type=int, default=40)
    p.add_argument("--cols", type=int, default=40)
    p.add_argument("--out", default="convergence")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("recommend", help="dual scores and optimal treatment for one subject")
    p.add_argument("--model", required=True)
    p.add_argument("--subject", required=True, help="comma-separated encoded feature values")
    p.add_argument("--tau-range", type=_pair, required=True)
    p.add_argument("--grid", type=int, default=512)
    p.set_defaults(func=cmd_recommend)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except DualScoreError as exc:
        print(f"error: {type(exc).__name__}: {exc}".replace("\n", " "), file=sys.stderr)
        return exc.exit_code
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}".replace("\n", " "), file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
