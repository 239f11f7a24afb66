"""Command-line entry points: simulate | fit | predict | evaluate.

Every command is deterministic given its inputs: reports and bundles are
seed-addressed, JSON keys are sorted, and nothing embeds a timestamp.
Exit codes: 0 success, 2 bad input or configuration, 3 numerical failure,
4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bundle import load_bundle, save_bundle
from .config import load_config
from .continuous import run_continuous_super_learner
from .data import load_dataset, save_dataset, simulate_synthetic
from .discrete import run_discrete_super_learner
from .errors import NumericalError, SurvStackError, ValidationError
from .metrics import compute_metrics
from .states import run_state_learner

__all__ = ["main"]


def _write_json(path, payload) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2)
    Path(path).write_text(text + "\n", encoding="utf-8")


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if cfg.simulate is None:
        raise ValidationError("config has no 'simulate' section")
    seed = cfg.seed if args.seed is None else args.seed
    dataset, truth = simulate_synthetic(
        cfg.simulate.n, cfg.simulate.scenario, seed,
        censoring_rate=cfg.simulate.censoring_rate,
    )
    out = _out_dir(args)
    save_dataset(dataset, out / "data.csv")
    _write_json(out / "truth.json", {"seed": int(seed), **truth.to_dict()})
    print(f"wrote {out / 'data.csv'} ({len(dataset)} rows) and {out / 'truth.json'}")
    return 0


def _fit_pipeline(cfg, dataset, seed):
    if cfg.method == "discrete":
        return run_discrete_super_learner(
            dataset, list(cfg.event_learners), horizon=cfg.tau,
            n_periods=cfg.periods, loss=cfg.loss, scheme=cfg.scheme,
            n_folds=cfg.folds, seed=seed, ensemble=cfg.ensemble,
        )
    if cfg.method == "continuous":
        return run_continuous_super_learner(
            dataset, list(cfg.event_learners), list(cfg.censoring_learners),
            tau=cfg.tau, grid_points=cfg.grid_points, n_folds=cfg.folds,
            seed=seed, ensemble=cfg.ensemble,
        )
    return run_state_learner(
        dataset, list(cfg.event_learners), list(cfg.censoring_learners),
        tau=cfg.tau, grid_points=cfg.grid_points, n_folds=cfg.folds, seed=seed,
    )


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    data_path = args.data or cfg.data
    if not data_path:
        raise ValidationError("no training data: pass --data or set 'data'")
    seed = cfg.seed if args.seed is None else args.seed
    dataset = load_dataset(data_path)

    predictor, result = _fit_pipeline(cfg, dataset, seed)
    report = {
        "config": {**cfg.to_dict(), "seed": int(seed)},
        "versions": {"survstack": __version__, "numpy": np.__version__},
        "result": result,
    }
    test_path = args.test or cfg.test
    if test_path:
        test = load_dataset(test_path)
        s_tau = predictor.predict_survival(test.covariates,
                                           np.array([cfg.tau]))[:, 0]
        report["metrics"] = compute_metrics(s_tau, test, cfg.tau).to_dict()

    out = _out_dir(args)
    bundle_path = out / "model.bundle"
    report_path = out / "report.json"
    save_bundle(bundle_path, predictor, report["config"],
                covariate_names=dataset.covariate_names)
    _write_json(report_path, report)
    print(f"wrote {bundle_path} and {report_path}")
    return 0


def _load_covariates(path, names):
    """Read covariate columns (by name) from a CSV; returns (ids, matrix)."""
    try:
        fh = open(path, "r", newline="", encoding="utf-8")
    except OSError:
        raise
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file, header row required")
        col = {name: i for i, name in enumerate(header)}
        missing = [n for n in names if n not in col]
        if missing:
            raise ValidationError(f"{path}: missing covariate column(s) {missing}")
        ids, rows = [], []
        for rownum, raw in enumerate(reader, start=2):
            if not raw or all(not c.strip() for c in raw):
                continue
            ids.append(raw[col["id"]].strip() if "id" in col else str(rownum - 1))
            try:
                rows.append([float(raw[col[n]]) for n in names])
            except (ValueError, IndexError):
                raise ValidationError(f"{path} row {rownum}: bad covariate value")
    x = np.array(rows, dtype=float) if rows else np.zeros((0, len(names)))
    return ids, x


def cmd_predict(args) -> int:
    predictor, payload = load_bundle(args.bundle)
    names = payload.get("covariate_names", [])
    try:
        times = sorted(float(t) for t in args.times.split(","))
    except ValueError:
        raise ValidationError(f"--times must be comma-separated numbers, "
                              f"got {args.times!r}")
    if not times or any(t <= 0 for t in times):
        raise ValidationError("--times must be positive")

    ids, x = _load_covariates(args.data, names)
    out_path = Path(args.out or "predictions.csv")
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "time", "survival"])
        if ids:
            surv = predictor.predict_survival(x, np.asarray(times))
            for i, rid in enumerate(ids):
                for j, t in enumerate(times):
                    writer.writerow([rid, repr(float(t)),
                                     repr(float(surv[i, j]))])
    print(f"wrote {out_path} ({len(ids)} individuals x {len(times)} times)")
    return 0


def cmd_evaluate(args) -> int:
    predictor, payload = load_bundle(args.bundle)
    test = load_dataset(args.data)
    tau = args.tau if args.tau is not None else payload["config"].get("tau")
    if tau is None:
        raise ValidationError("no horizon: pass --tau or use a bundle that has one")
    tau = float(tau)
    s_tau = predictor.predict_survival(test.covariates, np.array([tau]))[:, 0]
    report = compute_metrics(s_tau, test, tau).to_dict()
    out_path = Path(args.out or "metrics.json")
    _write_json(out_path, report)
    print(f"wrote {out_path} "
          f"(brier {report['brier']:.4f}, c-index {report['c_index']:.1f})")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="survstack",
        description="Survival super learners: fit, predict, and evaluate.",
    )
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="write a seeded synthetic dataset")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out", help="output directory (default .)")
    p_sim.add_argument("--seed", type=int, help="override the config seed")
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit", help="run a super-learner pipeline")
    p_fit.add_argument("--config", required=True)
    p_fit.add_argument("--data", help="training CSV (overrides config)")
    p_fit.add_argument("--test", help="held-out CSV for report metrics")
    p_fit.add_argument("--out", help="output directory (default .)")
    p_fit.add_argument("--seed", type=int, help="override the config seed")
    p_fit.set_defaults(func=cmd_fit)

    p_pred = sub.add_parser("predict", help="predict survival from a bundle")
    p_pred.add_argument("--bundle", required=True)
    p_pred.add_argument("--data", required=True, help="covariate CSV")
    p_pred.add_argument("--times", required=True,
                        help="comma-separated query times")
    p_pred.add_argument("--out", help="output CSV (default predictions.csv)")
    p_pred.set_defaults(func=cmd_predict)

    p_eval = sub.add_parser("evaluate", help="test-set metrics for a bundle")
    p_eval.add_argument("--bundle", required=True)
    p_eval.add_argument("--data", required=True, help="test CSV")
    p_eval.add_argument("--tau", type=float,
                        help="evaluation horizon (default: bundle's)")
    p_eval.add_argument("--out", help="output JSON (default metrics.json)")
    p_eval.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except SurvStackError as exc:
        # learner failures and anything else from the toolkit
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
