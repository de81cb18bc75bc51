"""Command-line front-end: synth, calibrate, predict, evaluate, sweep.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 estimation failure.
"""

from __future__ import annotations

import argparse
import json
import os
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from .calibrator import (
    CalibratedClassifier,
    CalibrationConfig,
    calibrate_with_batch,
    evaluate,
    predict_conventional,
)
from .errors import (
    BinaryOnly,
    EstimationFailed,
    InsufficientData,
    InvalidConfig,
    InvalidInput,
    InvalidScenario,
    InvalidShape,
    ProtoCalError,
    SingularCovariance,
)
from .gmm import STREAM_SAMPLE, EmConfig, make_rng
from .records import Dump, load_config, read_dump, write_dump, write_json
from .representation import MODES
from .selection import STRATEGIES, restart_summary
from .synth import PRESETS, ScenarioSpec, bayes_optimal_accuracy, boundary_sweep, sample_scenario, uniform_grid

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_ESTIMATION = 4

SEED_ENV = "PROTOCAL_SEED"
ESTIMATE_PER_CLASS = 250
DEFAULT_SWEEP_STEPS = 99

CALIBRATE_DEFAULTS = {
    "mode": "log-prob",
    "restarts": 100,
    "max_iter": 100,
    "tol": 1e-3,
    "reg": 1e-6,
    "selection": "assignment-score",
    "estimate_size": None,
    "seed": 0,
    "workers": 1,
    "in": None,
    "out": None,
    "diagnostics": None,
}


class UsageError(ProtoCalError):
    pass


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, (UsageError, InvalidConfig, InvalidScenario)):
        return EXIT_USAGE
    if isinstance(exc, (EstimationFailed, SingularCovariance)):
        return EXIT_ESTIMATION
    return EXIT_DATA


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Flags beat the config file, which beats the seed env var and defaults."""
    settings = dict(defaults)
    settings["seed"] = _default_seed()
    if getattr(args, "config", None):
        doc = load_config(args.config)
        for key, value in doc.items():
            key = key.replace("-", "_")
            if key not in settings:
                raise InvalidConfig(f"unknown key {key!r} in {args.config}")
            settings[key] = value
    for key in settings:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def _figure_path(args, out) -> Path | None:
    if getattr(args, "no_figure", False):
        return None
    if getattr(args, "figure", None):
        return Path(args.figure)
    if out:
        return Path(out).with_suffix(".png")
    return None


def _emit(text: str, out) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# -- synth ---------------------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> int:
    doc = {}
    if args.config:
        doc = load_config(args.config)
        doc = doc.get("scenario", doc)
    if args.preset:
        doc["preset"] = args.preset
    if not doc:
        doc = {"preset": "biased-binary"}
    for key, value in (("seed", args.seed), ("n_estimate", args.n_estimate), ("n_test", args.n_test)):
        if value is not None:
            doc[key] = value
    if "seed" not in doc:
        doc["seed"] = _default_seed()
    spec = ScenarioSpec.from_dict(doc)
    sample = sample_scenario(spec)
    out = Path(args.out)
    write_dump(out / "estimate.jsonl", sample.estimate_logits, sample.estimate_gold, prefix="est")
    write_dump(out / "test.jsonl", sample.test_logits, sample.test_gold, prefix="test")
    acc, se = bayes_optimal_accuracy(spec)
    n = spec.n_classes
    truth = {
        "scenario": spec.to_dict(),
        "n_classes": n,
        "bayes_accuracy": acc,
        "bayes_standard_error": se,
        "estimate_class_counts": np.bincount(sample.estimate_gold, minlength=n).tolist(),
        "test_class_counts": np.bincount(sample.test_gold, minlength=n).tolist(),
    }
    write_json(out / "truth.json", truth)
    if n == 2 and not args.no_figure and spec.n_test:
        from .plotting import plot_prediction_distribution

        plot_prediction_distribution(
            sample.test_logits, sample.test_gold, out / "test_distribution.png", title="test split"
        )
    print(f"wrote {spec.n_estimate} estimate and {spec.n_test} test records to {out}")
    print(f"Bayes-optimal accuracy {acc:.4f} (standard error {se:.4f})")
    return EXIT_OK


# -- calibrate -----------------------------------------------------------------


def sample_estimate_set(dump: Dump, size: int, seed: int) -> list[int]:
    """Uniform sample without replacement, returned in file order."""
    if size > len(dump):
        raise InsufficientData(
            f"estimate size {size} exceeds the {len(dump)} records available in the input"
        )
    if size == len(dump):
        return list(range(len(dump)))
    rng = make_rng(seed, STREAM_SAMPLE)
    return sorted(int(i) for i in rng.choice(len(dump), size=size, replace=False))


def cmd_calibrate(args: argparse.Namespace) -> int:
    s = _resolve(args, CALIBRATE_DEFAULTS)
    if not s["in"] or not s["out"]:
        raise UsageError("calibrate needs --in and --out (on the command line or in --config)")
    try:
        em = EmConfig(max_iter=int(s["max_iter"]), tol=float(s["tol"]), reg=float(s["reg"]))
        config = CalibrationConfig(
            mode=s["mode"],
            restarts=int(s["restarts"]),
            em=em,
            strategy=s["selection"],
            seed=int(s["seed"]),
            workers=int(s["workers"]),
        )
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(str(exc)) from None
    started = time.perf_counter()
    dump = read_dump(s["in"])
    n = dump.n_classes
    size = ESTIMATE_PER_CLASS * n if s["estimate_size"] is None else int(s["estimate_size"])
    if size < max(n, 2):
        raise UsageError(f"estimate size must be at least {max(n, 2)}, got {size}")
    indices = sample_estimate_set(dump, size, config.seed)
    estimate_set = dump.subset(indices)
    # Labels in the pool are never read past this point.
    labelled = sum(r.label is not None for r in estimate_set.records)
    classifier, batch = calibrate_with_batch(estimate_set.logits(), n, config)
    estimate, assignment = classifier.estimate, classifier.assignment
    Path(s["out"]).parent.mkdir(parents=True, exist_ok=True)
    Path(s["out"]).write_text(classifier.dumps(), encoding="utf-8")

    rows = restart_summary(batch)
    ok = [r for r in rows if not r["failed"]]
    diagnostics = {
        "input": str(s["in"]),
        "n_records": len(dump),
        "n_classes": n,
        "estimate_size": size,
        "labels_ignored": labelled,
        "config": config.snapshot(),
        "chosen_seed": estimate.seed,
        "cla_score": assignment.score,
        "assignment": [label + 1 for label in assignment.mapping],
        "log_likelihood": estimate.log_likelihood,
        "converged_restarts": sum(r["converged"] for r in ok),
        "failed_restarts": len(rows) - len(ok),
        "convergence_rate": sum(r["converged"] for r in ok) / len(rows),
        "restarts": rows,
        "wall_time_s": time.perf_counter() - started,
    }
    diag_path = s["diagnostics"] or str(Path(s["out"]).with_suffix("")) + ".diagnostics.json"
    write_json(diag_path, diagnostics)
    print(
        f"calibrated on {size} of {len(dump)} records: seed {estimate.seed}, "
        f"CLA score {assignment.score:.6g}, {diagnostics['converged_restarts']}/{len(rows)} restarts converged"
    )
    return EXIT_OK


# -- predict / evaluate ----------------------------------------------------------


def _load_classifier(path) -> CalibratedClassifier:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidInput(f"cannot read classifier {path}: {exc}") from None
    try:
        return CalibratedClassifier.loads(text)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InvalidConfig(f"{path}: malformed classifier document ({exc})") from None


def cmd_predict(args: argparse.Namespace) -> int:
    clf = _load_classifier(args.classifier)
    dump = read_dump(args.input)
    logits = dump.logits()
    pred = clf.predict(logits)
    conv = predict_conventional(logits)
    lines = []
    for rec, p, c in zip(dump.records, pred, conv):
        lines.append(json.dumps({"id": rec.id, "label": int(p) + 1, "conventional": int(c) + 1}))
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def aggregate_metrics(runs: list[dict]) -> dict:
    # statistics computes exactly, so identical runs give a std of exactly 0.
    acc = [r["accuracy"] for r in runs]
    conv = [r["conventional_accuracy"] for r in runs]
    return {
        "n_runs": len(runs),
        "accuracy": statistics.fmean(acc),
        "accuracy_std": statistics.pstdev(acc),
        "conventional_accuracy": statistics.fmean(conv),
        "conventional_accuracy_std": statistics.pstdev(conv),
    }


def cmd_evaluate(args: argparse.Namespace) -> int:
    dump = read_dump(args.input)
    gold = dump.gold()
    logits = dump.logits()
    runs = []
    classifiers = []
    for path in args.classifier:
        clf = _load_classifier(path)
        if clf.n_classes != dump.n_classes:
            raise InvalidShape(f"{path} has {clf.n_classes} classes but the dump has {dump.n_classes}")
        metrics = evaluate(clf, logits, gold).to_dict()
        metrics["classifier"] = str(path)
        runs.append(metrics)
        classifiers.append(clf)
    report = aggregate_metrics(runs)
    report["runs"] = runs
    _emit(json.dumps(report, indent=2, sort_keys=True) + "\n", args.out)
    fig = _figure_path(args, args.out)
    if fig is not None:
        from .plotting import plot_confusion, plot_prediction_distribution

        if dump.n_classes == 2:
            plot_prediction_distribution(
                logits, gold, fig, classifiers[0].decision_boundaries(), title="prediction distribution"
            )
        else:
            plot_confusion(runs[0]["confusion"], fig, title="calibrated confusion")
    print(
        f"accuracy {report['accuracy']:.4f} (std {report['accuracy_std']:.4f}), "
        f"conventional {report['conventional_accuracy']:.4f} over {len(runs)} run(s)",
        file=sys.stderr,
    )
    return EXIT_OK


# -- sweep -----------------------------------------------------------------------


def _parse_grid(args) -> list[float]:
    if args.grid is not None:
        items = [t.strip() for t in args.grid.split(",") if t.strip()]
        if not items:
            raise UsageError("the threshold grid is empty")
        try:
            grid = [float(t) for t in items]
        except ValueError:
            raise UsageError(f"cannot parse threshold grid {args.grid!r}") from None
    else:
        steps = DEFAULT_SWEEP_STEPS if args.steps is None else args.steps
        if steps < 1:
            raise UsageError("the threshold grid is empty")
        grid = uniform_grid(steps)
    if any(not 0.0 < t < 1.0 for t in grid):
        raise UsageError("thresholds must lie strictly between 0 and 1")
    return grid


def cmd_sweep(args: argparse.Namespace) -> int:
    grid = _parse_grid(args)
    dump = read_dump(args.input)
    if dump.n_classes != 2:
        raise BinaryOnly(f"sweep needs a binary dump, got {dump.n_classes} classes")
    logits = dump.logits()
    result = boundary_sweep(logits, dump.gold(), grid)
    lines = ["threshold,accuracy"] + [f"{t!r},{a!r}" for t, a in zip(result.thresholds, result.accuracies)]
    _emit("\n".join(lines) + "\n", args.out)
    t_best, a_best = result.best()
    if 0.5 in result.thresholds:
        conv = result.accuracy_at(0.5)
        print(f"t=0.5 (conventional boundary): accuracy {conv:.4f}", file=sys.stderr)
    print(f"best threshold {t_best:.4g}: accuracy {a_best:.4f}", file=sys.stderr)
    fig = _figure_path(args, args.out)
    if fig is not None:
        from .plotting import plot_sweep

        boundaries = _load_classifier(args.classifier).decision_boundaries() if args.classifier else ()
        plot_sweep(result, fig, boundaries, title="decision-boundary sweep")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="protocal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write synthetic estimate/test dumps and ground truth")
    p.add_argument("--config", help="scenario file (YAML or JSON)")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--seed", type=int)
    p.add_argument("--n-estimate", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("calibrate", help="fit a calibrated classifier on an unlabeled pool")
    p.add_argument("--config", help="run config file (YAML or JSON)")
    p.add_argument("--in", dest="in", help="input JSONL pool")
    p.add_argument("--out", help="classifier JSON to write")
    p.add_argument("--diagnostics", help="diagnostics JSON (default: next to --out)")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--restarts", type=int)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--reg", type=float)
    p.add_argument("--selection", choices=STRATEGIES)
    p.add_argument("--estimate-size", type=int, help="default: 250 per class")
    p.add_argument("--seed", type=int, help=f"default: ${SEED_ENV} or 0")
    p.add_argument("--workers", type=int, help="parallel restart processes")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("predict", help="label a dump with a calibrated classifier")
    p.add_argument("--classifier", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="accuracy report for one or more classifiers")
    p.add_argument("--classifier", required=True, nargs="+")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", help="metrics JSON (default: stdout)")
    p.add_argument("--figure", help="figure path (default: next to --out)")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="accuracy over a grid of binary thresholds")
    p.add_argument("--in", dest="input", required=True)
    grid = p.add_mutually_exclusive_group()
    grid.add_argument("--grid", help="comma-separated thresholds in (0, 1)")
    grid.add_argument("--steps", type=int, help=f"uniform grid size (default {DEFAULT_SWEEP_STEPS})")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.add_argument("--classifier", help="draw this classifier's boundary on the figure")
    p.add_argument("--figure", help="figure path (default: next to --out)")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (ProtoCalError, OSError) as exc:
        print(f"protocal: error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
