"""Command-line driver: dataset synthesis, training, prediction, the
benchmark protocol, and decision-surface grid export.

Exit codes: 0 success, 1 internal error, 2 input validation error.
Every command is deterministic given its flags and seed; output files
are written atomically.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys

import numpy as np

from .benchmark import BenchmarkDataset, run_benchmark, synthetic_suite, write_report
from .chain_crf import InferenceMode, compute_potentials, forward_backward, interval_query
from .data import (
    SYNTHETIC_KINDS,
    atomic_write_text,
    load_csv,
    load_feature_matrix,
    make_synthetic,
    nystroem_features,
    save_csv,
)
from .registry import MODEL_KINDS, MODEL_ORDER, TrainedPredictor, load_model, save_model
from .selection import DEFAULT_L2_GRID
from .storm import TrainConfig

__all__ = ["main"]


def _parse_floats(text: str):
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ValueError(f"expected comma-separated numbers, got {text!r}") from None


def _parse_ints(text: str):
    return [int(v) for v in _parse_floats(text)]


def _train_config(args, l2: float = 1.0) -> TrainConfig:
    return TrainConfig(
        l2_strength=l2,
        max_iterations=args.max_iter,
        gradient_tolerance=args.tol,
        seed=args.seed,
        mode=InferenceMode(
            domain=args.domain,
            constrain_transitions=args.mode == "constrained",
        ),
        prediction=args.predict,
    )


def cmd_synth(args) -> int:
    for suffix, n, child in (("train", args.n_train, 0), ("test", args.n_test, 1)):
        dataset = make_synthetic(
            args.kind, n, args.k, noise=args.noise, seed=[args.seed, child]
        )
        path = f"{args.out}_{suffix}.csv"
        save_csv(path, dataset, label_column=args.label_column)
        print(f"wrote {path}: n={dataset.n} d={dataset.d} K={dataset.k} kind={args.kind}")
    return 0


def cmd_train(args) -> int:
    data = load_csv(args.train, args.label_column, args.k)
    nystroem_map = None
    if args.nystroem:
        nystroem_map, data = nystroem_features(
            data, args.nystroem, args.gamma, seed=args.seed
        )
    ops = MODEL_KINDS[args.model]
    if args.l2 is not None:
        model = ops.fit(data, _train_config(args, l2=args.l2))
    else:
        grid = _parse_floats(args.l2_grid) if args.l2_grid else DEFAULT_L2_GRID
        model = ops.fit_cv(data, grid, _train_config(args))
    predictor = TrainedPredictor(kind=args.model, model=model, nystroem=nystroem_map)
    save_model(args.out, predictor)
    print(
        f"trained {args.model}: n={data.n} K={data.k} "
        f"l2={model.config.l2_strength:g} -> {args.out}"
    )
    return 0


def cmd_predict(args) -> int:
    predictor = load_model(args.model_file)
    drop = (args.label_column,) if args.label_column else ()
    x = load_feature_matrix(args.data, drop_columns=drop)
    labels = np.atleast_1d(predictor.predict(x))
    buf = io.StringIO()
    writer = csv.writer(buf)
    if args.proba:
        proba = np.atleast_2d(predictor.predict_proba(x))
        writer.writerow(["label"] + [f"p{j + 1}" for j in range(predictor.k)])
        for lab, row in zip(labels, proba):
            writer.writerow([int(lab)] + [f"{p:.17g}" for p in row])
    else:
        writer.writerow(["label"])
        for lab in labels:
            writer.writerow([int(lab)])
    atomic_write_text(args.out, buf.getvalue())
    print(f"wrote {len(labels)} predictions -> {args.out}")
    return 0


def _parse_csv_specs(entries, k: int):
    specs = []
    for entry in entries or ():
        try:
            name, rest = entry.split("=", 1)
            path, label_column, train_size = rest.rsplit(":", 2)
        except ValueError:
            raise ValueError(
                f"csv spec must look like NAME=PATH:LABEL_COLUMN:TRAIN_SIZE, got {entry!r}"
            ) from None
        specs.append(
            BenchmarkDataset(
                name=f"{name}-k{k}",
                k=k,
                n_train=int(train_size),
                kind="csv",
                csv_path=path,
                label_column=label_column,
            )
        )
    return specs


def cmd_benchmark(args) -> int:
    ks = _parse_ints(args.k)
    kinds = [s for s in args.synthetic.split(",") if s] if args.synthetic else []
    for kind in kinds:
        if kind not in SYNTHETIC_KINDS:
            raise ValueError(f"unknown synthetic kind {kind!r}")
    specs = synthetic_suite(kinds, ks, args.n_train, args.n_test, args.noise)
    for k in ks:
        specs.extend(_parse_csv_specs(args.csv, k))
    models = [m for m in args.models.split(",") if m]
    grid = _parse_floats(args.l2_grid) if args.l2_grid else DEFAULT_L2_GRID
    report, cells = run_benchmark(
        specs,
        models,
        repetitions=args.reps,
        seed=args.seed,
        grid=grid,
        config=_train_config(args),
        jobs=args.jobs,
    )
    write_report(args.out, report, cells)
    print(f"benchmark: {len(specs)} datasets x {len(models)} models x {args.reps} reps")
    for metric in ("zero_one", "mae"):
        if metric in report["ranks"]:
            pretty = ", ".join(
                f"{m}={r:.2f}" for m, r in report["ranks"][metric]["average"].items()
            )
            print(f"  average ranks ({metric}): {pretty}")
    print(f"wrote {args.out}")
    return 0


def _parse_query(text: str, k: int):
    parts = text.split(":")
    if parts[0] == "label" and len(parts) == 1:
        return ("label",)
    if parts[0] == "proba" and len(parts) == 2:
        label = int(parts[1])
        if not 1 <= label <= k:
            raise ValueError(f"proba label must be in 1..{k}")
        return ("proba", label)
    if parts[0] == "interval" and len(parts) == 3:
        a, b = int(parts[1]), int(parts[2])
        if not 1 <= a <= b <= k:
            raise ValueError(f"interval needs 1 <= a <= b <= {k}")
        return ("interval", a, b)
    raise ValueError(
        f"query must be 'label', 'proba:K' or 'interval:A:B', got {text!r}"
    )


def _storm_interval_values(predictor: TrainedPredictor, points, a: int, b: int):
    model = predictor.model
    mode = InferenceMode(
        domain=model.config.mode.domain, constrain_transitions=True
    )
    features = points
    if predictor.nystroem is not None:
        features = predictor.nystroem.transform(points)
    prepared = model.standardizer.prepare(features)
    values = np.empty(prepared.shape[0])
    for i, row in enumerate(prepared):
        msgs = forward_backward(compute_potentials(model.params, row, mode))
        values[i] = interval_query(msgs, a, b)
    return values


def cmd_grid(args) -> int:
    predictor = load_model(args.model_file)
    if predictor.d_raw != 2:
        raise ValueError(
            f"grid export needs a model with 2 raw features, got {predictor.d_raw}"
        )
    query = _parse_query(args.query, predictor.k)
    xs = np.linspace(args.x_min, args.x_max, args.resolution)
    ys = np.linspace(args.y_min, args.y_max, args.resolution)
    grid_x, grid_y = np.meshgrid(xs, ys)
    points = np.column_stack([grid_x.ravel(), grid_y.ravel()])
    if query[0] == "label":
        values = np.asarray(predictor.predict(points), dtype=np.float64)
    elif query[0] == "proba":
        values = np.atleast_2d(predictor.predict_proba(points))[:, query[1] - 1]
    else:
        a, b = query[1], query[2]
        if predictor.kind == "storm":
            values = _storm_interval_values(predictor, points, a, b)
        else:
            proba = np.atleast_2d(predictor.predict_proba(points))
            values = proba[:, a - 1 : b].sum(axis=1)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["x", "y", "value"])
    for (px, py), v in zip(points, values):
        writer.writerow([f"{px:.17g}", f"{py:.17g}", f"{v:.17g}"])
    atomic_write_text(args.out, buf.getvalue())
    print(f"wrote {points.shape[0]} grid values -> {args.out}")
    return 0


def _add_common_train_flags(parser):
    parser.add_argument("--mode", choices=("unconstrained", "constrained"),
                        default="unconstrained", help="transition handling")
    parser.add_argument("--domain", choices=("auto", "exp", "log"), default="auto",
                        help="inference domain")
    parser.add_argument("--predict", choices=("viterbi", "marginal"),
                        default="viterbi", help="prediction rule")
    parser.add_argument("--max-iter", type=int, default=500)
    parser.add_argument("--tol", type=float, default=1e-6,
                        help="gradient max-norm convergence tolerance")
    parser.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stormcrf",
        description="Ordinal regression as structured classification over "
        "cumulative binary codes, plus baselines and benchmarking.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic train/test CSVs")
    p.add_argument("--kind", choices=SYNTHETIC_KINDS, required=True)
    p.add_argument("--n-train", type=int, default=100)
    p.add_argument("--n-test", type=int, default=1000)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--label-column", default="label")
    p.add_argument("--out", required=True, help="path prefix for the two CSVs")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit a model, optionally CV-selecting l2")
    p.add_argument("--model", choices=MODEL_ORDER, required=True)
    p.add_argument("--train", required=True, help="training CSV")
    p.add_argument("--label-column", default="label")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--l2", type=float, default=None, help="skip CV, use this l2")
    p.add_argument("--l2-grid", default=None, help="comma list for CV")
    p.add_argument("--nystroem", type=int, default=None, help="number of landmarks")
    p.add_argument("--gamma", type=float, default=1.0, help="RBF width for --nystroem")
    _add_common_train_flags(p)
    p.add_argument("--out", required=True, help="model file to write")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict labels for a feature CSV")
    p.add_argument("--model-file", required=True)
    p.add_argument("--data", required=True, help="feature CSV")
    p.add_argument("--label-column", default=None,
                   help="column to drop if the CSV still carries labels")
    p.add_argument("--proba", action="store_true", help="append per-label probabilities")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("benchmark", help="run the full comparison protocol")
    p.add_argument("--synthetic", default=",".join(SYNTHETIC_KINDS),
                   help="comma list of synthetic kinds ('' for none)")
    p.add_argument("--k", default="5,10", help="comma list of cardinalities")
    p.add_argument("--n-train", type=int, default=100)
    p.add_argument("--n-test", type=int, default=1000)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--csv", action="append",
                   help="extra dataset as NAME=PATH:LABEL_COLUMN:TRAIN_SIZE; "
                   "non-ordinal targets are equal-frequency binned at each --k")
    p.add_argument("--models", default=",".join(MODEL_ORDER))
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--l2-grid", default=None)
    p.add_argument("--jobs", type=int, default=1)
    _add_common_train_flags(p)
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("grid", help="evaluate a query on a 2-D lattice")
    p.add_argument("--model-file", required=True)
    p.add_argument("--x-min", type=float, default=-1.5)
    p.add_argument("--x-max", type=float, default=1.5)
    p.add_argument("--y-min", type=float, default=-1.5)
    p.add_argument("--y-max", type=float, default=1.5)
    p.add_argument("--resolution", type=int, default=50)
    p.add_argument("--query", default="label",
                   help="'label', 'proba:K', or 'interval:A:B'")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grid)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
