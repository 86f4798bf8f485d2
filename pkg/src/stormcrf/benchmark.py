"""The full comparison protocol: repeated random splits, per-split
cross-validated fits of every model, macro metrics on the held-out part,
rank aggregation, pairwise signed-rank tests and critical-difference
data, assembled into one deterministic report document.

Seeds are counter-based: dataset d pools from entropy (master, d), its
repetition r splits from (master, d, r), so any cell can be recomputed
in isolation — which is exactly what the parallel workers do.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import (
    OrdinalDataset,
    atomic_write_text,
    equal_frequency_binning,
    make_synthetic,
    split_repetition,
)
from .evaluation import (
    ScoreTable,
    average_ranks,
    cd_groups,
    critical_difference,
    macro_mae,
    macro_zero_one,
    wilcoxon_signed_rank,
)
from .registry import MODEL_KINDS
from .selection import DEFAULT_L2_GRID
from .storm import TrainConfig

__all__ = ["BenchmarkDataset", "run_benchmark", "write_report", "synthetic_suite"]

REPORT_SCHEMA = "stormcrf-report-v1"
ALPHA = 0.01


@dataclass(frozen=True)
class BenchmarkDataset:
    """One dataset entry of the protocol.

    Synthetic entries regenerate their pool from the master seed; csv
    entries read the file and, when the target column is not already
    integer labels in 1..K, apply equal-frequency binning.
    """

    name: str
    k: int
    n_train: int
    kind: str = "synthetic"  # or "csv"
    synth_kind: str | None = None
    n_test: int = 1000
    noise: float = 0.05
    csv_path: str | None = None
    label_column: str | None = None


def synthetic_suite(kinds, ks, n_train: int = 100, n_test: int = 1000, noise: float = 0.05):
    """The standard synthetic grid: every kind crossed with every K."""
    return [
        BenchmarkDataset(
            name=f"{kind}-k{k}",
            k=k,
            n_train=n_train,
            synth_kind=kind,
            n_test=n_test,
            noise=noise,
        )
        for kind in kinds
        for k in ks
    ]


def _build_pool(spec: BenchmarkDataset, master_seed: int, d_idx: int) -> OrdinalDataset:
    if spec.kind == "synthetic":
        return make_synthetic(
            spec.synth_kind,
            spec.n_train + spec.n_test,
            spec.k,
            noise=spec.noise,
            seed=[master_seed, d_idx],
        )
    if spec.kind == "csv":
        features, targets = load_csv_targets(spec.csv_path, spec.label_column)
        rounded = np.rint(targets)
        already_ordinal = (
            np.all(np.abs(targets - rounded) < 1e-9)
            and rounded.min() >= 1
            and rounded.max() <= spec.k
        )
        if already_ordinal:
            labels = rounded.astype(np.int64)
        else:
            labels = equal_frequency_binning(targets, spec.k)
        return OrdinalDataset(features, labels, spec.k, provenance=str(spec.csv_path))
    raise ValueError(f"unknown dataset kind {spec.kind!r}")


def load_csv_targets(path, target_column: str):
    """Features plus a raw (unbinned) numeric target column."""
    from .data import _parse_numeric_rows

    header, matrix = _parse_numeric_rows(path)
    if target_column not in header:
        raise ValueError(f"{path}: no column named {target_column!r} in {header}")
    idx = header.index(target_column)
    return np.delete(matrix, idx, axis=1), matrix[:, idx]


@dataclass(frozen=True)
class _CellTask:
    spec: BenchmarkDataset
    d_idx: int
    rep: int
    model_name: str
    master_seed: int
    grid: tuple
    config: TrainConfig


def _cell_seed(master_seed: int, d_idx: int, rep: int) -> int:
    return int(np.random.SeedSequence([master_seed, d_idx, rep]).generate_state(1)[0])


def _run_cell(task: _CellTask) -> dict:
    cell = {
        "dataset": task.spec.name,
        "model": task.model_name,
        "rep": task.rep,
        "zero_one": None,
        "mae": None,
        "l2": None,
        "warnings": [],
    }
    started = time.perf_counter()
    try:
        pool = _build_pool(task.spec, task.master_seed, task.d_idx)
        train, test = split_repetition(
            pool, [task.master_seed, task.d_idx], task.rep, task.spec.n_train
        )
        config = dataclasses.replace(
            task.config, seed=_cell_seed(task.master_seed, task.d_idx, task.rep)
        )
        ops = MODEL_KINDS[task.model_name]
        model = ops.fit_cv(train, task.grid, config)
        pred = ops.predict(model, test.features)
        cell["zero_one"] = macro_zero_one(test.labels, pred, pool.k)
        cell["mae"] = macro_mae(test.labels, pred, pool.k)
        cell["l2"] = float(model.cv.selected_l2)
        cell["warnings"] = list(model.cv.warnings) + list(getattr(model, "warnings", []))
    except Exception as exc:  # a failed fit leaves a hole, not a dead report
        cell["warnings"] = [f"fit failed: {exc}"]
    cell["seconds"] = time.perf_counter() - started
    return cell


def run_benchmark(
    dataset_specs,
    model_names=None,
    repetitions: int = 20,
    seed: int = 0,
    grid=DEFAULT_L2_GRID,
    config: TrainConfig | None = None,
    jobs: int = 1,
):
    """Run the full protocol.

    Returns (report, raw_cells): the report document is deterministic
    given flags and seed; raw cells additionally carry wall-clock
    timings, which `write_report` routes to a sidecar CSV so the
    canonical files stay byte-identical across reruns.
    """
    model_names = list(model_names or MODEL_KINDS)
    for name in model_names:
        if name not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {name!r}")
    dataset_specs = list(dataset_specs)
    if not dataset_specs:
        raise ValueError("no datasets given")
    config = config or TrainConfig()

    tasks = [
        _CellTask(spec, d_idx, rep, model, seed, tuple(grid), config)
        for d_idx, spec in enumerate(dataset_specs)
        for rep in range(repetitions)
        for model in model_names
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_run_cell, tasks, chunksize=4))
    else:
        cells = [_run_cell(task) for task in tasks]

    report = _assemble(dataset_specs, model_names, repetitions, seed, grid, config, cells)
    return report, cells


def _mean_std(values):
    values = [v for v in values if v is not None]
    if not values:
        return None, None, 0
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std()), int(arr.size)


def _assemble(dataset_specs, model_names, repetitions, seed, grid, config, cells) -> dict:
    by_key = {(c["dataset"], c["model"], c["rep"]): c for c in cells}
    dataset_names = [spec.name for spec in dataset_specs]

    aggregates = {}
    for ds in dataset_names:
        aggregates[ds] = {}
        for model in model_names:
            entry = {}
            for metric in ("zero_one", "mae"):
                values = [
                    by_key[(ds, model, r)][metric] for r in range(repetitions)
                ]
                mean, std, n = _mean_std(values)
                entry[metric] = {"mean": mean, "std": std, "n": n}
            aggregates[ds][model] = entry

    ranks = {}
    cd = {}
    wilcoxon = {}
    for metric in ("zero_one", "mae"):
        mean_matrix = np.array(
            [
                [
                    np.nan
                    if aggregates[ds][m][metric]["mean"] is None
                    else aggregates[ds][m][metric]["mean"]
                    for m in model_names
                ]
                for ds in dataset_names
            ],
            dtype=np.float64,
        )
        if np.isfinite(mean_matrix).all():
            table = ScoreTable(model_names, dataset_names, mean_matrix, metric)
            avg = average_ranks(table)
            ranks[metric] = {
                "average": {m: float(r) for m, r in zip(model_names, avg)},
                "per_dataset": {
                    ds: {
                        m: float(r)
                        for m, r in zip(
                            model_names,
                            average_ranks(
                                ScoreTable(model_names, [ds], mean_matrix[i : i + 1], metric)
                            ),
                        )
                    }
                    for i, ds in enumerate(dataset_names)
                },
            }
            if len(model_names) >= 2:
                cd_value = critical_difference(len(model_names), len(dataset_names), ALPHA)
                groups = cd_groups(avg, cd_value, ALPHA)
                cd[metric] = {
                    "critical_difference": float(cd_value),
                    "alpha": ALPHA,
                    "average_ranks": {m: float(r) for m, r in zip(model_names, avg)},
                    "groups": [list(g) for g in groups.groups],
                }

        pairs = []
        for i, m_a in enumerate(model_names):
            for m_b in model_names[i + 1 :]:
                a_scores, b_scores = [], []
                for ds in dataset_names:
                    for r in range(repetitions):
                        va = by_key[(ds, m_a, r)][metric]
                        vb = by_key[(ds, m_b, r)][metric]
                        if va is not None and vb is not None:
                            a_scores.append(va)
                            b_scores.append(vb)
                if len(a_scores) >= 5:
                    res = wilcoxon_signed_rank(a_scores, b_scores, ALPHA)
                    pairs.append(
                        {
                            "a": m_a,
                            "b": m_b,
                            "n_pairs": len(a_scores),
                            "statistic": float(res.statistic),
                            "p_value": float(res.p_value),
                            "significant": bool(res.significant),
                            "n_effective": int(res.n_effective),
                            "degenerate": bool(res.degenerate),
                        }
                    )
        wilcoxon[metric] = pairs

    warnings = []
    for c in sorted(cells, key=lambda c: (c["dataset"], c["model"], c["rep"])):
        for w in c["warnings"]:
            warnings.append(f"{c['dataset']}/{c['model']}/rep{c['rep']}: {w}")

    report_cells = [
        {
            "dataset": c["dataset"],
            "model": c["model"],
            "rep": c["rep"],
            "zero_one": c["zero_one"],
            "mae": c["mae"],
            "l2": c["l2"],
            "warnings": c["warnings"],
        }
        for c in sorted(cells, key=lambda c: (c["dataset"], c["model"], c["rep"]))
    ]

    return {
        "schema": REPORT_SCHEMA,
        "config": {
            "seed": seed,
            "repetitions": repetitions,
            "l2_grid": [float(g) for g in grid],
            "models": model_names,
            "alpha": ALPHA,
            "mode": {
                "domain": config.mode.domain,
                "constrain_transitions": config.mode.constrain_transitions,
            },
            "prediction": config.prediction,
            "max_iterations": config.max_iterations,
            "gradient_tolerance": config.gradient_tolerance,
            "datasets": [
                {
                    "name": spec.name,
                    "kind": spec.kind,
                    "synth_kind": spec.synth_kind,
                    "k": spec.k,
                    "n_train": spec.n_train,
                    "n_test": spec.n_test if spec.kind == "synthetic" else None,
                    "noise": spec.noise if spec.kind == "synthetic" else None,
                    "csv_path": spec.csv_path,
                    "label_column": spec.label_column,
                }
                for spec in dataset_specs
            ],
        },
        "cells": report_cells,
        "aggregates": aggregates,
        "ranks": ranks,
        "critical_difference": cd,
        "wilcoxon": wilcoxon,
        "warnings": warnings,
        "timings": {"note": "wall-clock per fit lives in the sidecar timings csv"},
    }


def write_report(out_path, report: dict, cells_with_timings=None):
    """Write the canonical report JSON, a flat scores CSV and, when
    timings are supplied, the non-deterministic sidecar CSV."""
    atomic_write_text(out_path, json.dumps(report, indent=2, sort_keys=True) + "\n")
    base = str(out_path)
    stem = base[: -len(".json")] if base.endswith(".json") else base

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["dataset", "model", "rep", "zero_one", "mae", "l2"])
    for c in report["cells"]:
        writer.writerow(
            [
                c["dataset"],
                c["model"],
                c["rep"],
                "" if c["zero_one"] is None else f"{c['zero_one']:.17g}",
                "" if c["mae"] is None else f"{c['mae']:.17g}",
                "" if c["l2"] is None else f"{c['l2']:.17g}",
            ]
        )
    atomic_write_text(stem + "_scores.csv", buf.getvalue())

    if cells_with_timings is not None:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["dataset", "model", "rep", "seconds"])
        for c in sorted(
            cells_with_timings, key=lambda c: (c["dataset"], c["model"], c["rep"])
        ):
            writer.writerow(
                [c["dataset"], c["model"], c["rep"], f"{c.get('seconds', 0.0):.6f}"]
            )
        atomic_write_text(stem + "_timings.csv", buf.getvalue())
