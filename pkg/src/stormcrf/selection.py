"""Cross-validated ridge-strength selection shared by every model kind."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .data import OrdinalDataset, stratified_folds
from .evaluation import macro_mae

__all__ = ["CvReport", "select_l2"]

DEFAULT_L2_GRID = (1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0)


@dataclass
class CvReport:
    grid: tuple
    fold_mae: np.ndarray  # (len(grid), n_folds)
    mean_mae: np.ndarray  # (len(grid),)
    selected_l2: float
    stratified: bool
    warnings: list = field(default_factory=list)


def select_l2(data: OrdinalDataset, grid, config, fit_fn, predict_fn, n_folds: int = 5):
    """Pick the l2 strength minimising mean macro MAE over stratified folds.

    Ties break toward the larger (more regularised) value.  Classes with
    fewer members than folds force a plain shuffled split, flagged in
    the report.  Returns (selected_l2, CvReport).
    """
    grid = tuple(sorted(float(g) for g in grid))
    if not grid:
        raise ValueError("l2 grid must be non-empty")
    if data.n < n_folds:
        raise ValueError(f"need at least {n_folds} rows for {n_folds}-fold CV")

    warnings = []
    class_counts = np.bincount(data.labels, minlength=data.k + 1)[1:]
    present_counts = class_counts[class_counts > 0]
    stratified = bool(present_counts.min() >= n_folds) if present_counts.size else False
    if stratified:
        fold = stratified_folds(data, n_folds, seed=config.seed)
    else:
        warnings.append(
            "some class has fewer instances than folds; using unstratified folds"
        )
        rng = np.random.default_rng(config.seed)
        fold = rng.permutation(data.n) % n_folds

    fold_mae = np.empty((len(grid), n_folds))
    for gi, l2 in enumerate(grid):
        candidate = dataclasses.replace(config, l2_strength=l2)
        for f in range(n_folds):
            train = data.subset(fold != f)
            held = data.subset(fold == f)
            model = fit_fn(train, candidate)
            pred = predict_fn(model, held.features)
            fold_mae[gi, f] = macro_mae(held.labels, pred, data.k)
    mean_mae = fold_mae.mean(axis=1)
    # argmin on the reversed array lands on the largest l2 among ties.
    best = len(grid) - 1 - int(np.argmin(mean_mae[::-1]))
    report = CvReport(
        grid=grid,
        fold_mae=fold_mae,
        mean_mae=mean_mae,
        selected_l2=grid[best],
        stratified=stratified,
        warnings=warnings,
    )
    return grid[best], report
