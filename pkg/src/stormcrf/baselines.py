"""Baseline ordinal models sharing the estimator surface of the CRF model:
ordered logit, nested binary classifiers, and multinomial logistic
regression.  All are trained with the shared deterministic minimiser on
z-scored features with an appended bias, l2-penalised except the bias.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

from .data import OrdinalDataset, Standardizer, fit_standardizer
from .optim import minimize_smooth
from .selection import DEFAULT_L2_GRID, CvReport, select_l2
from .storm import TrainConfig

__all__ = [
    "OrderedLogitModel",
    "NestedBinaryModel",
    "MultinomialLogisticModel",
    "ol_fit",
    "ol_fit_cv",
    "ol_proba",
    "ol_predict",
    "ol_thresholds",
    "nest_fit",
    "nest_fit_cv",
    "nest_proba",
    "nest_predict",
    "lr_fit",
    "lr_fit_cv",
    "lr_proba",
    "lr_predict",
]


# ---------------------------------------------------------------------------
# Ordered logit: latent score w.x + logistic noise sliced by thresholds.
# theta_1 is fixed at 0 and the K-2 free parameters are log increments,
# so realized thresholds are strictly increasing at every iterate.
# ---------------------------------------------------------------------------


@dataclass
class OrderedLogitModel:
    w: np.ndarray                     # (D,) includes the bias weight
    threshold_increments: np.ndarray  # (K-2,) log spacings above theta_1 = 0
    k: int
    standardizer: Standardizer
    config: TrainConfig
    converged: bool = True
    nll_trace: list = field(default_factory=list)
    threshold_trace: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    cv: CvReport | None = None


def _realized_thresholds(increments: np.ndarray) -> np.ndarray:
    """theta_1..theta_{K-1} with theta_1 = 0 and exp-increment spacing."""
    return np.concatenate([[0.0], np.cumsum(np.exp(increments))])


def ol_thresholds(model: OrderedLogitModel) -> np.ndarray:
    return _realized_thresholds(model.threshold_increments)


def _interval_probability(a_lo, a_hi):
    """sigma(a_hi) - sigma(a_lo), switching to the complementary form in
    the far positive tail where the direct difference cancels."""
    direct = expit(a_hi) - expit(a_lo)
    flipped = expit(-a_lo) - expit(-a_hi)
    return np.where(a_lo + a_hi > 0, flipped, direct)


def _ol_objective(theta, x, labels, k, l2):
    d = x.shape[1]
    w = theta[:d]
    thr = _realized_thresholds(theta[d:])
    thr_full = np.concatenate([[-np.inf], thr, [np.inf]])  # theta_0..theta_K
    z = x @ w
    a_hi = thr_full[labels] - z
    a_lo = thr_full[labels - 1] - z
    p = np.maximum(_interval_probability(a_lo, a_hi), 1e-300)
    s_hi = expit(a_hi)
    s_lo = expit(a_lo)
    dens_hi = s_hi * (1.0 - s_hi)
    dens_lo = s_lo * (1.0 - s_lo)

    w_pen = w.copy()
    w_pen[-1] = 0.0
    value = -float(np.log(p).sum()) + 0.5 * l2 * float(w_pen @ w)

    dlogp_dz = (dens_lo - dens_hi) / p
    grad_w = -(x.T @ dlogp_dz) + l2 * w_pen

    g_theta = np.zeros(k + 1)
    np.add.at(g_theta, labels, -dens_hi / p)
    np.add.at(g_theta, labels - 1, dens_lo / p)
    # chain rule through the cumulative-exp parameterisation
    free = g_theta[2:k]  # d(nll)/d theta_m for m = 2..K-1
    tail = np.cumsum(free[::-1])[::-1] if free.size else free
    grad_inc = np.exp(theta[d:]) * tail
    return value, np.concatenate([grad_w, grad_inc])


def ol_fit(data: OrdinalDataset, config: TrainConfig) -> OrderedLogitModel:
    if data.n < 1:
        raise ValueError("cannot fit on an empty dataset")
    standardizer = fit_standardizer(data.features)
    x = standardizer.prepare(data.features)
    d = x.shape[1]
    k = data.k
    warnings = []
    if np.unique(data.labels).size == 1:
        warnings.append("single-class training data; thresholds are unidentified")

    threshold_trace = []

    def on_iterate(theta):
        thr = _realized_thresholds(theta[d:])
        if np.any(np.diff(thr) <= 0):
            raise AssertionError("threshold ordering violated")  # unreachable by construction
        threshold_trace.append(thr)

    result = minimize_smooth(
        lambda th: _ol_objective(th, x, data.labels, k, config.l2_strength),
        np.zeros(d + k - 2),
        max_iterations=config.max_iterations,
        gradient_tolerance=config.gradient_tolerance,
        iterate_callback=on_iterate,
    )
    return OrderedLogitModel(
        w=result.x[:d],
        threshold_increments=result.x[d:],
        k=k,
        standardizer=standardizer,
        config=config,
        converged=result.converged,
        nll_trace=result.trace,
        threshold_trace=threshold_trace,
        warnings=warnings,
    )


def _prepare_rows(standardizer: Standardizer, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    prepared = standardizer.prepare(x)
    if single:
        prepared = prepared[None, :]
    return prepared, single


def ol_proba(model: OrderedLogitModel, x):
    """Probability over labels from adjacent logistic CDF differences."""
    prepared, single = _prepare_rows(model.standardizer, x)
    z = prepared @ model.w
    cdf = expit(ol_thresholds(model)[None, :] - z[:, None])  # (N, K-1)
    bounds = np.hstack(
        [np.zeros((z.size, 1)), cdf, np.ones((z.size, 1))]
    )
    proba = np.maximum(np.diff(bounds, axis=1), 0.0)
    return proba[0] if single else proba


def ol_predict(model: OrderedLogitModel, x):
    proba = np.atleast_2d(ol_proba(model, x))
    labels = (1 + np.argmax(proba, axis=1)).astype(np.int64)
    return int(labels[0]) if np.asarray(x).ndim == 1 else labels


def ol_fit_cv(data, grid=DEFAULT_L2_GRID, config: TrainConfig | None = None):
    config = config or TrainConfig()
    best_l2, report = select_l2(data, grid, config, ol_fit, ol_predict)
    model = ol_fit(data, dataclasses.replace(config, l2_strength=best_l2))
    model.cv = report
    return model


# ---------------------------------------------------------------------------
# Nested binary classifiers: the k-th logistic model separates
# {label <= k} from {label > k}; the K-1 fits are independent.
# ---------------------------------------------------------------------------


@dataclass
class NestedBinaryModel:
    weights: np.ndarray  # (K-1, D)
    k: int
    standardizer: Standardizer
    config: TrainConfig
    converged: bool = True
    warnings: list = field(default_factory=list)
    cv: CvReport | None = None


def _binary_objective(w, x, targets, l2):
    z = x @ w
    w_pen = w.copy()
    w_pen[-1] = 0.0
    value = float(np.logaddexp(0.0, z).sum() - targets @ z) + 0.5 * l2 * float(w_pen @ w)
    grad = x.T @ (expit(z) - targets) + l2 * w_pen
    return value, grad


def nest_fit(data: OrdinalDataset, config: TrainConfig) -> NestedBinaryModel:
    if data.n < 1:
        raise ValueError("cannot fit on an empty dataset")
    standardizer = fit_standardizer(data.features)
    x = standardizer.prepare(data.features)
    d = x.shape[1]
    weights = np.zeros((data.k - 1, d))
    warnings = []
    converged = True
    for split in range(1, data.k):
        targets = (data.labels > split).astype(np.float64)
        n_pos = targets.sum()
        if n_pos == 0 or n_pos == data.n:
            # single-class repartition: pin the classifier to the
            # smoothed prior through its intercept
            weights[split - 1, -1] = np.log((n_pos + 0.5) / (data.n - n_pos + 0.5))
            warnings.append(
                f"repartition at {split} has a single class; "
                "classifier pinned to the smoothed prior"
            )
            continue
        result = minimize_smooth(
            lambda w, t=targets: _binary_objective(w, x, t, config.l2_strength),
            np.zeros(d),
            max_iterations=config.max_iterations,
            gradient_tolerance=config.gradient_tolerance,
        )
        weights[split - 1] = result.x
        converged = converged and result.converged
    return NestedBinaryModel(
        weights=weights,
        k=data.k,
        standardizer=standardizer,
        config=config,
        converged=converged,
        warnings=warnings,
    )


def nest_proba(model: NestedBinaryModel, x):
    """Difference the cumulative classifiers; clip negatives, renormalise.

    A raw vector that clips to all zeros falls back to uniform.
    """
    prepared, single = _prepare_rows(model.standardizer, x)
    beyond = expit(prepared @ model.weights.T)  # (N, K-1): P(label > k)
    n = prepared.shape[0]
    cumulative = np.hstack([np.ones((n, 1)), beyond, np.zeros((n, 1))])
    raw = cumulative[:, :-1] - cumulative[:, 1:]
    clipped = np.maximum(raw, 0.0)
    totals = clipped.sum(axis=1, keepdims=True)
    dead = totals[:, 0] == 0
    clipped[dead] = 1.0 / model.k
    totals[dead] = 1.0
    proba = clipped / totals
    return proba[0] if single else proba


def nest_predict(model: NestedBinaryModel, x):
    proba = np.atleast_2d(nest_proba(model, x))
    labels = (1 + np.argmax(proba, axis=1)).astype(np.int64)
    return int(labels[0]) if np.asarray(x).ndim == 1 else labels


def nest_fit_cv(data, grid=DEFAULT_L2_GRID, config: TrainConfig | None = None):
    config = config or TrainConfig()
    best_l2, report = select_l2(data, grid, config, nest_fit, nest_predict)
    model = nest_fit(data, dataclasses.replace(config, l2_strength=best_l2))
    model.cv = report
    return model


# ---------------------------------------------------------------------------
# Multinomial logistic regression: the order-blind classification baseline.
# ---------------------------------------------------------------------------


@dataclass
class MultinomialLogisticModel:
    class_weights: np.ndarray  # (K, D)
    k: int
    standardizer: Standardizer
    config: TrainConfig
    converged: bool = True
    nll_trace: list = field(default_factory=list)
    cv: CvReport | None = None


def _lr_objective(theta, x, label_idx, k, l2):
    d = x.shape[1]
    w = theta.reshape(k, d)
    logits = x @ w.T
    lse = logsumexp(logits, axis=1)
    rows = np.arange(x.shape[0])
    w_pen = w.copy()
    w_pen[:, -1] = 0.0
    value = float(lse.sum() - logits[rows, label_idx].sum()) + 0.5 * l2 * float(
        (w_pen * w).sum()
    )
    proba = np.exp(logits - lse[:, None])
    proba[rows, label_idx] -= 1.0
    grad = proba.T @ x + l2 * w_pen
    return value, grad.ravel()


def lr_fit(data: OrdinalDataset, config: TrainConfig) -> MultinomialLogisticModel:
    if data.n < 1:
        raise ValueError("cannot fit on an empty dataset")
    standardizer = fit_standardizer(data.features)
    x = standardizer.prepare(data.features)
    result = minimize_smooth(
        lambda th: _lr_objective(th, x, data.labels - 1, data.k, config.l2_strength),
        np.zeros(data.k * x.shape[1]),
        max_iterations=config.max_iterations,
        gradient_tolerance=config.gradient_tolerance,
    )
    return MultinomialLogisticModel(
        class_weights=result.x.reshape(data.k, x.shape[1]),
        k=data.k,
        standardizer=standardizer,
        config=config,
        converged=result.converged,
        nll_trace=result.trace,
    )


def lr_proba(model: MultinomialLogisticModel, x):
    prepared, single = _prepare_rows(model.standardizer, x)
    logits = prepared @ model.class_weights.T
    proba = np.exp(logits - logsumexp(logits, axis=1)[:, None])
    return proba[0] if single else proba


def lr_predict(model: MultinomialLogisticModel, x):
    proba = np.atleast_2d(lr_proba(model, x))
    labels = (1 + np.argmax(proba, axis=1)).astype(np.int64)
    return int(labels[0]) if np.asarray(x).ndim == 1 else labels


def lr_fit_cv(data, grid=DEFAULT_L2_GRID, config: TrainConfig | None = None):
    config = config or TrainConfig()
    best_l2, report = select_l2(data, grid, config, lr_fit, lr_predict)
    model = lr_fit(data, dataclasses.replace(config, l2_strength=best_l2))
    model.cv = report
    return model
