"""The structured ordinal regression estimator.

Labels become cumulative binary codes and a heterogeneous chain CRF is
trained on them by minimising the negative log-likelihood (sum over
instances, no 1/N factor, so objective and gradient share a convention)
plus an l2 penalty that skips bias weights.  Gradients are the classic
expected-minus-empirical feature counts from the node and edge
marginals.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .chain_crf import (
    ChainCrfParams,
    InferenceMode,
    batch_label_distribution,
    batch_marginals,
    batch_viterbi,
)
from .data import OrdinalDataset, Standardizer, fit_standardizer
from .encoding import encode_labels, valid_codes
from .optim import minimize_smooth
from .selection import DEFAULT_L2_GRID, CvReport, select_l2

__all__ = [
    "TrainConfig",
    "StormModel",
    "nll",
    "nll_gradient",
    "fit",
    "fit_cv",
    "predict",
    "predict_proba",
    "DEFAULT_L2_GRID",
]


@dataclass(frozen=True)
class TrainConfig:
    l2_strength: float = 1.0
    max_iterations: int = 500
    gradient_tolerance: float = 1e-6
    seed: int = 0
    mode: InferenceMode = InferenceMode()
    prediction: str = "viterbi"  # or "marginal"

    def __post_init__(self):
        if self.l2_strength < 0:
            raise ValueError("l2_strength must be non-negative")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.gradient_tolerance <= 0:
            raise ValueError("gradient_tolerance must be positive")
        if self.prediction not in ("viterbi", "marginal"):
            raise ValueError(f"unknown prediction mode {self.prediction!r}")


@dataclass
class StormModel:
    params: ChainCrfParams
    config: TrainConfig
    standardizer: Standardizer
    converged: bool = True
    nll_trace: list = field(default_factory=list)
    cv: CvReport | None = None

    @property
    def k(self) -> int:
        return self.params.k

    @property
    def d_raw(self) -> int:
        return self.standardizer.mean.size


def _penalty_mask(k: int, d: int) -> np.ndarray:
    """1 for penalised coordinates, 0 for bias (last feature) weights."""
    node = np.ones((k - 1, 2, d))
    node[:, :, -1] = 0.0
    edge = np.ones((k - 2, 2, 2, d))
    if edge.size:
        edge[:, :, :, -1] = 0.0
    return np.concatenate([node.ravel(), edge.ravel()])


def _empirical_counts(x: np.ndarray, bits: np.ndarray) -> np.ndarray:
    """Observed feature counts for every node and edge state, flattened."""
    onehot = np.stack([1 - bits, bits], axis=2).astype(np.float64)  # (N, K-1, 2)
    node = np.einsum("nki,nd->kid", onehot, x)
    if bits.shape[1] > 1:
        edge = np.einsum("nei,nel,nd->eild", onehot[:, :-1], onehot[:, 1:], x)
    else:
        edge = np.zeros((0, 2, 2, x.shape[1]))
    return np.concatenate([node.ravel(), edge.ravel()])


def _objective(theta, x, k, d, l2, mode, emp_flat, mask):
    """Fused penalised NLL and gradient over the flattened parameters."""
    params = ChainCrfParams.from_vector(theta, k, d)
    log_z, node_marg, edge_marg = batch_marginals(params, x, mode)
    exp_node = np.tensordot(node_marg, x, axes=([1], [0]))
    if edge_marg.shape[0]:
        exp_edge = np.tensordot(edge_marg, x, axes=([1], [0]))
    else:
        exp_edge = np.zeros((0, 2, 2, d))
    expected_flat = np.concatenate([exp_node.ravel(), exp_edge.ravel()])
    penalised = mask * theta
    value = -float(emp_flat @ theta) + float(log_z.sum()) + 0.5 * l2 * float(
        penalised @ theta
    )
    grad = expected_flat - emp_flat + l2 * penalised
    return value, grad


def _check_shapes(params: ChainCrfParams, data: OrdinalDataset):
    if data.k != params.k:
        raise ValueError(f"dataset K={data.k} does not match params K={params.k}")
    if data.d != params.d:
        raise ValueError(
            f"dataset has {data.d} features but params expect {params.d} "
            "(the bias column must already be appended)"
        )


def nll(params: ChainCrfParams, data: OrdinalDataset, l2: float, mode=None) -> float:
    """Penalised negative log-likelihood of encoded labels (sum over rows)."""
    _check_shapes(params, data)
    mode = mode or InferenceMode()
    bits = encode_labels(data.labels, data.k)
    emp = _empirical_counts(data.features, bits)
    mask = _penalty_mask(params.k, params.d)
    value, _ = _objective(
        params.to_vector(), data.features, params.k, params.d, l2, mode, emp, mask
    )
    return value


def nll_gradient(
    params: ChainCrfParams, data: OrdinalDataset, l2: float, mode=None
) -> ChainCrfParams:
    """Analytic gradient with the same shape as the parameters."""
    _check_shapes(params, data)
    mode = mode or InferenceMode()
    bits = encode_labels(data.labels, data.k)
    emp = _empirical_counts(data.features, bits)
    mask = _penalty_mask(params.k, params.d)
    _, grad = _objective(
        params.to_vector(), data.features, params.k, params.d, l2, mode, emp, mask
    )
    return ChainCrfParams.from_vector(grad, params.k, params.d)


def fit(data: OrdinalDataset, config: TrainConfig) -> StormModel:
    """Standardize, append bias, and train from all-zero weights."""
    if data.n < 1:
        raise ValueError("cannot fit on an empty dataset")
    standardizer = fit_standardizer(data.features)
    x = standardizer.prepare(data.features)
    k, d = data.k, x.shape[1]
    bits = encode_labels(data.labels, k)
    emp = _empirical_counts(x, bits)
    mask = _penalty_mask(k, d)

    def fun(theta):
        return _objective(theta, x, k, d, config.l2_strength, config.mode, emp, mask)

    result = minimize_smooth(
        fun,
        np.zeros((k - 1) * 2 * d + (k - 2) * 4 * d),
        max_iterations=config.max_iterations,
        gradient_tolerance=config.gradient_tolerance,
    )
    return StormModel(
        params=ChainCrfParams.from_vector(result.x, k, d),
        config=config,
        standardizer=standardizer,
        converged=result.converged,
        nll_trace=result.trace,
    )


def _prepare(model: StormModel, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    prepared = model.standardizer.prepare(x)
    if single:
        prepared = prepared[None, :]
    return prepared, single


def predict(model: StormModel, x):
    """Ordinal label(s) for raw feature vector(s).

    Viterbi mode decodes the best path and repairs it to the nearest
    valid code (ties toward the smaller label); marginal mode takes the
    argmax of the constrained label distribution.
    """
    prepared, single = _prepare(model, x)
    if model.config.prediction == "viterbi":
        bits = batch_viterbi(model.params, prepared, model.config.mode)
        codes = valid_codes(model.k)
        hamming = (bits[:, None, :] != codes[None, :, :]).sum(axis=2)
        labels = 1 + np.argmin(hamming, axis=1)
    else:
        proba = batch_label_distribution(
            model.params, prepared, _constrained(model.config.mode)
        )
        labels = 1 + np.argmax(proba, axis=1)
    labels = labels.astype(np.int64)
    return int(labels[0]) if single else labels


def _constrained(mode: InferenceMode) -> InferenceMode:
    return InferenceMode(domain=mode.domain, constrain_transitions=True)


def predict_proba(model: StormModel, x):
    """Label probabilities under constrained inference; rows sum to 1."""
    prepared, single = _prepare(model, x)
    proba = batch_label_distribution(
        model.params, prepared, _constrained(model.config.mode)
    )
    return proba[0] if single else proba


def fit_cv(data: OrdinalDataset, grid=DEFAULT_L2_GRID, config: TrainConfig | None = None) -> StormModel:
    """5-fold stratified selection of the l2 strength, then a full refit."""
    config = config or TrainConfig()
    best_l2, report = select_l2(data, grid, config, fit, predict)
    model = fit(data, dataclasses.replace(config, l2_strength=best_l2))
    model.cv = report
    return model
