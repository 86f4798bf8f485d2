"""Exact inference over a heterogeneous linear chain of binary variables.

The chain has K-1 nodes and K-2 edges.  Every node n carries its own
2 x D weight matrix and every edge e its own 2 x 2 x D weight tensor, so
nothing is shared across positions.  For one feature vector x the node
potentials are exp(W[n] @ x) and the edge potentials exp(U[e] @ x), with
the edge matrix oriented rows = earlier node, columns = later node.

Inference runs either in the exponential domain (plain sum-product, fast
for short chains) or in the log domain (log-sum-exp recursions).  The
"auto" domain picks exp when K < 30 and all |scores| < 200, else log.
Constrained mode zeroes the 0 -> 1 edge potential cell so only monotone
non-increasing bit sequences (valid cumulative codes) carry mass.

All message passing is written over arrays with a leading batch axis and
shared by the single-instance operations and the vectorised training
path, which sweeps every instance forward one position at a time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "InferenceMode",
    "ChainCrfParams",
    "ChainMessages",
    "compute_potentials",
    "forward_backward",
    "node_marginals",
    "edge_marginals",
    "viterbi",
    "label_distribution",
    "interval_query",
    "batch_scores",
    "batch_marginals",
    "batch_viterbi",
    "batch_label_distribution",
]

EXP_DOMAIN_MAX_K = 30
EXP_DOMAIN_MAX_SCORE = 200.0
# The exp-domain product accumulates up to (K-1)+(K-2) factors; keep the
# worst-case log mass clear of the float64 overflow point (~709).
EXP_DOMAIN_MAX_CHAIN_MASS = 600.0


@dataclass(frozen=True)
class InferenceMode:
    """How to run inference: numeric domain and transition constraint."""

    domain: str = "auto"  # "exp", "log" or "auto"
    constrain_transitions: bool = False

    def __post_init__(self):
        if self.domain not in ("exp", "log", "auto"):
            raise ValueError(f"unknown inference domain {self.domain!r}")


@dataclass
class ChainCrfParams:
    """Per-node 2xD and per-edge 2x2xD weights of the chain."""

    node_weights: np.ndarray  # (K-1, 2, D)
    edge_weights: np.ndarray  # (K-2, 2, 2, D)

    def __post_init__(self):
        self.node_weights = np.asarray(self.node_weights, dtype=np.float64)
        self.edge_weights = np.asarray(self.edge_weights, dtype=np.float64)
        if self.node_weights.ndim != 3 or self.node_weights.shape[1] != 2:
            raise ValueError(
                f"node_weights must be (K-1, 2, D), got {self.node_weights.shape}"
            )
        n_nodes, _, d = self.node_weights.shape
        if self.edge_weights.shape != (n_nodes - 1, 2, 2, d):
            raise ValueError(
                f"edge_weights must be ({n_nodes - 1}, 2, 2, {d}), "
                f"got {self.edge_weights.shape}"
            )
        if not (np.isfinite(self.node_weights).all() and np.isfinite(self.edge_weights).all()):
            raise ValueError("weights must be finite")

    @property
    def k(self) -> int:
        return self.node_weights.shape[0] + 1

    @property
    def d(self) -> int:
        return self.node_weights.shape[2]

    @classmethod
    def zeros(cls, k: int, d: int) -> "ChainCrfParams":
        if k < 2:
            raise ValueError(f"cardinality K must be >= 2, got {k}")
        return cls(np.zeros((k - 1, 2, d)), np.zeros((k - 2, 2, 2, d)))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.node_weights.ravel(), self.edge_weights.ravel()])

    @classmethod
    def from_vector(cls, vec, k: int, d: int) -> "ChainCrfParams":
        vec = np.asarray(vec, dtype=np.float64)
        n_node = (k - 1) * 2 * d
        n_edge = (k - 2) * 4 * d
        if vec.size != n_node + n_edge:
            raise ValueError(f"expected {n_node + n_edge} entries, got {vec.size}")
        return cls(
            vec[:n_node].reshape(k - 1, 2, d),
            vec[n_node:].reshape(k - 2, 2, 2, d),
        )


@dataclass
class ChainMessages:
    """Potentials and forward/backward state for one instance.

    In log mode every array stores log-domain values (the constrained
    edge cell becomes -inf instead of 0).
    """

    mode: InferenceMode
    node_potentials: np.ndarray  # (K-1, 2)
    edge_potentials: np.ndarray  # (K-2, 2, 2)
    forward: np.ndarray | None = None  # alpha, (K-1, 2)
    backward: np.ndarray | None = None  # beta, (K-1, 2)
    gamma: np.ndarray | None = None  # alpha (*) psi
    delta: np.ndarray | None = None  # psi (*) beta
    log_z: float | None = None

    @property
    def k(self) -> int:
        return self.node_potentials.shape[0] + 1

    @property
    def completed(self) -> bool:
        return self.log_z is not None


def _resolve_domain(mode: InferenceMode, k: int, node_scores, edge_scores) -> str:
    if mode.domain != "auto":
        return mode.domain
    # Short-chain heuristic plus a chain-aware overflow check: the product
    # over all positions can still overflow even when each score is < 200.
    node_abs = np.abs(node_scores)
    max_abs = float(node_abs.max(initial=0.0))
    chain_mass = float(node_abs.max(axis=(1, 2), initial=0.0).sum())
    if edge_scores.size:
        edge_abs = np.abs(edge_scores)
        max_abs = max(max_abs, float(edge_abs.max()))
        chain_mass += float(edge_abs.max(axis=(1, 2, 3)).sum())
    if (
        k < EXP_DOMAIN_MAX_K
        and max_abs < EXP_DOMAIN_MAX_SCORE
        and chain_mass < EXP_DOMAIN_MAX_CHAIN_MASS
    ):
        return "exp"
    return "log"


def batch_scores(params: ChainCrfParams, x: np.ndarray):
    """Linear scores W[n] x and U[e] x for a batch of feature rows.

    Returns node scores (K-1, N, 2) and edge scores (K-2, N, 2, 2).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.d:
        raise ValueError(
            f"feature matrix must be (N, {params.d}), got {x.shape}"
        )
    if not np.isfinite(x).all():
        raise ValueError("features must be finite")
    k = params.k
    n = x.shape[0]
    node_scores = np.tensordot(params.node_weights, x, axes=([2], [1])).transpose(0, 2, 1)
    if k > 2:
        edge_scores = np.tensordot(params.edge_weights, x, axes=([3], [1])).transpose(
            0, 3, 1, 2
        )
    else:
        edge_scores = np.zeros((0, n, 2, 2))
    return node_scores, edge_scores


def _potentials_from_scores(node_scores, edge_scores, domain: str, constrained: bool):
    """Exponentiate scores (exp domain) and apply the transition ban."""
    if domain == "exp":
        psi = np.exp(node_scores)
        big_psi = np.exp(edge_scores)
        if constrained and big_psi.shape[0]:
            big_psi[:, :, 0, 1] = 0.0
    else:
        psi = node_scores.copy()
        big_psi = edge_scores.copy()
        if constrained and big_psi.shape[0]:
            big_psi[:, :, 0, 1] = -np.inf
    return psi, big_psi


def _sweep(psi, big_psi, domain: str):
    """Run forward and backward passes over a (position, batch, state) stack.

    Returns (alpha, beta, gamma, delta, log_z) with log_z shaped (N,).
    """
    n_nodes = psi.shape[0]
    alpha = np.empty_like(psi)
    beta = np.empty_like(psi)
    if domain == "exp":
        alpha[0] = 1.0
        for e in range(n_nodes - 1):
            g0 = alpha[e, :, 0] * psi[e, :, 0]
            g1 = alpha[e, :, 1] * psi[e, :, 1]
            p = big_psi[e]
            alpha[e + 1, :, 0] = p[:, 0, 0] * g0 + p[:, 1, 0] * g1
            alpha[e + 1, :, 1] = p[:, 0, 1] * g0 + p[:, 1, 1] * g1
        beta[n_nodes - 1] = 1.0
        for e in range(n_nodes - 2, -1, -1):
            d0 = psi[e + 1, :, 0] * beta[e + 1, :, 0]
            d1 = psi[e + 1, :, 1] * beta[e + 1, :, 1]
            p = big_psi[e]
            beta[e, :, 0] = p[:, 0, 0] * d0 + p[:, 0, 1] * d1
            beta[e, :, 1] = p[:, 1, 0] * d0 + p[:, 1, 1] * d1
        gamma = alpha * psi
        delta = psi * beta
        z = (gamma[0] * beta[0]).sum(axis=1)
        log_z = np.log(z)
    else:
        alpha[0] = 0.0
        for e in range(n_nodes - 1):
            g = alpha[e] + psi[e]
            alpha[e + 1] = np.logaddexp(
                big_psi[e, :, 0, :] + g[:, 0, None],
                big_psi[e, :, 1, :] + g[:, 1, None],
            )
        beta[n_nodes - 1] = 0.0
        for e in range(n_nodes - 2, -1, -1):
            dlt = psi[e + 1] + beta[e + 1]
            beta[e] = np.logaddexp(
                big_psi[e, :, :, 0] + dlt[:, 0, None],
                big_psi[e, :, :, 1] + dlt[:, 1, None],
            )
        gamma = alpha + psi
        delta = psi + beta
        log_z = np.logaddexp(gamma[0, :, 0] + beta[0, :, 0], gamma[0, :, 1] + beta[0, :, 1])
    return alpha, beta, gamma, delta, log_z


def compute_potentials(params: ChainCrfParams, x, mode: InferenceMode | None = None) -> ChainMessages:
    """Evaluate node and edge potentials for one feature vector.

    The feature vector must already contain the constant bias feature.
    """
    mode = mode or InferenceMode()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a single feature vector, got shape {x.shape}")
    node_scores, edge_scores = batch_scores(params, x[None, :])
    domain = _resolve_domain(mode, params.k, node_scores, edge_scores)
    psi, big_psi = _potentials_from_scores(
        node_scores, edge_scores, domain, mode.constrain_transitions
    )
    resolved = InferenceMode(domain=domain, constrain_transitions=mode.constrain_transitions)
    return ChainMessages(
        mode=resolved,
        node_potentials=psi[:, 0, :],
        edge_potentials=big_psi[:, 0, :, :],
    )


def forward_backward(msgs: ChainMessages) -> ChainMessages:
    """Fill alpha/beta/gamma/delta and the log normaliser in place."""
    psi = msgs.node_potentials[:, None, :]
    big_psi = msgs.edge_potentials[:, None, :, :]
    alpha, beta, gamma, delta, log_z = _sweep(psi, big_psi, msgs.mode.domain)
    msgs.forward = alpha[:, 0, :]
    msgs.backward = beta[:, 0, :]
    msgs.gamma = gamma[:, 0, :]
    msgs.delta = delta[:, 0, :]
    msgs.log_z = float(log_z[0])
    return msgs


def _require_completed(msgs: ChainMessages):
    if not msgs.completed:
        raise ValueError("forward_backward has not been run on these messages")


def node_marginals(msgs: ChainMessages) -> np.ndarray:
    """P(y_n) for every node, shape (K-1, 2); rows sum to 1."""
    _require_completed(msgs)
    if msgs.mode.domain == "exp":
        unnorm = msgs.gamma * msgs.backward
        return unnorm / unnorm.sum(axis=1, keepdims=True)
    return np.exp(msgs.gamma + msgs.backward - msgs.log_z)


def edge_marginals(msgs: ChainMessages) -> np.ndarray:
    """P(y_n, y_{n+1}) for every edge, shape (K-2, 2, 2)."""
    _require_completed(msgs)
    if msgs.k == 2:
        return np.zeros((0, 2, 2))
    if msgs.mode.domain == "exp":
        unnorm = (
            msgs.gamma[:-1, :, None]
            * msgs.edge_potentials
            * msgs.delta[1:, None, :]
        )
        return unnorm / np.exp(msgs.log_z)
    return np.exp(
        msgs.gamma[:-1, :, None]
        + msgs.edge_potentials
        + msgs.delta[1:, None, :]
        - msgs.log_z
    )


def _log_potentials(msgs: ChainMessages):
    if msgs.mode.domain == "log":
        return msgs.node_potentials, msgs.edge_potentials
    with np.errstate(divide="ignore"):
        return np.log(msgs.node_potentials), np.log(msgs.edge_potentials)


def viterbi(msgs: ChainMessages) -> np.ndarray:
    """Most probable bit sequence; ties prefer bit 0 at the earliest position."""
    node_s, edge_s = _log_potentials(msgs)
    return _viterbi_scores(node_s[:, None, :], edge_s[:, None, :, :])[0]


def _viterbi_scores(node_s, edge_s) -> np.ndarray:
    """Max-product decode on log scores, batched; shape in (K-1, N, 2)."""
    n_nodes, n = node_s.shape[:2]
    # suffix[n][s]: best score of everything after node n given y_n = s.
    suffix = np.zeros((n_nodes, n, 2))
    for e in range(n_nodes - 2, -1, -1):
        cand = edge_s[e] + (node_s[e + 1] + suffix[e + 1])[:, None, :]
        suffix[e] = cand.max(axis=2)
    bits = np.empty((n, n_nodes), dtype=np.int8)
    head = node_s[0] + suffix[0]
    bits[:, 0] = head[:, 1] > head[:, 0]
    rows = np.arange(n)
    for e in range(n_nodes - 1):
        nxt = edge_s[e][rows, bits[:, e], :] + node_s[e + 1] + suffix[e + 1]
        bits[:, e + 1] = nxt[:, 1] > nxt[:, 0]
    return bits


def label_distribution(msgs: ChainMessages) -> np.ndarray:
    """Probability of each ordinal label 1..K under constrained inference.

    Only valid under the transition ban; otherwise invalid codewords hold
    mass and the telescoping node-marginal identity breaks.
    """
    _require_completed(msgs)
    if not msgs.mode.constrain_transitions:
        raise ValueError(
            "label_distribution requires constrained transitions; rerun "
            "inference with constrain_transitions=True"
        )
    p_one = node_marginals(msgs)[:, 1]
    return _telescope(p_one)


def _telescope(p_one: np.ndarray) -> np.ndarray:
    """P(label=k) = P(y_{k-1}=1) - P(y_k=1) with boundary conventions."""
    k = p_one.shape[0] + 1
    dist = np.empty(k)
    dist[0] = 1.0 - p_one[0]
    dist[1:-1] = p_one[:-1] - p_one[1:]
    dist[-1] = p_one[-1]
    return np.maximum(dist, 0.0)


def interval_query(msgs: ChainMessages, a: int, b: int) -> float:
    """P(a <= label <= b) for 1 <= a <= b <= K, constrained mode."""
    k = msgs.k
    if not (1 <= a <= b <= k):
        raise ValueError(f"need 1 <= a <= b <= {k}, got a={a}, b={b}")
    dist = label_distribution(msgs)
    return float(dist[a - 1 : b].sum())


# ---------------------------------------------------------------------------
# Batched entry points used by training and bulk prediction.  Layout is
# position-major: one forward step advances all instances at once.
# ---------------------------------------------------------------------------


def batch_marginals(params: ChainCrfParams, x, mode: InferenceMode | None = None):
    """log Z, node marginals and edge marginals for a feature matrix.

    Returns (log_z (N,), node_marg (K-1, N, 2), edge_marg (K-2, N, 2, 2)).
    """
    mode = mode or InferenceMode()
    node_scores, edge_scores = batch_scores(params, x)
    domain = _resolve_domain(mode, params.k, node_scores, edge_scores)
    psi, big_psi = _potentials_from_scores(
        node_scores, edge_scores, domain, mode.constrain_transitions
    )
    alpha, beta, gamma, delta, log_z = _sweep(psi, big_psi, domain)
    if domain == "exp":
        unnorm = gamma * beta
        node_marg = unnorm / unnorm.sum(axis=2, keepdims=True)
        if big_psi.shape[0]:
            edge_marg = (
                gamma[:-1, :, :, None] * big_psi * delta[1:, :, None, :]
            ) / np.exp(log_z)[None, :, None, None]
        else:
            edge_marg = np.zeros((0, x.shape[0], 2, 2))
    else:
        node_marg = np.exp(gamma + beta - log_z[None, :, None])
        if big_psi.shape[0]:
            edge_marg = np.exp(
                gamma[:-1, :, :, None]
                + big_psi
                + delta[1:, :, None, :]
                - log_z[None, :, None, None]
            )
        else:
            edge_marg = np.zeros((0, x.shape[0], 2, 2))
    return log_z, node_marg, edge_marg


def batch_viterbi(params: ChainCrfParams, x, mode: InferenceMode | None = None) -> np.ndarray:
    """Most probable bit sequence per row, shape (N, K-1)."""
    mode = mode or InferenceMode()
    node_scores, edge_scores = batch_scores(params, x)
    if mode.constrain_transitions and edge_scores.shape[0]:
        edge_scores = edge_scores.copy()
        edge_scores[:, :, 0, 1] = -np.inf
    return _viterbi_scores(node_scores, edge_scores)


def batch_label_distribution(
    params: ChainCrfParams, x, mode: InferenceMode | None = None
) -> np.ndarray:
    """Label probabilities per row, shape (N, K); requires constrained mode."""
    mode = mode or InferenceMode(constrain_transitions=True)
    if not mode.constrain_transitions:
        raise ValueError("label distributions require constrained transitions")
    _, node_marg, _ = batch_marginals(params, x, mode)
    p_one = node_marg[:, :, 1]  # (K-1, N)
    n = p_one.shape[1]
    k = p_one.shape[0] + 1
    dist = np.empty((n, k))
    dist[:, 0] = 1.0 - p_one[0]
    if k > 2:
        dist[:, 1:-1] = (p_one[:-1] - p_one[1:]).T
    dist[:, -1] = p_one[-1]
    return np.maximum(dist, 0.0)
