import numpy as np
import pytest

from oracles import enumerate_chain, random_params, sequence_score
from stormcrf.chain_crf import (
    ChainCrfParams,
    InferenceMode,
    batch_label_distribution,
    batch_marginals,
    batch_scores,
    batch_viterbi,
    compute_potentials,
    edge_marginals,
    forward_backward,
    interval_query,
    label_distribution,
    node_marginals,
    viterbi,
)

EXP = InferenceMode(domain="exp")
LOG = InferenceMode(domain="log")
CONSTRAINED = InferenceMode(constrain_transitions=True)


def completed(params, x, mode=EXP):
    return forward_backward(compute_potentials(params, x, mode))


def test_zero_weights_give_unit_potentials():
    params = ChainCrfParams.zeros(4, 3)
    msgs = compute_potentials(params, np.array([0.4, -1.2, 1.0]), EXP)
    assert np.allclose(msgs.node_potentials, 1.0)
    assert np.allclose(msgs.edge_potentials, 1.0)


def test_bias_only_log_weight_exponentiates():
    params = ChainCrfParams(np.array([[[0.0], [np.log(2.0)]]]), np.zeros((0, 2, 2, 1)))
    msgs = compute_potentials(params, np.array([1.0]), EXP)
    assert np.allclose(msgs.node_potentials[0], [1.0, 2.0])


def test_constrained_zero_weights_blocks_forbidden_cell():
    params = ChainCrfParams.zeros(3, 1)
    msgs = compute_potentials(params, np.array([1.0]), InferenceMode(domain="exp", constrain_transitions=True))
    assert np.allclose(msgs.edge_potentials[0], [[1.0, 0.0], [1.0, 1.0]])
    log_msgs = compute_potentials(
        params, np.array([1.0]), InferenceMode(domain="log", constrain_transitions=True)
    )
    assert log_msgs.edge_potentials[0, 0, 1] == -np.inf


def test_potentials_validate_input():
    params = ChainCrfParams.zeros(3, 2)
    with pytest.raises(ValueError):
        compute_potentials(params, np.array([1.0, 2.0, 3.0]))
    with pytest.raises(ValueError):
        compute_potentials(params, np.array([np.nan, 1.0]))


def test_single_node_chain_partition():
    params = ChainCrfParams(np.array([[[0.0], [np.log(3.0)]]]), np.zeros((0, 2, 2, 1)))
    msgs = completed(params, np.array([1.0]))
    assert np.isclose(np.exp(msgs.log_z), 4.0)  # psi = (1, 3)
    assert np.allclose(msgs.forward, 1.0)
    assert np.allclose(msgs.backward, 1.0)
    assert np.allclose(node_marginals(msgs)[0], [0.25, 0.75])
    assert viterbi(msgs).tolist() == [1]


def test_uniform_chain_partition_counts_configurations():
    # K categories -> K-1 binary nodes -> 2^(K-1) unit-weight configurations
    x = np.array([0.7, 1.0])
    msgs3 = completed(ChainCrfParams.zeros(3, 2), x)
    assert np.isclose(np.exp(msgs3.log_z), 4.0)
    msgs4 = completed(ChainCrfParams.zeros(4, 2), x)
    assert np.isclose(np.exp(msgs4.log_z), 8.0)
    assert np.allclose(node_marginals(msgs3), 0.5)
    assert np.allclose(edge_marginals(msgs3), 0.25)
    assert viterbi(msgs3).tolist() == [0, 0]  # tie-break to bit 0


@pytest.mark.parametrize("domain", ["exp", "log"])
def test_partition_matches_enumeration(domain):
    rng = np.random.default_rng(0)
    params = random_params(rng, k=5, d=3)
    x = rng.normal(size=3)
    msgs = completed(params, x, InferenceMode(domain=domain))
    ref = enumerate_chain(params, x)
    assert np.isclose(np.exp(msgs.log_z), ref["z"], rtol=1e-9)


def test_node_marginals_match_enumeration():
    rng = np.random.default_rng(1)
    params = random_params(rng, k=6, d=2)
    x = rng.normal(size=2)
    msgs = completed(params, x)
    ref = enumerate_chain(params, x)
    assert np.allclose(node_marginals(msgs), ref["node_marginals"], atol=1e-9)
    sums = node_marginals(msgs).sum(axis=1)
    assert np.allclose(sums, 1.0, atol=1e-12)


def test_edge_marginals_match_enumeration_and_nodes():
    rng = np.random.default_rng(2)
    params = random_params(rng, k=6, d=3)
    x = rng.normal(size=3)
    msgs = completed(params, x)
    ref = enumerate_chain(params, x)
    em = edge_marginals(msgs)
    nm = node_marginals(msgs)
    assert np.allclose(em, ref["edge_marginals"], atol=1e-9)
    assert np.allclose(em.sum(axis=(1, 2)), 1.0, atol=1e-12)
    # marginalising an edge over either axis reproduces the node marginals
    assert np.allclose(em.sum(axis=2), nm[:-1], atol=1e-10)
    assert np.allclose(em.sum(axis=1), nm[1:], atol=1e-10)


def test_constrained_edge_marginal_kills_forbidden_cell():
    rng = np.random.default_rng(3)
    params = random_params(rng, k=5, d=2)
    x = rng.normal(size=2)
    msgs = completed(params, x, InferenceMode(constrain_transitions=True))
    em = edge_marginals(msgs)
    assert np.all(em[:, 0, 1] == 0.0)


def test_viterbi_matches_enumeration():
    rng = np.random.default_rng(4)
    for _ in range(25):
        params = random_params(rng, k=6, d=3)
        x = rng.normal(size=3)
        msgs = completed(params, x)
        path = viterbi(msgs)
        ref = enumerate_chain(params, x)
        assert np.isclose(
            sequence_score(params, x, tuple(path)), ref["best_score"], atol=1e-9
        )
        # deterministic tie-break reproduces the lexicographic enumeration order
        assert path.tolist() == ref["best_sequence"].tolist()


def test_label_distribution_uniform_over_valid_codes():
    params = ChainCrfParams.zeros(3, 1)
    msgs = completed(params, np.array([1.0]), InferenceMode(constrain_transitions=True))
    assert np.allclose(label_distribution(msgs), [1 / 3, 1 / 3, 1 / 3])


def test_label_distribution_single_node():
    params = ChainCrfParams(np.array([[[0.0], [np.log(3.0)]]]), np.zeros((0, 2, 2, 1)))
    msgs = completed(params, np.array([1.0]), InferenceMode(constrain_transitions=True))
    assert np.allclose(label_distribution(msgs), [0.25, 0.75])


def test_label_distribution_matches_enumeration():
    rng = np.random.default_rng(5)
    params = random_params(rng, k=7, d=2)
    x = rng.normal(size=2)
    msgs = completed(params, x, InferenceMode(constrain_transitions=True))
    ref = enumerate_chain(params, x, constrained=True)
    dist = label_distribution(msgs)
    assert np.allclose(dist, ref["label_probs"], atol=1e-9)
    assert np.isclose(dist.sum(), 1.0, atol=1e-10)


def test_label_distribution_requires_constrained_mode():
    params = ChainCrfParams.zeros(4, 1)
    msgs = completed(params, np.array([1.0]), EXP)
    with pytest.raises(ValueError):
        label_distribution(msgs)


def test_interval_query_examples_and_oracle():
    params = ChainCrfParams.zeros(3, 1)
    msgs = completed(params, np.array([1.0]), InferenceMode(constrain_transitions=True))
    assert np.isclose(interval_query(msgs, 1, 3), 1.0)
    assert np.isclose(interval_query(msgs, 1, 2), 2 / 3)
    rng = np.random.default_rng(6)
    params = random_params(rng, k=7, d=3)
    x = rng.normal(size=3)
    msgs = completed(params, x, InferenceMode(constrain_transitions=True))
    ref = enumerate_chain(params, x, constrained=True)
    assert np.isclose(interval_query(msgs, 2, 4), ref["label_probs"][1:4].sum(), atol=1e-9)
    with pytest.raises(ValueError):
        interval_query(msgs, 4, 2)
    with pytest.raises(ValueError):
        interval_query(msgs, 0, 3)


def test_normaliser_consistent_at_every_position():
    rng = np.random.default_rng(7)
    params = random_params(rng, k=8, d=3)
    x = rng.normal(size=3)
    msgs = completed(params, x, EXP)
    per_position = (msgs.forward * msgs.node_potentials * msgs.backward).sum(axis=1)
    assert np.allclose(per_position, np.exp(msgs.log_z), rtol=1e-9)
    lmsgs = completed(params, x, LOG)
    stacked = lmsgs.forward + lmsgs.node_potentials + lmsgs.backward
    per_position = np.logaddexp(stacked[:, 0], stacked[:, 1])
    assert np.allclose(per_position, lmsgs.log_z, rtol=1e-9)


def test_exp_and_log_domains_agree():
    rng = np.random.default_rng(8)
    for _ in range(10):
        k = int(rng.integers(2, 12))
        params = random_params(rng, k=k, d=3, scale=2.0)
        x = rng.normal(size=3)
        m_exp = completed(params, x, EXP)
        m_log = completed(params, x, LOG)
        assert np.isclose(m_exp.log_z, m_log.log_z, rtol=1e-10)
        assert np.allclose(node_marginals(m_exp), node_marginals(m_log), atol=1e-7)
        if k > 2:
            assert np.allclose(edge_marginals(m_exp), edge_marginals(m_log), atol=1e-7)


def test_auto_domain_switches_on_large_scores():
    params = ChainCrfParams(
        np.full((2, 2, 1), 250.0), np.zeros((1, 2, 2, 1))
    )
    msgs = compute_potentials(params, np.array([1.0]), InferenceMode(domain="auto"))
    assert msgs.mode.domain == "log"
    small = ChainCrfParams.zeros(3, 1)
    msgs = compute_potentials(small, np.array([1.0]), InferenceMode(domain="auto"))
    assert msgs.mode.domain == "exp"


def test_auto_domain_guards_chain_product_overflow():
    # every score is 100 (< 200) but the 17-factor product would overflow
    params = ChainCrfParams(
        np.full((9, 2, 1), 100.0), np.full((8, 2, 2, 1), 100.0)
    )
    msgs = compute_potentials(params, np.array([1.0]), InferenceMode(domain="auto"))
    assert msgs.mode.domain == "log"
    fb = forward_backward(msgs)
    assert np.isfinite(fb.log_z)


def test_constrained_codeword_mass_sums_to_one():
    rng = np.random.default_rng(9)
    for _ in range(10):
        k = int(rng.integers(2, 9))
        params = random_params(rng, k=k, d=2)
        x = rng.normal(size=2)
        msgs = completed(params, x, InferenceMode(constrain_transitions=True))
        assert np.isclose(label_distribution(msgs).sum(), 1.0, atol=1e-10)


def test_batch_paths_match_single_instance():
    rng = np.random.default_rng(10)
    params = random_params(rng, k=6, d=3)
    x = rng.normal(size=(7, 3))
    for mode in (EXP, LOG, CONSTRAINED):
        log_z, node_m, edge_m = batch_marginals(params, x, mode)
        bits = batch_viterbi(params, x, mode)
        for i in range(x.shape[0]):
            msgs = completed(params, x[i], mode)
            assert np.isclose(log_z[i], msgs.log_z, atol=1e-12)
            assert np.allclose(node_m[:, i], node_marginals(msgs), atol=1e-12)
            assert np.allclose(edge_m[:, i], edge_marginals(msgs), atol=1e-12)
            assert bits[i].tolist() == viterbi(msgs).tolist()
    dist = batch_label_distribution(params, x, CONSTRAINED)
    for i in range(x.shape[0]):
        msgs = completed(params, x[i], CONSTRAINED)
        assert np.allclose(dist[i], label_distribution(msgs), atol=1e-12)


def test_batch_label_distribution_requires_constraint():
    params = ChainCrfParams.zeros(4, 2)
    with pytest.raises(ValueError):
        batch_label_distribution(params, np.zeros((2, 2)), EXP)


def test_two_category_chain_has_no_edges():
    params = ChainCrfParams.zeros(2, 3)
    x = np.array([1.0, -1.0, 1.0])
    msgs = completed(params, x)
    assert msgs.edge_potentials.shape == (0, 2, 2)
    assert edge_marginals(msgs).shape == (0, 2, 2)
    node_scores, edge_scores = batch_scores(params, x[None, :])
    assert edge_scores.shape == (0, 1, 2, 2)


def test_params_validation():
    with pytest.raises(ValueError):
        ChainCrfParams(np.zeros((3, 2, 2)), np.zeros((1, 2, 2, 2)))
    with pytest.raises(ValueError):
        ChainCrfParams(np.full((2, 2, 2), np.inf), np.zeros((1, 2, 2, 2)))
    with pytest.raises(ValueError):
        InferenceMode(domain="weird")
