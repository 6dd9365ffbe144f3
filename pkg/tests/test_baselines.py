import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rnnextract import abstraction, baselines as B, teacher
from rnnextract.automata import Alphabet, constant_dfa
from rnnextract.corpus import BINARY, tomita
from rnnextract.rnn import init_network

import nets


def constant_net(accept: bool, hidden=3, seed=0):
    net = init_network("gru", 1, hidden, BINARY, seed)
    params = net.params()
    params["clf.w"] = np.zeros(hidden)
    params["clf.b"] = np.array([10.0 if accept else -10.0])
    return net.with_params(params)


def test_p0_gives_one_state():
    net = init_network("gru", 2, 4, BINARY, 1)
    r = B.extract_abstraction(net, abstraction.initial_partitioning())
    assert r.complete and r.dfa.n_states == 1
    assert (0 in r.dfa.accepting) == net.classify_state(net.initial_state())
    assert r.dfa.to_dfa().n_states == 1


def test_constant_network_quantized():
    net = constant_net(True)
    r = B.extract_abstraction(net, B.quantization_for(net, 2))
    assert r.complete
    assert all(0 <= t < r.dfa.n_states for t in r.dfa.transitions.values())
    assert r.dfa.accepting == frozenset(range(r.dfa.n_states))


def test_toy_network_quantization_completes():
    net = init_network("gru", 1, 4, BINARY, 3)
    r = B.extract_abstraction(net, B.quantization_for(net, 2), time_limit=10)
    assert r.complete and r.dfa.n_states <= 2 ** 4


def test_limits_give_partial_automaton():
    net = init_network("gru", 1, 16, Alphabet(tuple("abc")), 2)
    r = B.extract_abstraction(net, B.quantization_for(net, 4), max_states=20)
    assert not r.complete and r.reason == "max_states"
    assert r.dfa.n_states == 20
    assert len(r.dfa.transitions) < 20 * 3
    with pytest.raises(ValueError):
        r.dfa.to_dfa()
    doc = r.dfa.to_json()
    assert any(t is None for row in doc["delta"] for t in row)


def test_quant_map_examples():
    qp = B.QuantPartitioning(2, [-1.0, -1.0], [1.0, 1.0])
    assert tuple(qp.intervals([0.3, -0.7])) == (1, 0)
    assert B.quant_map(qp, [0.3, -0.7]) == 2
    assert tuple(qp.intervals([5.0, -5.0])) == (1, 0)  # clamped
    assert tuple(qp.intervals([1.0, -1.0])) == (1, 0)


def test_quant_validation():
    with pytest.raises(ValueError):
        B.QuantPartitioning(1, [-1.0], [1.0])
    with pytest.raises(ValueError):
        B.QuantPartitioning(2, [1.0], [1.0])


@settings(max_examples=60, deadline=None)
@given(q=st.integers(2, 5), a=st.lists(st.integers(0, 4), min_size=3, max_size=3),
       b=st.lists(st.integers(0, 4), min_size=3, max_size=3))
def test_quant_map_injective(q, a, b):
    qp = B.QuantPartitioning(q, -np.ones(3), np.ones(3))
    a, b = np.minimum(a, q - 1), np.minimum(b, q - 1)
    centers = lambda idx: -1 + (np.asarray(idx) + 0.5) * 2 / q
    same = B.quant_map(qp, centers(a)) == B.quant_map(qp, centers(b))
    assert same == (tuple(a) == tuple(b))


def test_lstm_cell_ranges_measured():
    net = init_network("lstm", 2, 4, BINARY, 0)
    lo, hi = B.state_ranges(net)
    h_dims = [0, 1, 2, 3, 8, 9, 10, 11]
    assert np.all(lo[h_dims] == -1) and np.all(hi[h_dims] == 1)
    assert np.all(lo < hi)
    assert not np.all(lo == -1)


def test_kmeans_single_cluster():
    X = np.random.default_rng(0).normal(size=(30, 3))
    kp = B.kmeans_fit(X, 1, 0)
    assert all(kp(x) == 0 for x in X)
    net = init_network("gru", 1, 3, BINARY, 0)
    r = B.extract_abstraction(net, B.kmeans_fit(B.collect_states(net, [(0, 1, 1)]), 1, 0))
    assert r.dfa.n_states == 1


def test_kmeans_two_blobs():
    rng = np.random.default_rng(4)
    A = rng.normal(0, 0.1, (40, 2)) + [5, 5]
    Bb = rng.normal(0, 0.1, (40, 2)) - [5, 5]
    kp = B.kmeans_fit(np.vstack([A, Bb]), 2, 1)
    ids_a = {kp(x) for x in A}
    ids_b = {kp(x) for x in Bb}
    assert len(ids_a) == len(ids_b) == 1 and ids_a != ids_b


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 1000), k=st.integers(1, 6))
def test_kmeans_deterministic_and_monotone(seed, k):
    X = np.random.default_rng(seed).normal(size=(25, 3))
    a, b = B.kmeans_fit(X, k, seed), B.kmeans_fit(X, k, seed)
    assert np.array_equal(a.centroids, b.centroids)
    h = a.objective_history
    assert all(h[i + 1] <= h[i] + 1e-9 for i in range(len(h) - 1))


def test_kmeans_ties_go_to_lowest_index():
    kp = B.KmeansPartitioning(np.array([[1.0, 0.0], [-1.0, 0.0]]))
    assert B.kmeans_map(kp, [0.0, 0.0]) == 0


def test_kmeans_validation():
    with pytest.raises(ValueError):
        B.kmeans_fit(np.zeros((3, 2)), 4)


def test_coverage_complete_dfa():
    net = init_network("gru", 1, 4, BINARY, 0)
    pd = B.PartialDfa(BINARY, 0, frozenset({0}), {(0, 0): 0, (0, 1): 0}, 1, True)
    rows = B.coverage_accuracy(pd, net, [0, 3, 10], 100, 0)
    assert [r.coverage for r in rows] == [100.0, 100.0, 100.0]


def test_coverage_empty_partial_dfa():
    net = init_network("gru", 1, 4, BINARY, 0)
    pd = B.PartialDfa(BINARY, 0, frozenset(), {}, 1, False)
    rows = B.coverage_accuracy(pd, net, [0, 1, 5], 100, 0)
    assert [r.coverage for r in rows] == [100.0, 0.0, 0.0]
    assert rows[1].accuracy is None
    assert "NA" in B.coverage_csv(rows)


def test_coverage_csv_format():
    rows = [B.CoverageRow(5, 50.0, 90.0), B.CoverageRow(10, 0.0, None)]
    assert B.coverage_csv(rows) == "length,coverage,accuracy\n5,50.00,90.00\n10,0.00,NA\n"


def test_random_sampling_correct_hypothesis():
    net = constant_net(False)
    cfg = B.SamplingConfig(max_length=5, per_length=50)
    assert B.random_sampling_oracle(net, constant_dfa(BINARY, False), cfg) is None


def test_random_sampling_counterexample_is_real():
    net = init_network("gru", 1, 6, BINARY, 5)
    for seed in range(5):
        hyp = constant_dfa(BINARY, not net.classify_word((0,)))
        w = B.random_sampling_oracle(net, hyp, B.SamplingConfig(max_length=6, per_length=50, seed=seed))
        assert w is not None and net.classify_word(w) != hyp.classify(w)
        assert len(w) <= 1


def test_random_sampling_checks_starting_samples_first():
    net = constant_net(True)
    cfg = B.SamplingConfig(starting_samples=((1, 1, 0), (0,)), max_length=3, per_length=10)
    assert B.random_sampling_oracle(net, constant_dfa(BINARY, False), cfg) == (0,)


def test_sampling_teacher_learns_constant():
    from rnnextract import lstar
    t = B.SamplingTeacher(constant_net(True), B.SamplingConfig(max_length=4, per_length=20))
    r = lstar.run(t)
    assert r.converged and r.dfa.n_states == 1


def test_abstraction_matches_exploration_graph():
    # on a faithful network the final partitioning splits exactly the reachable
    # states, so the breadth-first abstraction is the network's own automaton
    from test_teacher import DfaNetwork
    target = tomita(4).dfa
    net = DfaNetwork(target)
    res = teacher.extract(net, 10.0, initial_depth=3,
                          starting_samples=[tuple(w) for w in BINARY.words_up_to(4)])
    p = res.teacher.p
    ab = B.extract_abstraction(net, p)
    assert ab.complete
    assert teacher.RnnTeacher(net, partitioning=p).parallel_explore(res.dfa).kind == teacher.ACCEPT
    reached = {p.map(net.run(w)) for w in BINARY.words_up_to(7)}
    assert len(reached) == ab.dfa.n_states
    for w in BINARY.words_up_to(7):
        assert ab.dfa.classify(w) == net.classify_word(w)


@pytest.mark.slow
def test_quantization_on_trained_tomita(net_cache):
    net, ds, seed = nets.tomita_network(net_cache, 3)
    r = B.extract_abstraction(net, B.quantization_for(net, 2), time_limit=30)
    assert r.dfa.n_states > 500
    rows = B.coverage_accuracy(r.dfa, net, [10, 50], 500, 0)
    assert all(row.accuracy is None or row.accuracy == 100.0 for row in rows)


def test_random_sampling_deadline():
    from rnnextract import lstar
    net = constant_net(False)
    with pytest.raises(lstar.EquivalenceTimeout):
        B.random_sampling_oracle(net, constant_dfa(BINARY, False), B.SamplingConfig(), deadline=0.0)
    t = B.SamplingTeacher(net, B.SamplingConfig(), deadline=0.0)
    r = lstar.run(t, 5.0)
    assert not r.converged
