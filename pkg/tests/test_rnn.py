import math

import numpy as np
import pytest

from rnnextract import rnn
from rnnextract.automata import Alphabet, InvalidWordError
from rnnextract.corpus import BINARY, agreement, make_train_set, tomita
from rnnextract.rnn import RnnAcceptor, TrainConfig, dataset_loss_and_grads, init_network

import nets

ABC = Alphabet(tuple("abc"))


def _sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def reference_step(net, h, symbol):
    """Scalar re-implementation of the cell equations, written independently."""
    H, W = net.hidden, net.layer_width
    out = []
    below = None
    for i, p in enumerate(net.layers):
        if i == 0:
            x = [1.0 if j == symbol else 0.0 for j in range(len(net.alphabet))]
        else:
            x = below
        state = list(h[i * W:(i + 1) * W])

        def affine(W_, v, b=None):
            return [sum(W_[r][c] * v[c] for c in range(len(v))) + (0.0 if b is None else b[r])
                    for r in range(len(W_))]

        if net.cell == "gru":
            ax = affine(p["W_x"], x, p["b_x"])
            ah = affine(p["W_h"], state, p["b_h"])
            new = []
            for j in range(H):
                r = _sig(ax[j] + ah[j])
                z = _sig(ax[H + j] + ah[H + j])
                n = math.tanh(ax[2 * H + j] + r * ah[2 * H + j])
                new.append((1 - z) * n + z * state[j])
            out += new
            below = new
        else:
            hh, c = state[:H], state[H:]
            a = [u + v for u, v in zip(affine(p["W_x"], x, p["b"]), affine(p["W_h"], hh))]
            c2 = [_sig(a[H + j]) * c[j] + _sig(a[j]) * math.tanh(a[2 * H + j]) for j in range(H)]
            h2 = [_sig(a[3 * H + j]) * math.tanh(c2[j]) for j in range(H)]
            out += h2 + c2
            below = h2
    return np.array(out)


def zero_net(cell="gru", hidden=4, clf_b=0.0):
    g = 3 if cell == "gru" else 4
    k = len(BINARY)
    if cell == "gru":
        layer = {"W_x": np.zeros((g * hidden, k)), "W_h": np.zeros((g * hidden, hidden)),
                 "b_x": np.zeros(g * hidden), "b_h": np.zeros(g * hidden)}
    else:
        layer = {"W_x": np.zeros((g * hidden, k)), "W_h": np.zeros((g * hidden, hidden)),
                 "b": np.zeros(g * hidden)}
    return RnnAcceptor(cell, 1, hidden, BINARY, [layer], np.zeros(hidden), clf_b)


def test_initial_state_dimensions():
    assert np.array_equal(init_network("gru", 1, 4, BINARY, 0).initial_state(), np.zeros(4))
    lstm = init_network("lstm", 2, 100, BINARY, 0)
    assert lstm.initial_state().shape == (400,)
    assert np.array_equal(lstm.initial_state(), lstm.initial_state())


def test_zero_gru_stays_at_zero():
    net = zero_net()
    assert np.array_equal(net.step(net.initial_state(), 1), np.zeros(4))


def test_step_is_pure():
    net = init_network("gru", 2, 5, ABC, 1)
    h = net.run((0, 1))
    a, b = net.step(h, 2), net.step(h, 2)
    assert a.tobytes() == b.tobytes()


@pytest.mark.parametrize("cell,layers", [("gru", 1), ("gru", 2), ("lstm", 1), ("lstm", 2)])
def test_step_matches_reference(cell, layers):
    net = init_network(cell, layers, 4, ABC, 7)
    h = net.initial_state()
    for sym in (0, 2, 1, 1, 0):
        nxt = net.step(h, sym)
        assert np.max(np.abs(nxt - reference_step(net, h, sym))) < 1e-12
        h = nxt


def test_step_validates_inputs():
    net = init_network("gru", 1, 4, BINARY, 0)
    with pytest.raises(InvalidWordError):
        net.step(net.initial_state(), 2)
    with pytest.raises(ValueError):
        net.step(np.zeros(3), 0)


def test_classifier_threshold():
    assert zero_net().classify_state(np.ones(4))  # sigmoid(0) = 0.5 accepts
    assert zero_net(clf_b=10.0).classify_word((0, 1, 1))
    assert not zero_net(clf_b=-10.0).classify_word((0, 1, 1))


def test_classifier_reads_top_layer_h_only():
    net = init_network("lstm", 2, 3, BINARY, 2)
    h = net.run((1, 0, 1))
    bumped = h.copy()
    bumped[-3:] += 100.0  # top-layer c
    bumped[:6] -= 100.0  # bottom layer
    assert net.output(h) == net.output(bumped)


def test_classify_word_consistency():
    net = init_network("gru", 2, 4, BINARY, 3)
    assert net.classify_word(()) == net.classify_state(net.initial_state())
    assert net.classify_word((1,)) == net.classify_state(net.step(net.initial_state(), 1))


def test_batch_agrees_with_single_steps():
    net = init_network("gru", 2, 6, ABC, 4)
    words = np.random.default_rng(0).integers(0, 3, (50, 12))
    batch = net.run_batch(words)
    single = np.array([net.run(tuple(w)) for w in words])
    assert np.max(np.abs(batch - single)) < 1e-12


def test_save_load_round_trip():
    for cell in rnn.CELLS:
        net = init_network(cell, 2, 3, ABC, 5)
        text = rnn.save(net)
        assert rnn.save(net) == text
        back = rnn.load(text)
        assert rnn.save(back) == text
        for name, v in net.params().items():
            assert np.array_equal(v, back.params()[name])


def test_load_rejects_bad_shapes():
    doc = init_network("gru", 1, 3, BINARY, 0).to_json()
    doc["hidden"] = 4
    with pytest.raises(ValueError):
        RnnAcceptor.from_json(doc)


def numeric_gradient_error(net, words, labels, eps=1e-5):
    _, grads = dataset_loss_and_grads(net, words, labels)
    params = net.params()
    worst = 0.0
    for name, value in params.items():
        flat = value.reshape(-1)
        for j in range(flat.size):
            plus = {k: v.copy() for k, v in params.items()}
            plus[name].reshape(-1)[j] += eps
            minus = {k: v.copy() for k, v in params.items()}
            minus[name].reshape(-1)[j] -= eps
            lp, _ = dataset_loss_and_grads(net.with_params(plus), words, labels)
            lm, _ = dataset_loss_and_grads(net.with_params(minus), words, labels)
            num = (lp - lm) / (2 * eps)
            ana = grads[name].reshape(-1)[j]
            worst = max(worst, abs(num - ana) / max(1e-8, abs(num) + abs(ana)))
    return worst


@pytest.mark.parametrize("cell", ["gru", "lstm"])
def test_gradient_check(cell):
    net = init_network(cell, 1, 4, ABC, 3)
    words = [(0, 1, 2), (2, 2, 0), (1,)]
    assert numeric_gradient_error(net, words, [1, 0, 1]) < 1e-4


def test_train_single_class_dataset():
    words = [tuple(w) for w in BINARY.words(3)]
    r = rnn.train("gru", 1, 4, BINARY, words, [True] * len(words), TrainConfig(seed=0, max_epochs=50))
    assert r.accuracy == 1.0
    assert r.epochs < 50


def test_training_is_deterministic():
    L = tomita(4)
    ds = make_train_set(L, [3, 4, 5], 20, 0)
    cfg = TrainConfig(seed=2, max_epochs=3)
    a = rnn.train("gru", 1, 5, BINARY, ds.words(), ds.labels(), cfg)
    b = rnn.train("gru", 1, 5, BINARY, ds.words(), ds.labels(), cfg)
    assert rnn.save(a.net) == rnn.save(b.net)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


@pytest.mark.slow
def test_trained_tomita1_generalizes(net_cache):
    net, ds, seed = nets.tomita_network(net_cache, 1)
    assert seed is not None
    acc = agreement(net, tomita(1), list(range(4, 29, 3)), 1000, 0)
    assert min(acc.values()) >= 99.9
