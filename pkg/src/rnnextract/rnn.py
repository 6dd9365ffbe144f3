"""GRU and LSTM acceptors over one-hot inputs, in float64 numpy.

The network state is the concatenation of every layer's recurrent state,
bottom layer first; an LSTM layer contributes ``h`` then ``c``. The acceptor
head reads the top layer's ``h`` only and accepts iff the sigmoid output is
at least 0.5.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .automata import Alphabet, InvalidWordError

log = logging.getLogger(__name__)

CELLS = ("gru", "lstm")
_GATES = {"gru": 3, "lstm": 4}
_PARAM_NAMES = {"gru": ("W_x", "W_h", "b_x", "b_h"), "lstm": ("W_x", "W_h", "b")}


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class RnnAcceptor:
    def __init__(self, cell: str, n_layers: int, hidden: int, alphabet: Alphabet,
                 layers: list, clf_w: np.ndarray, clf_b: float):
        if cell not in CELLS:
            raise ValueError(f"unknown cell type {cell!r}")
        if n_layers < 1 or hidden < 1:
            raise ValueError("n_layers and hidden must be positive")
        self.cell = cell
        self.n_layers = n_layers
        self.hidden = hidden
        self.alphabet = alphabet
        self.layers = [{k: np.array(v, dtype=np.float64) for k, v in layer.items()} for layer in layers]
        self.clf_w = np.array(clf_w, dtype=np.float64)
        self.clf_b = float(clf_b)
        self._check_shapes()
        for layer in self.layers:
            for v in layer.values():
                v.setflags(write=False)
        self.clf_w.setflags(write=False)

    def _check_shapes(self):
        g, H = _GATES[self.cell], self.hidden
        if len(self.layers) != self.n_layers:
            raise ValueError(f"expected {self.n_layers} layers, got {len(self.layers)}")
        for i, layer in enumerate(self.layers):
            d_in = len(self.alphabet) if i == 0 else H
            expected = {"W_x": (g * H, d_in), "W_h": (g * H, H)}
            for name in _PARAM_NAMES[self.cell]:
                if name.startswith("b"):
                    expected[name] = (g * H,)
            if set(layer) != set(expected):
                raise ValueError(f"layer {i} has parameters {sorted(layer)}, expected {sorted(expected)}")
            for name, shape in expected.items():
                if layer[name].shape != shape:
                    raise ValueError(f"layer {i} {name} has shape {layer[name].shape}, expected {shape}")
        if self.clf_w.shape != (H,):
            raise ValueError(f"classifier weight has shape {self.clf_w.shape}, expected {(H,)}")

    @property
    def layer_width(self) -> int:
        return self.hidden * (2 if self.cell == "lstm" else 1)

    @property
    def d_s(self) -> int:
        return self.n_layers * self.layer_width

    def initial_state(self) -> np.ndarray:
        return np.zeros(self.d_s)

    def _check_state(self, h):
        h = np.asarray(h, dtype=np.float64)
        if h.shape[-1] != self.d_s:
            raise ValueError(f"state has dimension {h.shape[-1]}, network uses {self.d_s}")
        return h

    def _layer_step(self, i, x_proj, state):
        # x_proj: (B, gH) input projection incl. W_x bias; state: (B, width)
        p, H = self.layers[i], self.hidden
        if self.cell == "gru":
            h = state
            ah = h @ p["W_h"].T + p["b_h"]
            r = sigmoid(x_proj[:, :H] + ah[:, :H])
            z = sigmoid(x_proj[:, H:2 * H] + ah[:, H:2 * H])
            n = np.tanh(x_proj[:, 2 * H:] + r * ah[:, 2 * H:])
            return (1.0 - z) * n + z * h
        h, c = state[:, :H], state[:, H:]
        a = x_proj + h @ p["W_h"].T
        i_g = sigmoid(a[:, :H])
        f_g = sigmoid(a[:, H:2 * H])
        g_g = np.tanh(a[:, 2 * H:3 * H])
        o_g = sigmoid(a[:, 3 * H:])
        c2 = f_g * c + i_g * g_g
        return np.concatenate([o_g * np.tanh(c2), c2], axis=1)

    def _in_bias(self, i):
        p = self.layers[i]
        return p["b_x"] if self.cell == "gru" else p["b"]

    def _step_batch(self, states: np.ndarray, symbols: np.ndarray) -> np.ndarray:
        W = self.layer_width
        out = np.empty_like(states)
        x = None
        for i in range(self.n_layers):
            p = self.layers[i]
            if i == 0:
                x_proj = p["W_x"][:, symbols].T + self._in_bias(0)
            else:
                x_proj = x @ p["W_x"].T + self._in_bias(i)
            new = self._layer_step(i, x_proj, states[:, i * W:(i + 1) * W])
            out[:, i * W:(i + 1) * W] = new
            x = new[:, :self.hidden]
        return out

    def _step_single(self, h: np.ndarray, symbol: int) -> np.ndarray:
        # canonical single-state transition; every code path that needs exact
        # state identity (membership, exploration, audit) goes through here
        W, H = self.layer_width, self.hidden
        out = np.empty(self.d_s)
        x = None
        for i, p in enumerate(self.layers):
            if i == 0:
                x_proj = p["W_x"][:, symbol] + self._in_bias(0)
            else:
                x_proj = p["W_x"] @ x + self._in_bias(i)
            state = h[i * W:(i + 1) * W]
            if self.cell == "gru":
                ah = p["W_h"] @ state + p["b_h"]
                r = sigmoid(x_proj[:H] + ah[:H])
                z = sigmoid(x_proj[H:2 * H] + ah[H:2 * H])
                n = np.tanh(x_proj[2 * H:] + r * ah[2 * H:])
                new = (1.0 - z) * n + z * state
                out[i * W:(i + 1) * W] = new
                x = new
            else:
                hh, c = state[:H], state[H:]
                a = x_proj + p["W_h"] @ hh
                c2 = sigmoid(a[H:2 * H]) * c + sigmoid(a[:H]) * np.tanh(a[2 * H:3 * H])
                x = sigmoid(a[3 * H:]) * np.tanh(c2)
                out[i * W:i * W + H] = x
                out[i * W + H:(i + 1) * W] = c2
        return out

    def step(self, h, symbol: int) -> np.ndarray:
        h = self._check_state(h)
        if not 0 <= symbol < len(self.alphabet):
            raise InvalidWordError(f"symbol index {symbol} out of range")
        return self._step_single(h, int(symbol))

    def step_all(self, h) -> np.ndarray:
        """Successor states of ``h`` under every symbol, shape ``(|alphabet|, d_s)``."""
        h = self._check_state(h)
        return np.stack([self._step_single(h, a) for a in range(len(self.alphabet))])

    def top_h(self, states: np.ndarray) -> np.ndarray:
        start = (self.n_layers - 1) * self.layer_width
        return states[..., start:start + self.hidden]

    def output(self, h) -> float:
        """Sigmoid acceptance score of a single state."""
        h = self._check_state(h)
        return float(sigmoid(self.top_h(h) @ self.clf_w + self.clf_b))

    def classify_state(self, h) -> bool:
        h = self._check_state(h)
        # sigmoid(x) >= 0.5 iff x >= 0
        return bool(self.top_h(h) @ self.clf_w + self.clf_b >= 0.0)

    def classify_states(self, states: np.ndarray) -> np.ndarray:
        return self.top_h(states) @ self.clf_w + self.clf_b >= 0.0

    def run(self, word: Sequence[int], h=None) -> np.ndarray:
        self.alphabet.check(word)
        h = self.initial_state() if h is None else self._check_state(h)
        for a in word:
            h = self._step_single(h, int(a))
        return h

    def classify_word(self, word: Sequence[int]) -> bool:
        return self.classify_state(self.run(word))

    def run_batch(self, words: np.ndarray) -> np.ndarray:
        """Final states of equal-length words, batched; may differ from ``run``
        in the last bits, so use it for statistics only."""
        words = np.asarray(words, dtype=np.int64)
        if words.size and (words.min() < 0 or words.max() >= len(self.alphabet)):
            raise InvalidWordError("symbol index out of range")
        states = np.zeros((words.shape[0], self.d_s))
        for t in range(words.shape[1]):
            states = self._step_batch(states, words[:, t])
        return states

    def classify_batch(self, words: np.ndarray, chunk: int = 2048) -> np.ndarray:
        words = np.asarray(words, dtype=np.int64)
        out = [self.classify_states(self.run_batch(words[i:i + chunk]))
               for i in range(0, words.shape[0], chunk)]
        return np.concatenate(out) if out else np.zeros(0, dtype=bool)

    # -- parameters and serialization --------------------------------------

    def params(self) -> dict:
        out = {}
        for i, layer in enumerate(self.layers):
            for name in _PARAM_NAMES[self.cell]:
                out[f"{i}.{name}"] = layer[name]
        out["clf.w"] = self.clf_w
        out["clf.b"] = np.array([self.clf_b])
        return out

    def with_params(self, params: dict) -> "RnnAcceptor":
        layers = [{name: params[f"{i}.{name}"] for name in _PARAM_NAMES[self.cell]}
                  for i in range(self.n_layers)]
        return RnnAcceptor(self.cell, self.n_layers, self.hidden, self.alphabet, layers,
                           params["clf.w"], float(np.asarray(params["clf.b"]).reshape(-1)[0]))

    def to_json(self) -> dict:
        return {
            "cell": self.cell,
            "n_layers": self.n_layers,
            "hidden": self.hidden,
            "alphabet": list(self.alphabet.symbols),
            "layers": [{name: layer[name].tolist() for name in _PARAM_NAMES[self.cell]}
                       for layer in self.layers],
            "classifier": {"w": self.clf_w.tolist(), "b": self.clf_b},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "RnnAcceptor":
        try:
            return cls(doc["cell"], int(doc["n_layers"]), int(doc["hidden"]),
                       Alphabet(tuple(doc["alphabet"])), doc["layers"],
                       doc["classifier"]["w"], doc["classifier"]["b"])
        except (KeyError, TypeError) as e:
            raise ValueError(f"malformed network document: {e}") from e

    def dumps(self) -> str:
        # json uses repr for floats, which is the shortest round-tripping form
        return json.dumps(self.to_json())

    @classmethod
    def loads(cls, text: str) -> "RnnAcceptor":
        return cls.from_json(json.loads(text))


def save(net: RnnAcceptor) -> str:
    return net.dumps()


def load(text: str) -> RnnAcceptor:
    return RnnAcceptor.loads(text)


def init_network(cell: str, n_layers: int, hidden: int, alphabet: Alphabet, seed: int) -> RnnAcceptor:
    """Uniform(-1/sqrt(hidden), 1/sqrt(hidden)) initialization."""
    if cell not in CELLS:
        raise ValueError(f"unknown cell type {cell!r}")
    rng = np.random.default_rng(seed)
    g, H = _GATES[cell], hidden
    bound = 1.0 / math.sqrt(H)
    layers = []
    for i in range(n_layers):
        d_in = len(alphabet) if i == 0 else H
        layer = {"W_x": rng.uniform(-bound, bound, (g * H, d_in)),
                 "W_h": rng.uniform(-bound, bound, (g * H, H))}
        if cell == "gru":
            layer["b_x"] = rng.uniform(-bound, bound, g * H)
            layer["b_h"] = rng.uniform(-bound, bound, g * H)
        else:
            b = rng.uniform(-bound, bound, g * H)
            b[H:2 * H] += 1.0  # forget-gate bias
            layer["b"] = b
        layers.append(layer)
    clf_w = rng.uniform(-bound, bound, H)
    clf_b = float(rng.uniform(-bound, bound))
    return RnnAcceptor(cell, n_layers, hidden, alphabet, layers, clf_w, clf_b)


# -- training ------------------------------------------------------------------

def _forward(net: RnnAcceptor, X: np.ndarray):
    """Batched forward over equal-length words; returns logits and a tape for backprop."""
    B, T = X.shape
    H, cell = net.hidden, net.cell
    tape = []
    inputs = None  # (T, B, H) outputs of the layer below
    for i, p in enumerate(net.layers):
        W_hT = p["W_h"].T
        if i == 0:
            xp = p["W_x"].T[X.T] + net._in_bias(0)  # (T, B, gH)
        else:
            xp = inputs @ p["W_x"].T + net._in_bias(i)
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        outs = np.empty((T, B, H))
        steps = []
        for t in range(T):
            if cell == "gru":
                ah = h @ W_hT + p["b_h"]
                r = sigmoid(xp[t, :, :H] + ah[:, :H])
                z = sigmoid(xp[t, :, H:2 * H] + ah[:, H:2 * H])
                n = np.tanh(xp[t, :, 2 * H:] + r * ah[:, 2 * H:])
                steps.append((h, r, z, n, ah[:, 2 * H:]))
                h = (1.0 - z) * n + z * h
            else:
                a = xp[t] + h @ W_hT
                ig = sigmoid(a[:, :H])
                fg = sigmoid(a[:, H:2 * H])
                gg = np.tanh(a[:, 2 * H:3 * H])
                og = sigmoid(a[:, 3 * H:])
                c_new = fg * c + ig * gg
                tc = np.tanh(c_new)
                steps.append((h, c, ig, fg, gg, og, tc))
                h, c = og * tc, c_new
            outs[t] = h
        tape.append((inputs, steps))
        inputs = outs
    top = inputs[-1] if T > 0 else np.zeros((B, H))
    logits = top @ net.clf_w + net.clf_b
    return logits, (tape, top)


def _backward(net: RnnAcceptor, X: np.ndarray, tape, dlogits: np.ndarray) -> dict:
    B, T = X.shape
    H, cell = net.hidden, net.cell
    layers_tape, top = tape
    grads = {"clf.w": top.T @ dlogits, "clf.b": np.array([dlogits.sum()])}
    # gradient w.r.t. each time step's output of the current layer
    d_out = np.zeros((T, B, H))
    if T > 0:
        d_out[-1] = np.outer(dlogits, net.clf_w)
    for i in reversed(range(net.n_layers)):
        p = net.layers[i]
        inputs, steps = layers_tape[i]
        g = _GATES[cell]
        dW_h = np.zeros((g * H, H))
        dxp = np.empty((T, B, g * H))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        db_h = np.zeros(g * H)
        for t in reversed(range(T)):
            dh = d_out[t] + dh_next
            if cell == "gru":
                h_prev, r, z, n, ahn = steps[t]
                dn = dh * (1.0 - z)
                dz = dh * (h_prev - n)
                dan = dn * (1.0 - n * n)
                dar = dan * ahn * r * (1.0 - r)
                daz = dz * z * (1.0 - z)
                dax = np.concatenate([dar, daz, dan], axis=1)
                dah = np.concatenate([dar, daz, dan * r], axis=1)
                dW_h += dah.T @ h_prev
                dh_next = dh * z + dah @ p["W_h"]
                dxp[t] = dax
                db_h += dah.sum(axis=0)
            else:
                h_prev, c_prev, ig, fg, gg, og, tc = steps[t]
                do = dh * tc
                dc = dc_next + dh * og * (1.0 - tc * tc)
                da = np.concatenate([dc * gg * ig * (1.0 - ig), dc * c_prev * fg * (1.0 - fg),
                                     dc * ig * (1.0 - gg * gg), do * og * (1.0 - og)], axis=1)
                dW_h += da.T @ h_prev
                dh_next = da @ p["W_h"]
                dc_next = dc * fg
                dxp[t] = da
        grads[f"{i}.W_h"] = dW_h
        bias_name = "b_x" if cell == "gru" else "b"
        grads[f"{i}.{bias_name}"] = dxp.reshape(-1, g * H).sum(axis=0) if T else np.zeros(g * H)
        if cell == "gru":
            grads[f"{i}.b_h"] = db_h
        if i == 0:
            dW_x = np.zeros((g * H, len(net.alphabet)))
            if T:
                np.add.at(dW_x.T, X.T.reshape(-1), dxp.reshape(-1, g * H))
            grads["0.W_x"] = dW_x
        else:
            grads[f"{i}.W_x"] = (np.einsum("tbg,tbh->gh", dxp, inputs) if T
                                 else np.zeros((g * H, H)))
            d_out = dxp @ p["W_x"]
    return grads


def loss_and_grads(net: RnnAcceptor, X: np.ndarray, y: np.ndarray):
    """Mean binary cross-entropy of one equal-length batch and its gradients."""
    X = np.asarray(X, dtype=np.int64).reshape(len(y), -1)
    y = np.asarray(y, dtype=np.float64)
    logits, tape = _forward(net, X)
    # log(1 + exp(-|x|)) form is stable for large logits
    loss = np.mean(np.maximum(logits, 0) - logits * y + np.log1p(np.exp(-np.abs(logits))))
    dlogits = (sigmoid(logits) - y) / len(y)
    return float(loss), _backward(net, X, tape, dlogits)


def dataset_loss_and_grads(net: RnnAcceptor, words: Sequence, labels: Sequence):
    """Sum over length buckets of per-bucket mean losses; used by the gradient check."""
    total = 0.0
    grads = {k: np.zeros_like(v) for k, v in net.params().items()}
    for X, y in _buckets(words, labels):
        loss, g = loss_and_grads(net, X, y)
        total += loss
        for k in grads:
            grads[k] += g[k]
    return total, grads


def _buckets(words, labels):
    by_len = {}
    for w, y in zip(words, labels):
        by_len.setdefault(len(w), ([], []))
        by_len[len(w)][0].append(tuple(w))
        by_len[len(w)][1].append(float(y))
    for n in sorted(by_len):
        ws, ys = by_len[n]
        yield np.array(ws, dtype=np.int64).reshape(len(ws), n), np.array(ys)


@dataclass
class TrainConfig:
    seed: int = 0
    learning_rate: float = 0.005
    batch_size: int = 64
    max_epochs: int = 200
    target_accuracy: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float = 5.0
    time_limit: Optional[float] = None

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("learning rate, batch size and epochs must be positive")


@dataclass
class TrainResult:
    net: RnnAcceptor
    accuracy: float
    epochs: int
    history: list = field(default_factory=list)


def accuracy(net: RnnAcceptor, words: Sequence, labels: Sequence) -> float:
    if not len(words):
        return 1.0
    correct = 0
    for X, y in _buckets(words, labels):
        pred = net.classify_batch(X) if X.shape[1] else np.full(len(y), net.classify_state(net.initial_state()))
        correct += int(np.sum(pred == (y > 0.5)))
    return correct / len(words)


def train(cell: str, n_layers: int, hidden: int, alphabet: Alphabet, words: Sequence, labels: Sequence,
          cfg: TrainConfig = TrainConfig()) -> TrainResult:
    """Adam on binary cross-entropy until the train accuracy target or the epoch cap."""
    if not len(words):
        raise ValueError("empty dataset")
    if len(words) != len(labels):
        raise ValueError("words and labels differ in length")
    rng = np.random.default_rng(cfg.seed)
    net = init_network(cell, n_layers, hidden, alphabet, int(rng.integers(2**31)))
    params = {k: v.copy() for k, v in net.params().items()}
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(x) for k, x in params.items()}
    buckets = list(_buckets(words, labels))
    step = 0
    history = []
    acc = accuracy(net, words, labels)
    start = time.monotonic()
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        batches = []
        for X, y in buckets:
            order = rng.permutation(len(y))
            for s in range(0, len(y), cfg.batch_size):
                idx = order[s:s + cfg.batch_size]
                batches.append((X[idx], y[idx]))
        total = 0.0
        for b in rng.permutation(len(batches)):
            X, y = batches[b]
            loss, grads = loss_and_grads(net, X, y)
            total += loss * len(y)
            norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            scale = min(1.0, cfg.grad_clip / norm) if norm > 0 else 1.0
            step += 1
            lr = cfg.learning_rate * math.sqrt(1 - cfg.beta2 ** step) / (1 - cfg.beta1 ** step)
            for k in params:
                g = grads[k].reshape(params[k].shape) * scale
                m[k] = cfg.beta1 * m[k] + (1 - cfg.beta1) * g
                v[k] = cfg.beta2 * v[k] + (1 - cfg.beta2) * g * g
                params[k] = params[k] - lr * m[k] / (np.sqrt(v[k]) + cfg.eps)
            net = net.with_params(params)
        acc = accuracy(net, words, labels)
        history.append({"epoch": epoch, "loss": total / len(words), "accuracy": acc})
        log.debug("epoch %d loss %.5f acc %.5f", epoch, total / len(words), acc)
        if acc >= cfg.target_accuracy:
            break
        if cfg.time_limit is not None and time.monotonic() - start > cfg.time_limit:
            break
    return TrainResult(net, acc, epoch, history)
