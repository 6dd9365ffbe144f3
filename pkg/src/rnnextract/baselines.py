"""Comparison extractors: a-priori quantization, k-means clustering and
random-sampling equivalence checking.

Quantization and k-means both feed a fixed partitioning function into the
same breadth-first abstraction extraction, which may stop early and return a
partial automaton.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .automata import Alphabet, Dfa, Word, shortlex_key
from .corpus import random_words
from .lstar import EquivalenceTimeout
from .rnn import RnnAcceptor

log = logging.getLogger(__name__)

RANDOM_WALKS = 1000
RANDOM_WALK_LENGTH = 50


# -- partial automata and the extraction BFS ---------------------------------------

@dataclass
class PartialDfa:
    """An automaton whose transition function may be undefined in places."""

    alphabet: Alphabet
    initial: int
    accepting: frozenset
    transitions: dict  # (state, symbol) -> state
    n_states: int
    complete: bool = False

    def step(self, q: int, a: int) -> Optional[int]:
        return self.transitions.get((q, a))

    def run(self, word: Sequence[int]) -> Optional[int]:
        q = self.initial
        for a in word:
            q = self.transitions.get((q, a))
            if q is None:
                return None
        return q

    def classify(self, word: Sequence[int]) -> Optional[bool]:
        """Label of ``word``, or None when its path leaves the defined transitions."""
        q = self.run(word)
        return None if q is None else q in self.accepting

    def to_dfa(self) -> Dfa:
        if not self.complete:
            raise ValueError("automaton has undefined transitions")
        k = len(self.alphabet)
        delta = tuple(tuple(self.transitions[(q, a)] for a in range(k)) for q in range(self.n_states))
        return Dfa(self.alphabet, self.n_states, self.initial, self.accepting, delta)

    def to_json(self) -> dict:
        k = len(self.alphabet)
        return {
            "alphabet": list(self.alphabet.symbols),
            "n_states": self.n_states,
            "initial": self.initial,
            "accepting": sorted(self.accepting),
            "delta": [[self.transitions.get((q, a)) for a in range(k)] for q in range(self.n_states)],
            "complete": self.complete,
        }


@dataclass
class AbstractionResult:
    dfa: PartialDfa
    complete: bool
    elapsed: float
    reason: str  # "complete", "timeout" or "max_states"
    n_expanded: int


def extract_abstraction(net: RnnAcceptor, p: Callable, time_limit: Optional[float] = None,
                        max_states: Optional[int] = None) -> AbstractionResult:
    """Breadth-first extraction of the abstraction induced by partitioning ``p``.

    An A-state's label and outgoing transitions come from the first R-state
    that reaches it. States are numbered in discovery order.
    """
    t0 = time.monotonic()
    deadline = None if time_limit is None else t0 + time_limit
    k = len(net.alphabet)
    h0 = net.initial_state()
    ids = {p(h0): 0}
    accepting = set()
    if net.classify_state(h0):
        accepting.add(0)
    transitions = {}
    queue = deque([(0, h0)])
    reason = "complete"
    expanded = 0
    while queue:
        if deadline is not None and time.monotonic() > deadline:
            reason = "timeout"
            break
        q, h = queue.popleft()
        for a in range(k):
            h2 = net._step_single(h, a)
            key = p(h2)
            q2 = ids.get(key)
            if q2 is None:
                if max_states is not None and len(ids) >= max_states:
                    reason = "max_states"
                    break
                q2 = len(ids)
                ids[key] = q2
                if net.classify_state(h2):
                    accepting.add(q2)
                queue.append((q2, h2))
            transitions[(q, a)] = q2
        if reason == "max_states":
            break
        expanded += 1
    complete = reason == "complete"
    dfa = PartialDfa(net.alphabet, 0, frozenset(accepting), transitions, len(ids), complete)
    return AbstractionResult(dfa, complete, time.monotonic() - t0, reason, expanded)


# -- quantization -------------------------------------------------------------------

@dataclass(frozen=True)
class QuantPartitioning:
    q: int
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        if self.q < 2:
            raise ValueError("quantization level must be at least 2")
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("range bounds must be vectors of equal length")
        if not np.all(lo < hi):
            raise ValueError("every dimension needs lo < hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def intervals(self, h) -> np.ndarray:
        """Per-dimension interval index; values outside the range are clamped."""
        h = np.asarray(h, dtype=np.float64)
        if h.shape != self.lo.shape:
            raise ValueError(f"state has shape {h.shape}, expected {self.lo.shape}")
        idx = np.floor((h - self.lo) / (self.hi - self.lo) * self.q).astype(np.int64)
        return np.clip(idx, 0, self.q - 1)

    def __call__(self, h) -> int:
        return quant_map(self, h)


def quant_map(qp: QuantPartitioning, h) -> int:
    """The interval tuple of ``h`` read as a base-q integer."""
    out = 0
    for i in qp.intervals(h).tolist():
        out = out * qp.q + i
    return out


def state_ranges(net: RnnAcceptor, seed: int = 0, walks: int = RANDOM_WALKS,
                 length: int = RANDOM_WALK_LENGTH) -> tuple:
    """(lo, hi) per state dimension: [-1, 1] for h, measured for LSTM cells."""
    lo = -np.ones(net.d_s)
    hi = np.ones(net.d_s)
    if net.cell != "lstm":
        return lo, hi
    H = net.hidden
    c_dims = np.concatenate([np.arange(i * 2 * H + H, (i + 1) * 2 * H) for i in range(net.n_layers)])
    rng = np.random.default_rng(seed)
    X = rng.integers(0, len(net.alphabet), size=(walks, length))
    states = np.tile(net.initial_state(), (walks, 1))
    c_lo = states[:, c_dims].min(axis=0)
    c_hi = states[:, c_dims].max(axis=0)
    for t in range(length):
        states = net._step_batch(states, X[:, t])
        c_lo = np.minimum(c_lo, states[:, c_dims].min(axis=0))
        c_hi = np.maximum(c_hi, states[:, c_dims].max(axis=0))
    flat = c_hi - c_lo < 1e-9
    c_lo[flat] -= 1.0
    c_hi[flat] += 1.0
    lo[c_dims] = c_lo
    hi[c_dims] = c_hi
    return lo, hi


def quantization_for(net: RnnAcceptor, q: int, seed: int = 0) -> QuantPartitioning:
    lo, hi = state_ranges(net, seed)
    return QuantPartitioning(q, lo, hi)


# -- k-means --------------------------------------------------------------------------

@dataclass(frozen=True)
class KmeansPartitioning:
    centroids: np.ndarray  # (k, d)
    objective_history: tuple = field(default=(), compare=False)

    def __post_init__(self):
        c = np.array(self.centroids, dtype=np.float64)
        if c.ndim != 2 or len(c) < 1:
            raise ValueError("need at least one centroid")
        c.setflags(write=False)
        object.__setattr__(self, "centroids", c)

    @property
    def k(self) -> int:
        return len(self.centroids)

    def __call__(self, h) -> int:
        return kmeans_map(self, h)


def _assign(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d2 = ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)  # first minimum, so ties go to the lowest index


def _objective(X, C, labels) -> float:
    return float(((X - C[labels]) ** 2).sum())


def kmeans_fit(states, k: int, seed: int = 0, max_iter: int = 300) -> KmeansPartitioning:
    """Lloyd's algorithm from ``k`` distinct seeded initial points.

    An empty cluster keeps its previous centroid.
    """
    X = np.asarray(states, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("states must be a 2-d array")
    if not 1 <= k <= len(X):
        raise ValueError(f"k={k} must lie in [1, {len(X)}]")
    uniq = np.unique(X, axis=0)
    rng = np.random.default_rng(seed)
    if len(uniq) >= k:
        C = uniq[np.sort(rng.choice(len(uniq), size=k, replace=False))].copy()
    else:
        C = X[np.sort(rng.choice(len(X), size=k, replace=False))].copy()
    labels = _assign(X, C)
    history = [_objective(X, C, labels)]
    for _ in range(max_iter):
        newC = C.copy()
        for j in range(k):
            members = X[labels == j]
            if len(members):
                newC[j] = members.mean(axis=0)
        new_labels = _assign(X, newC)
        history.append(_objective(X, newC, new_labels))
        C = newC
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return KmeansPartitioning(C, tuple(history))


def kmeans_map(kp: KmeansPartitioning, h) -> int:
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (kp.centroids.shape[1],):
        raise ValueError(f"state has shape {h.shape}, expected ({kp.centroids.shape[1]},)")
    return int(_assign(h[None, :], kp.centroids)[0])


def collect_states(net: RnnAcceptor, words: Sequence) -> np.ndarray:
    """Every distinct state visited while reading ``words``, including h0."""
    seen = {}
    h0 = net.initial_state()
    seen[h0.tobytes()] = h0
    for w in words:
        h = h0
        for a in w:
            h = net._step_single(h, a)
            seen.setdefault(h.tobytes(), h)
    return np.array(list(seen.values()))


# -- random-sampling equivalence ----------------------------------------------------

@dataclass
class SamplingConfig:
    starting_samples: tuple = ()
    max_length: int = 100
    per_length: int = 1000
    seed: int = 0
    time_limit: Optional[float] = None


def random_sampling_oracle(net: RnnAcceptor, A: Dfa, cfg: SamplingConfig,
                           rng: Optional[np.random.Generator] = None,
                           deadline: Optional[float] = None) -> Optional[Word]:
    """First sampled word on which the network and ``A`` disagree, or None.

    The starting samples are checked first (shortest disagreement wins), then
    ``cfg.per_length`` uniform words of each length 1, 2, ... in turn. Each
    length is screened with the batched forward pass and candidates are
    confirmed on the exact single-step path. Raises EquivalenceTimeout once
    ``deadline`` (a time.monotonic() value) has passed.
    """
    bad = [tuple(w) for w in cfg.starting_samples if net.classify_word(w) != A.classify(w)]
    if bad:
        return min(bad, key=shortlex_key)
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    budget = None if cfg.time_limit is None else time.monotonic() + cfg.time_limit
    for n in range(1, cfg.max_length + 1):
        if deadline is not None and time.monotonic() > deadline:
            raise EquivalenceTimeout("random sampling ran past the deadline")
        words = np.asarray(random_words(net.alphabet, n, cfg.per_length, rng))
        screened = net.classify_batch(words) != A.classify_batch(words)
        for i in np.flatnonzero(screened):
            w = tuple(int(x) for x in words[i])
            if net.classify_word(w) != A.classify(w):
                return w
        if budget is not None and time.monotonic() > budget:
            break
    return None


class SamplingTeacher:
    """L* teacher answering equivalence queries by random sampling."""

    def __init__(self, net: RnnAcceptor, cfg: SamplingConfig, deadline: Optional[float] = None):
        self.net = net
        self.alphabet = net.alphabet
        self.cfg = cfg
        self.deadline = deadline
        self._rng = np.random.default_rng(cfg.seed)
        self.equivalence_records: list = []

    def membership(self, w) -> bool:
        return self.net.classify_word(w)

    def equivalence(self, A: Dfa) -> Optional[Word]:
        t0 = time.monotonic()
        cex = random_sampling_oracle(self.net, A, self.cfg, self._rng, self.deadline)
        self.equivalence_records.append({
            "hypothesis_size": A.n_states, "hypothesis": A,
            "verdict": "accept" if cex is None else "reject", "counterexample": cex,
            "elapsed_ms": (time.monotonic() - t0) * 1e3,
        })
        return cex


# -- evaluation -------------------------------------------------------------------------

@dataclass(frozen=True)
class CoverageRow:
    length: int
    coverage: float  # percent
    accuracy: Optional[float]  # percent of covered words; None when nothing is covered


def coverage_accuracy(dfa, net: RnnAcceptor, lengths: Sequence[int], n_per_length: int = 1000,
                      seed: int = 0) -> list:
    """Coverage and accuracy of a possibly partial automaton against the network."""
    if n_per_length < 1:
        raise ValueError("n_per_length must be positive")
    if dfa.alphabet != net.alphabet:
        raise ValueError("automaton and network alphabets differ")
    rng = np.random.default_rng(seed)
    rows = []
    for n in lengths:
        words = random_words(net.alphabet, n, n_per_length, rng)
        labels = net.classify_batch(words) if n > 0 else np.full(len(words), net.classify_word(()))
        covered = agree = 0
        for w, y in zip(words, labels):
            pred = dfa.classify(tuple(int(x) for x in w))
            if pred is None:
                continue
            covered += 1
            agree += pred == bool(y)
        acc = None if covered == 0 else 100.0 * agree / covered
        rows.append(CoverageRow(int(n), 100.0 * covered / len(words), acc))
    return rows


def coverage_csv(rows: Sequence[CoverageRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["length", "coverage", "accuracy"])
    for r in rows:
        writer.writerow([r.length, f"{r.coverage:.2f}", "NA" if r.accuracy is None else f"{r.accuracy:.2f}"])
    return buf.getvalue()


def abstraction_report(result: AbstractionResult, method: str, params: dict) -> dict:
    """A report in the layout of the teacher's extraction report."""
    return {
        "method": method,
        "params": params,
        "converged": result.complete,
        "reason": result.reason,
        "elapsed_s": round(result.elapsed, 4),
        "n_states": result.dfa.n_states,
        "n_expanded": result.n_expanded,
        "equivalence_queries": [],
        "refinements": [],
        "dfa": result.dfa.to_json(),
    }
