"""Deterministic finite automata over small indexed alphabets.

Words are tuples of symbol indices. A :class:`Dfa` is immutable once built and
always has a total transition function.
"""

from __future__ import annotations

import json
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

Word = tuple


class InvalidWordError(ValueError):
    pass


class AlphabetMismatchError(ValueError):
    pass


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Alphabet:
    symbols: tuple

    def __post_init__(self):
        symbols = tuple(self.symbols)
        object.__setattr__(self, "symbols", symbols)
        if not symbols:
            raise ValueError("alphabet must be non-empty")
        if len(set(symbols)) != len(symbols):
            raise ValueError(f"duplicate symbols in alphabet {symbols!r}")
        for s in symbols:
            if not isinstance(s, str) or not s:
                raise ValueError(f"bad symbol label {s!r}")
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(symbols)})

    def __len__(self):
        return len(self.symbols)

    @property
    def size(self) -> int:
        return len(self.symbols)

    def index(self, symbol: str) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise InvalidWordError(f"symbol {symbol!r} not in alphabet") from None

    def encode(self, text) -> Word:
        """Turn a string (or a sequence of labels) into a word.

        Strings are split into characters, so this only works on strings when
        every label is a single character.
        """
        if isinstance(text, str):
            if any(len(s) != 1 for s in self.symbols):
                raise ValueError("cannot split a string over multi-character labels")
        return tuple(self.index(s) for s in text)

    def decode(self, word: Sequence[int]) -> str:
        self.check(word)
        sep = "" if all(len(s) == 1 for s in self.symbols) else " "
        return sep.join(self.symbols[i] for i in word)

    def check(self, word: Sequence[int]) -> None:
        n = len(self.symbols)
        for i in word:
            if not (isinstance(i, (int, np.integer)) and 0 <= i < n):
                raise InvalidWordError(f"symbol index {i!r} out of range for alphabet of size {n}")

    def words(self, length: int) -> Iterator[Word]:
        """All words of exactly ``length`` symbols, in lexicographic order."""
        if length == 0:
            yield ()
            return
        for prefix in self.words(length - 1):
            for a in range(len(self.symbols)):
                yield prefix + (a,)

    def words_up_to(self, max_length: int) -> Iterator[Word]:
        for n in range(max_length + 1):
            yield from self.words(n)


def shortlex_key(word: Sequence[int]):
    return (len(word), tuple(word))


@dataclass(frozen=True)
class Dfa:
    alphabet: Alphabet
    n_states: int
    initial: int
    accepting: frozenset
    delta: tuple
    _table: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        delta = tuple(tuple(int(t) for t in row) for row in self.delta)
        accepting = frozenset(int(q) for q in self.accepting)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "accepting", accepting)
        n, k = self.n_states, len(self.alphabet)
        if n < 1:
            raise ValueError("a DFA needs at least one state")
        if not 0 <= self.initial < n:
            raise ValueError(f"initial state {self.initial} out of range")
        if len(delta) != n or any(len(row) != k for row in delta):
            raise ValueError("transition table must have one entry per (state, symbol)")
        if any(not 0 <= t < n for row in delta for t in row):
            raise ValueError("transition target out of range")
        if any(not 0 <= q < n for q in accepting):
            raise ValueError("accepting state out of range")
        table = np.array(delta, dtype=np.int64).reshape(n, k)
        table.setflags(write=False)
        object.__setattr__(self, "_table", table)

    def is_accepting(self, q: int) -> bool:
        return q in self.accepting

    def run(self, word: Sequence[int], start: Optional[int] = None) -> int:
        q = self.initial if start is None else start
        delta = self.delta
        for a in word:
            q = delta[q][a]
        return q

    def classify(self, word: Sequence[int], start: Optional[int] = None) -> bool:
        self.alphabet.check(word)
        return self.run(word, start) in self.accepting

    def classify_batch(self, words: np.ndarray) -> np.ndarray:
        """Classify a (n_words, length) integer array of equal-length words."""
        words = np.asarray(words, dtype=np.int64)
        if words.ndim != 2:
            raise ValueError("expected a 2-d array of words")
        if words.size and (words.min() < 0 or words.max() >= len(self.alphabet)):
            raise InvalidWordError("symbol index out of range")
        q = np.full(words.shape[0], self.initial, dtype=np.int64)
        for t in range(words.shape[1]):
            q = self._table[q, words[:, t]]
        acc = np.zeros(self.n_states, dtype=bool)
        acc[list(self.accepting)] = True
        return acc[q]

    def reachable(self) -> list:
        seen = [self.initial]
        index = {self.initial}
        i = 0
        while i < len(seen):
            for t in self.delta[seen[i]]:
                if t not in index:
                    index.add(t)
                    seen.append(t)
            i += 1
        return seen

    def complement(self) -> "Dfa":
        return Dfa(self.alphabet, self.n_states, self.initial,
                   frozenset(range(self.n_states)) - self.accepting, self.delta)

    def to_json(self) -> dict:
        return {
            "alphabet": list(self.alphabet.symbols),
            "n_states": self.n_states,
            "initial": self.initial,
            "accepting": sorted(self.accepting),
            "delta": [list(row) for row in self.delta],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Dfa":
        try:
            return cls(Alphabet(tuple(doc["alphabet"])), int(doc["n_states"]),
                       int(doc["initial"]), frozenset(doc["accepting"]),
                       tuple(tuple(r) for r in doc["delta"]))
        except (KeyError, TypeError) as e:
            raise ValueError(f"malformed DFA document: {e}") from e

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def loads(cls, text: str) -> "Dfa":
        return cls.from_json(json.loads(text))


def constant_dfa(alphabet: Alphabet, accept: bool) -> Dfa:
    return Dfa(alphabet, 1, 0, frozenset([0]) if accept else frozenset(),
               ((0,) * len(alphabet),))


def classify(dfa: Dfa, word: Sequence[int]) -> bool:
    return dfa.classify(word)


def minimize(dfa: Dfa) -> Dfa:
    """Minimal equivalent DFA with states numbered in BFS order from the start.

    Uses Moore-style partition refinement on the reachable part.
    """
    states = dfa.reachable()
    k = len(dfa.alphabet)
    block = {q: int(q in dfa.accepting) for q in states}
    n_blocks = len(set(block.values()))
    while True:
        signature = {q: (block[q],) + tuple(block[dfa.delta[q][a]] for a in range(k))
                     for q in states}
        ids = {}
        new_block = {}
        for q in states:
            new_block[q] = ids.setdefault(signature[q], len(ids))
        block = new_block
        if len(ids) == n_blocks:
            break
        n_blocks = len(ids)

    # renumber blocks by BFS over the quotient, symbols in index order
    order = {block[dfa.initial]: 0}
    rep = {block[q]: q for q in reversed(states)}
    queue = deque([block[dfa.initial]])
    while queue:
        b = queue.popleft()
        for a in range(k):
            t = block[dfa.delta[rep[b]][a]]
            if t not in order:
                order[t] = len(order)
                queue.append(t)
    n = len(order)
    delta = [None] * n
    accepting = set()
    for b, i in order.items():
        q = rep[b]
        delta[i] = tuple(order[block[dfa.delta[q][a]]] for a in range(k))
        if q in dfa.accepting:
            accepting.add(i)
    return Dfa(dfa.alphabet, n, 0, frozenset(accepting), tuple(delta))


def is_minimal(dfa: Dfa) -> bool:
    return minimize(dfa).n_states == dfa.n_states


def _product_bfs(a: Dfa, qa: int, b: Dfa, qb: int) -> Optional[Word]:
    # lazy BFS over reachable state pairs; symbols in index order give
    # shortlex-least disagreement first
    start = (qa, qb)
    parent = {start: None}
    queue = deque([start])
    k = len(a.alphabet)
    while queue:
        pair = queue.popleft()
        x, y = pair
        if (x in a.accepting) != (y in b.accepting):
            word = []
            while parent[pair] is not None:
                pair, sym = parent[pair]
                word.append(sym)
            return tuple(reversed(word))
        for s in range(k):
            nxt = (a.delta[x][s], b.delta[y][s])
            if nxt not in parent:
                parent[nxt] = (pair, s)
                queue.append(nxt)
    return None


def shortest_disagreement(a: Dfa, b: Dfa) -> Optional[Word]:
    """Shortlex-least word classified differently by ``a`` and ``b``, or None."""
    if a.alphabet != b.alphabet:
        raise AlphabetMismatchError("DFAs have different alphabets")
    return _product_bfs(a, a.initial, b, b.initial)


def separating_suffix(dfa: Dfa, q1: int, q2: int) -> Optional[Word]:
    """Shortest suffix on which states ``q1`` and ``q2`` of ``dfa`` disagree."""
    return _product_bfs(dfa, q1, dfa, q2)


def equivalent(a: Dfa, b: Dfa) -> bool:
    return shortest_disagreement(a, b) is None


def random_min_dfa(n: int, alphabet: Alphabet, seed: int, max_attempts: int = 100_000) -> Dfa:
    """Rejection-sample a uniformly drawn DFA whose minimization has ``n`` states.

    Each state accepts with probability 1/2. The result is returned in
    canonical (minimized) numbering.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = random.Random(seed)
    k = len(alphabet)
    for _ in range(max_attempts):
        delta = tuple(tuple(rng.randrange(n) for _ in range(k)) for _ in range(n))
        accepting = frozenset(q for q in range(n) if rng.random() < 0.5)
        m = minimize(Dfa(alphabet, n, 0, accepting, delta))
        if m.n_states == n:
            return m
    raise GenerationError(f"no minimal {n}-state DFA after {max_attempts} attempts")


def _dot_quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(dfa: Dfa, name: str = "dfa") -> str:
    lines = [f"digraph {_dot_quote(name)} {{", "    rankdir=LR;",
             '    __start [shape=point, label=""];']
    for q in range(dfa.n_states):
        shape = "doublecircle" if q in dfa.accepting else "circle"
        lines.append(f"    q{q} [shape={shape}, label=\"{q}\"];")
    lines.append(f"    __start -> q{dfa.initial};")
    for q in range(dfa.n_states):
        targets = {}
        for a, t in enumerate(dfa.delta[q]):
            targets.setdefault(t, []).append(dfa.alphabet.symbols[a])
        for t in sorted(targets):
            label = ",".join(targets[t])
            lines.append(f"    q{q} -> q{t} [label={_dot_quote(label)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def dfa_from_predicate(alphabet: Alphabet, transitions: dict, initial, accepting: Iterable) -> Dfa:
    """Build a DFA from named states: ``transitions[state][symbol] -> state``.

    Missing entries go to an implicit rejecting sink.
    """
    names = list(transitions)
    for row in transitions.values():
        for t in row.values():
            if t not in transitions:
                names.append(t)
                transitions = {**transitions, t: {}}
    names = list(dict.fromkeys(names))
    sink = None
    if any(len(transitions.get(s, {})) < len(alphabet) for s in names):
        sink = len(names)
    ids = {s: i for i, s in enumerate(names)}
    n = len(names) + (sink is not None)
    delta = []
    for s in names:
        row = transitions.get(s, {})
        delta.append(tuple(ids[row[sym]] if sym in row else sink for sym in alphabet.symbols))
    if sink is not None:
        delta.append((sink,) * len(alphabet))
    return Dfa(alphabet, n, ids[initial], frozenset(ids[s] for s in accepting), tuple(delta))
