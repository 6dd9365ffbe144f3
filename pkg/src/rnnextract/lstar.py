"""Angluin's L* with explicit membership and equivalence queries.

Rows of S are kept pairwise distinct (a new prefix enters S only when its row
matches no existing one), so the table never needs a consistency repair.
Counterexamples are processed by a binary search for a single distinguishing
suffix, falling back to adding every suffix of the counterexample.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence

from .automata import Alphabet, Dfa, Word, minimize, shortlex_key

log = logging.getLogger(__name__)


class Teacher(Protocol):
    alphabet: Alphabet

    def membership(self, word: Word) -> bool: ...

    def equivalence(self, hypothesis: Dfa) -> Optional[Word]: ...


class EquivalenceTimeout(Exception):
    """Raised by a teacher that ran out of time before reaching a verdict."""


class ContractViolation(RuntimeError):
    pass


@dataclass
class QueryRecord:
    kind: str  # "member" | "equiv"
    input: object
    answer: object
    elapsed_ms: float

    def to_json(self) -> dict:
        return {"kind": self.kind, "input": self.input, "answer": self.answer,
                "elapsed_ms": round(self.elapsed_ms, 3)}


class QueryLog:
    """Record of every query made during one run."""

    def __init__(self, alphabet: Alphabet, record_members: bool = True):
        self.alphabet = alphabet
        self.record_members = record_members
        self.records: list[QueryRecord] = []
        self.hypotheses: list[Dfa] = []
        self.counterexamples: list[Word] = []
        self.n_member = 0

    def member(self, word: Word, answer: bool, elapsed_ms: float) -> None:
        self.n_member += 1
        if self.record_members:
            self.records.append(QueryRecord("member", self.alphabet.decode(word), answer, elapsed_ms))

    def equiv(self, hypothesis: Dfa, cex: Optional[Word], elapsed_ms: float) -> None:
        self.hypotheses.append(hypothesis)
        if cex is not None:
            self.counterexamples.append(cex)
        answer = None if cex is None else self.alphabet.decode(cex)
        self.records.append(QueryRecord("equiv", hypothesis.to_json(), answer, elapsed_ms))

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_json()) + "\n" for r in self.records)


class ObservationTable:
    def __init__(self, alphabet: Alphabet, member: Callable[[Word], bool]):
        self.alphabet = alphabet
        self._member = member
        self.S: list[Word] = [()]
        self.E: list[Word] = [()]
        self.T: dict[Word, bool] = {}
        self._in_s = {()}
        self._in_e = {()}
        self._fill([()])

    def _query(self, word: Word) -> bool:
        try:
            return self.T[word]
        except KeyError:
            ans = self.T[word] = bool(self._member(word))
            return ans

    def _fill(self, prefixes: Sequence[Word], suffixes: Optional[Sequence[Word]] = None) -> None:
        suffixes = self.E if suffixes is None else suffixes
        for s in prefixes:
            for u in (s,) + tuple(s + (a,) for a in range(len(self.alphabet))):
                for e in suffixes:
                    self._query(u + e)

    def row(self, u: Word) -> tuple:
        return tuple(self.T[u + e] for e in self.E)

    def s_rows(self) -> dict:
        return {self.row(s): s for s in self.S}

    def extensions(self) -> list:
        return sorted((s + (a,) for s in self.S for a in range(len(self.alphabet))), key=shortlex_key)

    def find_unclosed(self) -> Optional[Word]:
        rows = self.s_rows()
        for u in self.extensions():
            if self.row(u) not in rows:
                return u
        return None

    def add_prefix(self, s: Word) -> None:
        if s in self._in_s:
            return
        self.S.append(s)
        self._in_s.add(s)
        self._fill([s])

    def add_suffix(self, e: Word) -> bool:
        if e in self._in_e:
            return False
        self.E.append(e)
        self._in_e.add(e)
        self._fill(self.S, [e])
        return True

    def close(self, deadline: Optional[float] = None) -> None:
        while (u := self.find_unclosed()) is not None:
            self.add_prefix(u)
            if deadline is not None and time.monotonic() > deadline:
                raise _Deadline

    def access(self, word: Word) -> Word:
        """The S-representative of the hypothesis state reached by ``word``."""
        rows = self.s_rows()
        s = ()
        for a in word:
            s = rows[self.row(s + (a,))]
        return s


class _Deadline(Exception):
    pass


def find_unclosed(table: ObservationTable) -> Optional[Word]:
    return table.find_unclosed()


def make_hypothesis(table: ObservationTable) -> Dfa:
    rows = table.s_rows()
    if len(rows) != len(table.S):
        raise ContractViolation("rows of S are not pairwise distinct")
    if table.find_unclosed() is not None:
        raise ContractViolation("observation table is not closed")
    ids = {r: i for i, r in enumerate(rows)}
    k = len(table.alphabet)
    delta = []
    accepting = set()
    for r, s in rows.items():
        delta.append(tuple(ids[table.row(s + (a,))] for a in range(k)))
        if table.T[s]:
            accepting.add(ids[r])
    h = Dfa(table.alphabet, len(rows), ids[table.row(())], frozenset(accepting), tuple(delta))
    return minimize(h)


def find_suffix(table: ObservationTable, cex: Word) -> Optional[Word]:
    """Binary search for a suffix of ``cex`` that splits a row of the table.

    With ``alpha(i) = member(access(cex[:i]) + cex[i:])``, ``alpha(0)`` is the
    true label of ``cex`` and ``alpha(len(cex))`` the hypothesis label. A
    breakpoint ``alpha(i) != alpha(i+1)`` yields the suffix ``cex[i+1:]``.
    """
    def alpha(i):
        return table._query(table.access(cex[:i]) + cex[i:])

    lo, hi = 0, len(cex)
    a_lo, a_hi = alpha(lo), alpha(hi)
    if a_lo == a_hi:
        return None
    while hi - lo > 1:
        mid = (lo + hi) // 2
        a_mid = alpha(mid)
        if a_mid == a_lo:
            lo = mid
        else:
            hi = mid
    return cex[hi:]


def process_counterexample(table: ObservationTable, cex: Word) -> ObservationTable:
    e = find_suffix(table, cex)
    if e is None or not table.add_suffix(e):
        log.debug("no single suffix found for counterexample; adding all suffixes")
        for i in range(len(cex) + 1):
            table.add_suffix(cex[i:])
    return table


@dataclass
class LStarResult:
    dfa: Dfa
    converged: bool
    query_log: QueryLog
    hypotheses: list = field(default_factory=list)
    elapsed: float = 0.0
    reason: str = ""


def run(teacher: Teacher, wall_clock_seconds: float = float("inf"), max_states: Optional[int] = None,
        record_members: bool = True) -> LStarResult:
    """Learn a DFA from ``teacher``.

    Stops with ``converged=False`` and the last hypothesis when the wall clock
    or state limit is exceeded. Exceptions raised by the teacher propagate;
    the partial log is attached to them as ``query_log``.
    """
    if wall_clock_seconds <= 0 or (max_states is not None and max_states <= 0):
        raise ValueError("limits must be positive")
    start = time.monotonic()
    deadline = start + wall_clock_seconds
    qlog = QueryLog(teacher.alphabet, record_members)

    def member(w: Word) -> bool:
        t0 = time.perf_counter()
        ans = bool(teacher.membership(w))
        qlog.member(w, ans, (time.perf_counter() - t0) * 1e3)
        return ans

    def result(dfa, converged, reason):
        return LStarResult(dfa, converged, qlog, list(qlog.hypotheses), time.monotonic() - start, reason)

    try:
        table = ObservationTable(teacher.alphabet, member)
        table.close()
        hypothesis = make_hypothesis(table)
        while True:
            if max_states is not None and hypothesis.n_states > max_states:
                return result(hypothesis, False, "max_states")
            t0 = time.perf_counter()
            try:
                cex = teacher.equivalence(hypothesis)
            except EquivalenceTimeout:
                qlog.equiv(hypothesis, None, (time.perf_counter() - t0) * 1e3)
                return result(hypothesis, False, "timeout")
            qlog.equiv(hypothesis, cex, (time.perf_counter() - t0) * 1e3)
            if cex is None:
                return result(hypothesis, True, "accepted")
            cex = tuple(cex)
            if table._query(cex) == hypothesis.classify(cex):
                raise ContractViolation(f"counterexample {cex!r} is classified correctly by the hypothesis")
            if time.monotonic() > deadline:
                return result(hypothesis, False, "timeout")
            previous = hypothesis
            # a single suffix guarantees a new state but not that cex is fixed
            while hypothesis.classify(cex) != table.T[cex]:
                process_counterexample(table, cex)
                table.close(deadline)
                hypothesis = make_hypothesis(table)
            if hypothesis.n_states <= previous.n_states:
                raise ContractViolation("counterexample processing did not grow the hypothesis")
            if time.monotonic() > deadline:
                return result(hypothesis, False, "timeout")
    except _Deadline:
        return result(hypothesis, False, "timeout")
    except Exception as e:
        e.query_log = qlog
        raise
