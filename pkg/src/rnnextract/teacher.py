"""An L* teacher backed by a recurrent acceptor.

Membership queries go straight to the network. Equivalence queries explore
the abstraction of the network induced by the current partitioning in
lockstep with the hypothesis. A classification conflict yields a
counterexample; a clustering conflict (one A-state reached together with two
different hypothesis states) yields either a counterexample or a refinement
of the partitioning followed by a fresh exploration.
"""

from __future__ import annotations

import json
import logging
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import abstraction, lstar
from .abstraction import Partitioning, RefinementError, RefinementRequest
from .automata import Dfa, Word, separating_suffix as _separating_suffix, shortlex_key
from .rnn import RnnAcceptor

log = logging.getLogger(__name__)

ACCEPT = "accept"
ACCEPT_TIMEOUT = "accept_timeout"
REJECT = "reject"
RESTART = "restart"

# prefix-state cache entries kept before the cache is flushed
STATE_CACHE_LIMIT = 200_000


class MinimalityViolation(lstar.ContractViolation):
    pass


@dataclass
class Verdict:
    kind: str
    counterexample: Optional[Word] = None


@dataclass
class TeacherConfig:
    initial_depth: int = abstraction.DEFAULT_DEPTH
    time_limit: Optional[float] = None  # per equivalence query, seconds
    starting_samples: tuple = ()  # words; the shortest accepted and rejected are used

    def __post_init__(self):
        if self.initial_depth < 1:
            raise ValueError("initial depth must be at least 1")


@dataclass
class ExplorationRecords:
    """Bookkeeping for one parallel exploration, keyed by exact R-state bytes."""

    states: dict = field(default_factory=dict)  # key -> vector
    paths: dict = field(default_factory=dict)  # key -> [words], discovery order
    l_state: dict = field(default_factory=dict)  # key -> hypothesis state
    a_state: dict = field(default_factory=dict)  # key -> abstraction state
    visitors: dict = field(default_factory=dict)  # a_state -> [keys]
    association: dict = field(default_factory=dict)  # a_state -> hypothesis state
    new: deque = field(default_factory=deque)
    Q: set = field(default_factory=set)
    F: set = field(default_factory=set)
    delta: dict = field(default_factory=dict)  # (a_state, symbol) -> a_state

    def update(self, q: int, key: bytes, h: np.ndarray, q_l: int, w: Word) -> None:
        self.states[key] = h
        self.paths[key] = [w]
        self.l_state[key] = q_l
        self.a_state[key] = q
        self.visitors.setdefault(q, []).append(key)
        self.association[q] = q_l
        self.new.append(key)


def separating_suffix(A: Dfa, q1: int, q2: int) -> Word:
    if q1 == q2:
        raise MinimalityViolation("asked to separate a state from itself")
    s = _separating_suffix(A, q1, q2)
    if s is None:
        raise MinimalityViolation(f"hypothesis states {q1} and {q2} are equivalent; hypothesis not minimal")
    return s


def membership(net: RnnAcceptor, w: Sequence[int]) -> bool:
    return net.classify_word(w)


class RnnTeacher:
    """Teacher for :func:`lstar.run` answering queries from ``net``.

    The partitioning persists across equivalence queries of one extraction.
    ``deadline`` (a ``time.monotonic()`` value) bounds every equivalence query.
    """

    def __init__(self, net: RnnAcceptor, cfg: TeacherConfig = TeacherConfig(),
                 partitioning: Optional[Partitioning] = None, deadline: Optional[float] = None):
        self.net = net
        self.alphabet = net.alphabet
        self.cfg = cfg
        self.p = partitioning or abstraction.initial_partitioning()
        self.deadline = deadline
        self.n_refinements = len(self.p.history)
        self._cache = {(): net.initial_state()}
        # the network is fixed, so successors can be reused across explorations;
        # A-state ids stay valid until the leaf they name is refined
        self._succ: dict = {}
        self._amap: dict = {}
        self.equivalence_records: list = []
        self.refinements: list = []
        self.starting_samples = shortest_of_each_class(net, cfg.starting_samples)

    # -- membership -----------------------------------------------------------

    def state(self, w: Sequence[int]) -> np.ndarray:
        w = tuple(w)
        cached = self._cache.get(w)
        if cached is not None:
            return cached
        self.alphabet.check(w)
        i = len(w)
        while w[:i] not in self._cache:
            i -= 1
        h = self._cache[w[:i]]
        if len(self._cache) > STATE_CACHE_LIMIT:
            self._cache = {(): self._cache[()]}
        for j in range(i, len(w)):
            h = self.net._step_single(h, w[j])
            self._cache[w[:j + 1]] = h
        return h

    def membership(self, w: Sequence[int]) -> bool:
        return self.net.classify_state(self.state(w))

    # -- equivalence ----------------------------------------------------------

    def _successors(self, key: bytes, h: np.ndarray) -> list:
        succ = self._succ.get(key)
        if succ is None:
            if len(self._succ) > STATE_CACHE_LIMIT:
                self._succ.clear()
            succ = [(h2, h2.tobytes()) for h2 in (self.net._step_single(h, a) for a in range(len(self.alphabet)))]
            self._succ[key] = succ
        return succ

    def _map(self, key: bytes, h: np.ndarray) -> int:
        q = self._amap.get(key)
        if q is None:
            if len(self._amap) > STATE_CACHE_LIMIT:
                self._amap.clear()
            q = self._amap[key] = self.p.map(h)
        return q

    def _set_partitioning(self, p2: Partitioning, refined: int) -> None:
        self.p = p2
        self._amap = {k: q for k, q in self._amap.items() if q != refined}

    def _out_of_time(self, query_deadline):
        now = time.monotonic()
        return (query_deadline is not None and now > query_deadline) or (
            self.deadline is not None and now > self.deadline)

    def parallel_explore(self, A: Dfa, query_deadline: Optional[float] = None) -> Verdict:
        f_R = self.net.classify_state
        rec = ExplorationRecords()
        h0 = self.net.initial_state()
        key0 = h0.tobytes()
        rec.update(self._map(key0, h0), key0, h0, A.initial, ())
        while rec.new:
            if self._out_of_time(query_deadline):
                return Verdict(ACCEPT_TIMEOUT)
            key = rec.new.popleft()
            h = rec.states[key]
            q = rec.a_state[key]
            q_l = rec.l_state[key]
            accepted = f_R(h)
            if accepted != A.is_accepting(q_l):
                return Verdict(REJECT, rec.paths[key][0])
            if q in rec.Q:
                continue
            rec.Q.add(q)
            if accepted:
                rec.F.add(q)
            w = rec.paths[key][0]
            for a, (h2, key2) in enumerate(self._successors(key, h)):
                q2 = self._map(key2, h2)
                rec.delta[(q, a)] = q2
                q_l2 = A.delta[q_l][a]
                if q2 in rec.association and rec.association[q2] != q_l2:
                    return self.handle_cluster_conflict(rec, A, q2, rec.association[q2], q_l2,
                                                        h2, w + (a,))
                if key2 in rec.paths:
                    rec.paths[key2].append(w + (a,))
                    continue
                rec.update(q2, key2, h2, q_l2, w + (a,))
        return Verdict(ACCEPT)

    def handle_cluster_conflict(self, rec: ExplorationRecords, A: Dfa, q: int, q1: int, q2: int,
                                h_new: np.ndarray, w_new: Word) -> Verdict:
        """Resolve A-state ``q`` being associated with both ``q1`` and ``q2``.

        Every visitor path of ``q`` and the new path are extended by a suffix
        separating ``q1`` and ``q2`` and checked against the network; a
        disagreement with the hypothesis is returned as a counterexample,
        otherwise the new state is split from the visitors.
        """
        s = separating_suffix(A, q1, q2)
        net = self.net
        candidates = []
        visitors = rec.visitors[q]
        for key in visitors:
            label = net.classify_state(net.run(s, rec.states[key]))
            expected = A.classify(s, rec.l_state[key])
            if label != expected:
                candidates.extend(w + s for w in rec.paths[key])
        label_new = net.classify_state(net.run(s, h_new))
        if label_new != A.classify(s, q2):
            candidates.append(w_new + s)
        if candidates:
            return Verdict(REJECT, min(candidates, key=shortlex_key))

        # every tested word agrees with the hypothesis, so the visitors and the
        # new state genuinely behave differently on s
        witness = min((w for key in visitors for w in rec.paths[key]), key=shortlex_key)
        H = [rec.states[key] for key in visitors]
        req = RefinementRequest(h_new, tuple(H))
        before = self.p.leaf_count()
        first = self.n_refinements == 0
        def separated(p):
            return any(p.map(x) != p.map(h_new) for x in H)

        try:
            if first:
                p2 = abstraction.refine_aggressive(self.p, req, self.cfg.initial_depth)
                if not separated(p2):
                    log.info("interval tree separated nothing; using an SVM split")
                    p2 = abstraction.refine_svm(self.p, req)
            else:
                p2 = abstraction.refine_svm(self.p, req)
                if not separated(p2):
                    log.info("SVM split separated nothing; using a depth-1 interval split")
                    p2 = abstraction.refine_aggressive(self.p, req, 1)
        except RefinementError as e:
            raise lstar.ContractViolation(f"degenerate refinement request: {e}") from e
        if not separated(p2):
            # exploration would meet the same conflict again forever
            raise lstar.ContractViolation("refinement could not separate the conflicting states")
        self._set_partitioning(p2, p2.history[-1]["a_state"])
        self.n_refinements += 1
        self.refinements.append({
            "w1": witness, "w2": w_new, "suffix": s,
            "kind": p2.history[-1]["kind"], "n_H": len(H),
            "leaves_before": before, "leaves_after": p2.leaf_count(),
        })
        return Verdict(RESTART)

    def check_equivalence(self, A: Dfa, query_deadline: Optional[float] = None) -> Verdict:
        while True:
            verdict = self.parallel_explore(A, query_deadline)
            if verdict.kind != RESTART:
                return verdict

    def equivalence(self, A: Dfa) -> Optional[Word]:
        t0 = time.monotonic()
        query_deadline = None if self.cfg.time_limit is None else t0 + self.cfg.time_limit
        refinements_before = len(self.refinements)
        bad = [w for w in self.starting_samples if self.membership(w) != A.classify(w)]
        if bad:
            verdict = Verdict(REJECT, min(bad, key=shortlex_key))
        else:
            verdict = self.check_equivalence(A, query_deadline)
        self.equivalence_records.append({
            "hypothesis_size": A.n_states,
            "hypothesis": A,
            "verdict": verdict.kind,
            "counterexample": verdict.counterexample,
            "provided": bool(bad),
            "refinements": len(self.refinements) - refinements_before,
            "elapsed_ms": (time.monotonic() - t0) * 1e3,
            "leaf_count": self.p.leaf_count(),
        })
        if verdict.kind == ACCEPT_TIMEOUT:
            raise lstar.EquivalenceTimeout()
        return verdict.counterexample if verdict.kind == REJECT else None


# -- extraction ------------------------------------------------------------------

@dataclass
class ExtractionResult:
    dfa: Dfa
    converged: bool
    elapsed: float
    teacher: RnnTeacher
    lstar_result: lstar.LStarResult

    @property
    def hypotheses(self):
        return self.lstar_result.hypotheses

    def report(self) -> dict:
        alphabet = self.dfa.alphabet
        queries = []
        for r in self.teacher.equivalence_records:
            cex = r["counterexample"]
            queries.append({
                "hypothesis_size": r["hypothesis_size"],
                "verdict": r["verdict"],
                "counterexample": None if cex is None else alphabet.decode(cex),
                "provided": r["provided"],
                "refinements": r["refinements"],
                "elapsed_ms": round(r["elapsed_ms"], 3),
                "leaf_count": r["leaf_count"],
                "hypothesis": r["hypothesis"].to_json(),
            })
        refinements = [{
            "w1": alphabet.decode(e["w1"]), "w2": alphabet.decode(e["w2"]),
            "suffix": alphabet.decode(e["suffix"]), "kind": e["kind"], "n_H": e["n_H"],
            "leaves_before": e["leaves_before"], "leaves_after": e["leaves_after"],
        } for e in self.teacher.refinements]
        return {
            "converged": self.converged,
            "elapsed_s": round(self.elapsed, 4),
            "n_states": self.dfa.n_states,
            "membership_queries": self.lstar_result.query_log.n_member,
            "equivalence_queries": queries,
            "refinements": refinements,
            "dfa": self.dfa.to_json(),
        }


def shortest_of_each_class(net, words: Sequence) -> tuple:
    """The shortlex-first accepted and rejected word among ``words``."""
    found = {}
    for w in sorted(set(tuple(w) for w in words), key=shortlex_key):
        found.setdefault(net.classify_word(w), w)
        if len(found) == 2:
            break
    return tuple(found[label] for label in (True, False) if label in found)


def default_starting_samples(net: RnnAcceptor, train_words: Optional[Sequence] = None,
                             seed: int = 0, max_length: int = 20, draws: int = 2000) -> tuple:
    """Shortest accepted and rejected words, from a train set or by sampling."""
    pool = list(train_words) if train_words is not None else []
    if not pool:
        rng = np.random.default_rng(seed)
        pool = [()]
        for n in range(1, max_length + 1):
            pool.extend(tuple(int(x) for x in rng.integers(0, len(net.alphabet), n))
                        for _ in range(max(1, draws // max_length)))
    return shortest_of_each_class(net, pool)


def extract(net: RnnAcceptor, time_limit: float = 30.0, initial_depth: int = abstraction.DEFAULT_DEPTH,
            starting_samples: Optional[Sequence] = None, max_states: Optional[int] = None,
            record_members: bool = False) -> ExtractionResult:
    """Run L* against the network; returns the last hypothesis on timeout."""
    t0 = time.monotonic()
    if starting_samples is None:
        starting_samples = default_starting_samples(net)
    teacher = RnnTeacher(net, TeacherConfig(initial_depth, None, tuple(tuple(w) for w in starting_samples)),
                         deadline=t0 + time_limit)
    result = lstar.run(teacher, time_limit, max_states, record_members=record_members)
    return ExtractionResult(result.dfa, result.converged, time.monotonic() - t0, teacher, result)


# -- audit -------------------------------------------------------------------------

@dataclass
class AuditReport:
    n_counterexamples: int = 0
    n_refinements: int = 0
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def audit(report: dict, net: RnnAcceptor) -> AuditReport:
    """Re-check every counterexample and refinement witness against a fresh network run.

    ``report`` is the dictionary produced by :meth:`ExtractionResult.report`.
    """
    alphabet = net.alphabet

    def encode(text):
        return alphabet.encode(text if all(len(s) == 1 for s in alphabet.symbols) else text.split())

    out = AuditReport()
    for i, q in enumerate(report["equivalence_queries"]):
        if q["counterexample"] is None:
            continue
        out.n_counterexamples += 1
        w = encode(q["counterexample"])
        A = Dfa.from_json(q["hypothesis"])
        if net.classify_word(w) == A.classify(w):
            out.violations.append(f"query {i}: counterexample {q['counterexample']!r} agrees with hypothesis")
    for i, r in enumerate(report["refinements"]):
        out.n_refinements += 1
        s = encode(r["suffix"])
        w1, w2 = encode(r["w1"]), encode(r["w2"])
        if net.classify_word(w1 + s) == net.classify_word(w2 + s):
            out.violations.append(f"refinement {i}: witnesses {r['w1']!r}, {r['w2']!r} with suffix "
                                  f"{r['suffix']!r} are classified alike")
    return out


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=1)
