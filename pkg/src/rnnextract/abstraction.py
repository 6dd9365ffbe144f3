"""Partitionings of the network state space, stored as decision trees.

Refinement never mutates: it returns a new :class:`Partitioning` that shares
every untouched subtree with the old one.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import svm

log = logging.getLogger(__name__)

DEFAULT_DEPTH = 10


class RefinementError(ValueError):
    pass


@dataclass(frozen=True)
class Leaf:
    a_state: int


@dataclass(frozen=True)
class IntervalSplit:
    dim: int
    threshold: float
    low: "Node"
    high: "Node"

    def goes_high(self, h) -> bool:
        return bool(h[self.dim] >= self.threshold)


@dataclass(frozen=True)
class SvmSplit:
    model: svm.RbfSvmModel
    neg: "Node"
    pos: "Node"

    def goes_pos(self, h) -> bool:
        return svm.decide(self.model, h)


Node = Union[Leaf, IntervalSplit, SvmSplit]


@dataclass(frozen=True)
class RefinementRequest:
    h: np.ndarray
    H: tuple

    def __post_init__(self):
        object.__setattr__(self, "h", np.asarray(self.h, dtype=np.float64))
        object.__setattr__(self, "H", tuple(np.asarray(x, dtype=np.float64) for x in self.H))
        if not self.H:
            raise RefinementError("cannot refine against an empty set")


@dataclass(frozen=True)
class Partitioning:
    root: Node = Leaf(0)
    next_id: int = 1
    dim: Optional[int] = None
    history: tuple = field(default=(), compare=False)

    def map(self, h) -> int:
        h = np.asarray(h, dtype=np.float64)
        if self.dim is not None and h.shape != (self.dim,):
            raise ValueError(f"state has shape {h.shape}, partitioning expects ({self.dim},)")
        node = self.root
        while True:
            if isinstance(node, Leaf):
                return node.a_state
            if isinstance(node, IntervalSplit):
                node = node.high if node.goes_high(h) else node.low
            else:
                node = node.pos if node.goes_pos(h) else node.neg

    __call__ = map

    def leaf_count(self) -> int:
        return self._leaf_count

    @functools.cached_property
    def _leaf_count(self) -> int:
        return sum(1 for _ in _leaves(self.root))

    def leaf_ids(self) -> list:
        return [leaf.a_state for leaf in _leaves(self.root)]

    def depth(self) -> int:
        return _depth(self.root)

    def to_json(self) -> dict:
        return {"next_id": self.next_id, "dim": self.dim, "root": _node_to_json(self.root)}

    @classmethod
    def from_json(cls, doc: dict) -> "Partitioning":
        try:
            return cls(_node_from_json(doc["root"]), int(doc["next_id"]),
                       None if doc.get("dim") is None else int(doc["dim"]))
        except (KeyError, TypeError) as e:
            raise ValueError(f"malformed partitioning document: {e}") from e


def initial_partitioning() -> Partitioning:
    """The partitioning that maps every state to A-state 0."""
    return Partitioning()


def _leaves(node):
    stack = [node]
    while stack:
        n = stack.pop()
        if isinstance(n, Leaf):
            yield n
        elif isinstance(n, IntervalSplit):
            stack.extend((n.high, n.low))
        else:
            stack.extend((n.pos, n.neg))


def _depth(node) -> int:
    if isinstance(node, Leaf):
        return 0
    a, b = (node.low, node.high) if isinstance(node, IntervalSplit) else (node.neg, node.pos)
    return 1 + max(_depth(a), _depth(b))


def _node_to_json(node) -> dict:
    if isinstance(node, Leaf):
        return {"kind": "leaf", "a_state": node.a_state}
    if isinstance(node, IntervalSplit):
        return {"kind": "interval", "dim": node.dim, "threshold": node.threshold,
                "low": _node_to_json(node.low), "high": _node_to_json(node.high)}
    return {"kind": "svm", "model": node.model.to_json(),
            "neg": _node_to_json(node.neg), "pos": _node_to_json(node.pos)}


def _node_from_json(doc: dict):
    kind = doc["kind"]
    if kind == "leaf":
        return Leaf(int(doc["a_state"]))
    if kind == "interval":
        return IntervalSplit(int(doc["dim"]), float(doc["threshold"]),
                             _node_from_json(doc["low"]), _node_from_json(doc["high"]))
    if kind == "svm":
        return SvmSplit(svm.RbfSvmModel.from_json(doc["model"]),
                        _node_from_json(doc["neg"]), _node_from_json(doc["pos"]))
    raise ValueError(f"unknown node kind {kind!r}")


def _replace_leaf(node, a_state: int, subtree):
    """Copy of ``node`` with leaf ``a_state`` replaced; shares other subtrees."""
    if isinstance(node, Leaf):
        return subtree if node.a_state == a_state else node
    if isinstance(node, IntervalSplit):
        low = _replace_leaf(node.low, a_state, subtree)
        high = _replace_leaf(node.high, a_state, subtree) if low is node.low else node.high
        if low is node.low and high is node.high:
            return node
        return IntervalSplit(node.dim, node.threshold, low, high)
    neg = _replace_leaf(node.neg, a_state, subtree)
    pos = _replace_leaf(node.pos, a_state, subtree) if neg is node.neg else node.pos
    if neg is node.neg and pos is node.pos:
        return node
    return SvmSplit(node.model, neg, pos)


def _filtered(p: Partitioning, req: RefinementRequest):
    target = p.map(req.h)
    H = [x for x in req.H if p.map(x) == target and not np.array_equal(x, req.h)]
    if len(H) < len(req.H):
        log.debug("dropped %d states outside A-state %d or equal to h", len(req.H) - len(H), target)
    if not H:
        raise RefinementError("nothing to separate after filtering")
    return target, H


def refine_svm(p: Partitioning, req: RefinementRequest, C: float = svm.DEFAULT_C,
               gamma: Optional[float] = None) -> Partitioning:
    """Split the A-state of ``req.h`` in two with an RBF SVM separating h from H."""
    target, H = _filtered(p, req)
    dim = req.h.shape[0]
    gamma = 1.0 / dim if gamma is None else gamma
    model, report = svm.fit(req.h[None, :], np.array(H), C=C, gamma=gamma)
    neg, pos = Leaf(p.next_id), Leaf(p.next_id + 1)
    root = _replace_leaf(p.root, target, SvmSplit(model, neg, pos))
    event = {"kind": "svm", "a_state": target, "n_H": len(H), "perfect": report.perfect,
             "n_misclassified": report.n_misclassified}
    if not report.perfect:
        log.info("imperfect SVM split of A-state %d (%d of %d wrong)", target,
                 report.n_misclassified, len(H) + 1)
    return Partitioning(root, p.next_id + 2, dim, p.history + (event,))


def refine_aggressive(p: Partitioning, req: RefinementRequest, d: int = DEFAULT_DEPTH) -> Partitioning:
    """Replace the A-state of ``req.h`` with a depth-``d`` tree of interval splits.

    Level ``i`` splits on the dimension with the ``i``-th largest gap between h
    and the mean of H, at the midpoint of that gap.
    """
    if d < 1:
        raise ValueError("depth must be at least 1")
    target, H = _filtered(p, req)
    h = req.h
    dim = h.shape[0]
    if d > dim:
        log.warning("refinement depth %d exceeds state dimension %d; clamping", d, dim)
        d = dim
    mean = np.mean(np.array(H), axis=0)
    gaps = np.abs(h - mean)
    dims = np.argsort(-gaps, kind="stable")[:d]
    thresholds = (h[dims] + mean[dims]) / 2.0

    next_id = p.next_id

    def build(level):
        nonlocal next_id
        if level == d:
            leaf = Leaf(next_id)
            next_id += 1
            return leaf
        low = build(level + 1)
        high = build(level + 1)
        return IntervalSplit(int(dims[level]), float(thresholds[level]), low, high)

    subtree = build(0)
    root = _replace_leaf(p.root, target, subtree)
    event = {"kind": "aggressive", "a_state": target, "n_H": len(H), "depth": d,
             "dims": [int(x) for x in dims]}
    return Partitioning(root, next_id, dim, p.history + (event,))
