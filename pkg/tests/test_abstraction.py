import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rnnextract import abstraction as ab
from rnnextract.abstraction import (
    IntervalSplit, Leaf, Partitioning, RefinementError, RefinementRequest, initial_partitioning,
    refine_aggressive, refine_svm,
)


def test_p0_maps_everything_to_zero():
    p = initial_partitioning()
    assert p.map(np.array([0.3, -2.0])) == 0
    assert p(np.zeros(7)) == 0
    assert p.leaf_count() == 1


def test_interval_split_sides():
    p = Partitioning(IntervalSplit(0, 0.5, Leaf(1), Leaf(2)), 3)
    assert p.map([1.0, 0.0]) == 2
    assert p.map([0.0, 0.0]) == 1
    assert p.map([0.5, 0.0]) == 2  # threshold goes high
    assert p.map([0.0, 0.0]) == p.map([0.0, 0.0])


def test_refine_svm_pair():
    p = refine_svm(initial_partitioning(), RefinementRequest([1.0, 0.0], ([-1.0, 0.0],)))
    assert p.leaf_count() == 2
    assert p.map([1.0, 0.0]) != p.map([-1.0, 0.0])


def test_refine_aggressive_depth_one():
    p = refine_aggressive(initial_partitioning(), RefinementRequest([1.0, 0, 0], ([0, 0, 0.1],)), 1)
    assert p.root == IntervalSplit(0, 0.5, Leaf(1), Leaf(2))


def test_refine_aggressive_depth_two():
    p = refine_aggressive(initial_partitioning(), RefinementRequest([1.0, 0, 0], ([0, 0, 0.1],)), 2)
    root = p.root
    assert (root.dim, root.threshold) == (0, 0.5)
    for child in (root.low, root.high):
        assert child.dim == 2 and child.threshold == pytest.approx(0.05)
    assert p.leaf_count() == 4
    assert p.depth() == 2


def test_default_depth():
    assert ab.DEFAULT_DEPTH == 10


def test_refine_aggressive_clamps_depth():
    p = refine_aggressive(initial_partitioning(), RefinementRequest([1.0, 0.0], ([0.0, 1.0],)), 10)
    assert p.leaf_count() == 4


def test_empty_refinement_request():
    with pytest.raises(RefinementError):
        RefinementRequest([0.0], ())
    with pytest.raises(RefinementError):
        refine_svm(initial_partitioning(), RefinementRequest([0.0, 1.0], ([0.0, 1.0],)))


def test_refinement_does_not_touch_original():
    p = initial_partitioning()
    refine_svm(p, RefinementRequest([1.0, 0.0], ([-1.0, 0.0],)))
    assert p.leaf_count() == 1 and p.history == ()


def test_single_vector_mean_degenerates_to_it():
    h, x = np.array([0.0, 2.0]), np.array([1.0, 0.0])
    p = refine_aggressive(initial_partitioning(), RefinementRequest(h, (x,)), 1)
    assert (p.root.dim, p.root.threshold) == (1, 1.0)


def test_json_round_trip():
    rng = np.random.default_rng(0)
    p = refine_aggressive(initial_partitioning(), RefinementRequest(rng.normal(size=4), (rng.normal(size=4),)), 3)
    h = rng.normal(size=4)
    p = refine_svm(p, RefinementRequest(h, (h + 0.3, h - 0.4)))
    back = Partitioning.from_json(p.to_json())
    assert back.to_json() == p.to_json()
    for x in rng.normal(size=(200, 4)):
        assert back.map(x) == p.map(x)


def test_dimension_check():
    p = refine_svm(initial_partitioning(), RefinementRequest([1.0, 0.0], ([-1.0, 0.0],)))
    with pytest.raises(ValueError):
        p.map([1.0, 0.0, 0.0])


def random_refinements(seed, steps, dim=6):
    """Yield (before, after, request, kind, depth) over a chain of random refinements."""
    rng = np.random.default_rng(seed)
    p = initial_partitioning()
    for _ in range(steps):
        h = rng.uniform(-1, 1, dim)
        target = p.map(h)
        # members of H must share h's A-state: sample around h and keep those
        H = [x for x in h + rng.normal(0, 0.5, (20, dim)) if p.map(x) == target and not np.array_equal(x, h)]
        if not H:
            continue
        req = RefinementRequest(h, tuple(H))
        if rng.random() < 0.5:
            d = int(rng.integers(1, 5))
            after = refine_aggressive(p, req, d)
            yield p, after, req, "aggressive", d
        else:
            after = refine_svm(p, req)
            yield p, after, req, "svm", None
        p = after


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_leaf_arithmetic_and_monotone_distinction(seed):
    rng = np.random.default_rng(seed + 1)
    for before, after, req, kind, d in random_refinements(seed, 4):
        delta = after.leaf_count() - before.leaf_count()
        assert delta == (1 if kind == "svm" else 2 ** d - 1)
        X = rng.uniform(-1.5, 1.5, (200, 6))
        Y = rng.uniform(-1.5, 1.5, (200, 6))
        for x, y in zip(X, Y):
            if before.map(x) != before.map(y):
                assert after.map(x) != after.map(y)
        assert any(after.map(x) != after.map(req.h) for x in req.H)
        added = sum(e.get("depth", 1) for e in after.history)
        assert after.depth() <= added
