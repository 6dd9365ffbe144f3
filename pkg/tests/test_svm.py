import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rnnextract import svm
from rnnextract.svm import decide, dual_objective, fit, rbf_kernel


def brute_force_dual(K, y, C):
    """Exact soft-margin dual optimum by enumerating which alphas sit at 0, C or in between.

    For every assignment the free alphas solve the KKT equality system; the
    best feasible candidate is the optimum of the convex QP.
    """
    n = len(y)
    Q = (y[:, None] * y[None, :]) * K
    best = np.inf
    for assign in itertools.product(range(3), repeat=n):
        a = np.zeros(n)
        at_c = [i for i in range(n) if assign[i] == 1]
        free = [i for i in range(n) if assign[i] == 2]
        a[at_c] = C
        if free:
            m = len(free)
            M = np.zeros((m + 1, m + 1))
            M[:m, :m] = Q[np.ix_(free, free)]
            M[:m, m] = -y[free]
            M[m, :m] = y[free]
            rhs = np.empty(m + 1)
            rhs[:m] = 1.0 - (Q[np.ix_(free, at_c)] @ a[at_c] if at_c else 0.0)
            rhs[m] = -(y[at_c] @ a[at_c]) if at_c else 0.0
            try:
                sol = np.linalg.solve(M, rhs)
            except np.linalg.LinAlgError:
                continue
            a[free] = sol[:m]
        if abs(y @ a) > 1e-9 or a.min() < -1e-9 or a.max() > C + 1e-9:
            continue
        best = min(best, dual_objective(a, y, K))
    return best


def test_two_point_split():
    m, rep = fit([[1.0, 0.0]], [[-1.0, 0.0]])
    assert rep.perfect
    assert decide(m, [1, 0]) and not decide(m, [-1, 0])


def test_symmetric_tie_goes_positive():
    m, _ = fit([[1.0, 0.0]], [[-1.0, 0.0]])
    assert abs(m.decision_function([0.0, 0.0])[0]) < 1e-9
    assert decide(m, [0.0, 0.0])


def test_center_versus_ring():
    ring = [[1, 0], [-1, 0], [0, 1], [0, -1]]
    m, rep = fit([[0.0, 0.0]], ring)
    assert rep.perfect and rep.n_misclassified == 0
    assert decide(m, [0, 0])
    assert not any(decide(m, x) for x in ring)
    assert decide(m, [0.05, 0.05])


def test_support_vectors_keep_their_labels():
    rng = np.random.default_rng(3)
    P, N = rng.normal(1.5, 0.3, (5, 3)), rng.normal(-1.5, 0.3, (7, 3))
    m, rep = fit(P, N)
    assert rep.perfect
    for sv, coef in zip(m.support_vectors, m.dual_coef):
        assert decide(m, sv) == (coef > 0)


@pytest.mark.parametrize("trial", range(8))
def test_dual_matches_brute_force(trial):
    rng = np.random.default_rng(trial)
    n_pos = int(rng.integers(1, 4))
    n = int(rng.integers(n_pos + 1, 7))
    X = rng.normal(size=(n, 3))
    C = float(rng.choice([0.5, 1.0, 10.0, 1e4]))
    gamma = float(rng.choice([0.3, 1.0]))
    m, rep = fit(X[:n_pos], X[n_pos:], C=C, gamma=gamma)
    y = np.array([1.0] * n_pos + [-1.0] * (n - n_pos))
    oracle = brute_force_dual(rbf_kernel(X, X, gamma), y, C)
    assert abs(rep.objective - oracle) < 1e-3


def test_kkt_gap_within_tolerance():
    rng = np.random.default_rng(0)
    m, rep = fit(rng.normal(size=(10, 4)), rng.normal(size=(12, 4)), C=10.0)
    assert rep.kkt_gap < svm.KKT_TOL


def separable_instance(seed):
    """A single point against a cloud kept at distance >= 0.2 from it."""
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 12))
    h = rng.uniform(-1, 1, d)
    H = rng.uniform(-1, 1, (int(rng.integers(1, 40)), d))
    H = H[np.linalg.norm(H - h, axis=1) >= 0.2]
    if len(H) == 0:
        H = (h + 0.5)[None, :]
    return h, H


@pytest.mark.parametrize("seed", range(50))
def test_separable_instances_are_split(seed):
    h, H = separable_instance(seed)
    m, rep = fit(h[None, :], H, C=1e4)
    assert rep.perfect
    assert decide(m, h)
    assert not any(decide(m, x) for x in H)


def test_perfect_report_is_truthful():
    rng = np.random.default_rng(9)
    P, N = rng.normal(size=(6, 2)), rng.normal(size=(6, 2))
    m, rep = fit(P, N, C=1.0)
    wrong = sum(not decide(m, x) for x in P) + sum(decide(m, x) for x in N)
    assert rep.n_misclassified == wrong
    assert rep.perfect == (wrong == 0)


def test_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        fit([], [[1.0]])
    with pytest.raises(ValueError):
        fit([[1.0, 2.0]], [[1.0]])
    m, _ = fit([[1.0, 0.0]], [[0.0, 1.0]])
    with pytest.raises(ValueError):
        m.decision_function([1.0, 2.0, 3.0])


def test_model_json_round_trip():
    m, _ = fit([[0.0, 0.0]], [[1, 0], [-1, 0]])
    back = svm.RbfSvmModel.from_json(m.to_json())
    x = np.array([[0.3, -0.2], [2.0, 1.0]])
    assert np.array_equal(back.decision_function(x), m.decision_function(x))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_fit_is_deterministic(seed):
    h, H = separable_instance(seed)
    a, _ = fit(h[None, :], H)
    b, _ = fit(h[None, :], H, seed=seed + 1)
    assert np.array_equal(a.dual_coef, b.dual_coef) and a.bias == b.bias
