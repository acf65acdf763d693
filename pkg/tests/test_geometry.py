import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dadmpc.exceptions import EmptySetError
from dadmpc.geometry import (BoxSet, HPolytope, as_box, bounding_box, chebyshev_center, contains,
                             intersect, is_empty, is_subset, pontryagin_diff, project,
                             remove_redundancy, sample_hit_and_run, support)
from dadmpc.solver import LinearProgram, solve_lp

SQUARE = BoxSet([-1.0, -1.0], [1.0, 1.0])
X_BENCH = BoxSet([-7.0, 0.0], [7.0, 12.0])
W_BENCH = BoxSet.symmetric(3.0, 2)


def _same_set(P, Q):
    return is_subset(P, Q) and is_subset(Q, P)


def _random_polytope(rng, n_rows, dim, radius=1.0):
    """Random halfspaces tangent-or-outside a ball around the origin, intersected with a box."""
    F = rng.normal(size=(n_rows, dim))
    F /= np.linalg.norm(F, axis=1, keepdims=True)
    f = rng.uniform(radius, 2.0 * radius, size=n_rows)
    box = BoxSet.symmetric(3.0 * radius, dim)
    return HPolytope(np.vstack([F, box.normals]), np.concatenate([f, box.offsets]))


# ---- type and membership ----------------------------------------------------------------

def test_polytope_validation():
    with pytest.raises(ValueError):
        HPolytope([[1.0, 0.0]], [1.0, 2.0])
    with pytest.raises(ValueError):
        HPolytope([[np.inf, 0.0]], [1.0])
    with pytest.raises(ValueError):
        BoxSet([1.0], [0.0])
    with pytest.raises(ValueError):
        BoxSet([-np.inf], [0.0])


def test_polytope_is_immutable():
    with pytest.raises(ValueError):
        SQUARE.normals[0, 0] = 5.0


def test_json_round_trip():
    P = _random_polytope(np.random.default_rng(0), 5, 2)
    Q = HPolytope.from_json(P.to_json())
    np.testing.assert_array_equal(P.normals, Q.normals)
    np.testing.assert_array_equal(P.offsets, Q.offsets)
    assert set(P.to_dict()) == {"normals", "offsets"}


def test_contains_examples():
    assert contains(SQUARE, [0.0, 0.0])
    assert not contains(SQUARE, [2.0, 0.0])
    band = BoxSet([-7.0, -7.0], [7.0, 7.0])
    assert contains(band, [7.0000000001, 0.0], tol=1e-9)
    assert not contains(band, [7.00001, 0.0], tol=1e-9)
    with pytest.raises(ValueError):
        contains(SQUARE, [0.0])


def test_is_empty_examples():
    assert is_empty(HPolytope([[1.0], [-1.0]], [-1.0, -1.0]))
    assert not is_empty(BoxSet([0.0], [1.0]))
    assert not is_empty(HPolytope([[-1.0]], [0.0]))
    assert is_empty(HPolytope.empty(3))
    assert not is_empty(HPolytope.whole_space(2))


def test_as_box_recognises_boxes_only():
    b = as_box(HPolytope(X_BENCH.normals, X_BENCH.offsets))
    np.testing.assert_array_equal(b.lower, [-7.0, 0.0])
    np.testing.assert_array_equal(b.upper, [7.0, 12.0])
    assert as_box(HPolytope([[1.0, 1.0]], [1.0])) is None


# ---- support and Pontryagin difference --------------------------------------------------

def test_support_examples():
    assert support(W_BENCH, [1.0, 1.0]) == pytest.approx(6.0)
    assert support(W_BENCH, [1.0, 0.0]) == pytest.approx(3.0)
    tri = HPolytope([[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]], [0.0, 0.0, 1.0])
    assert support(tri, [1.0, 0.0]) == pytest.approx(1.0)


def test_support_unbounded_and_empty():
    half = HPolytope([[-1.0, 0.0]], [0.0])
    assert support(half, [1.0, 0.0]) == np.inf
    assert support(half, [-1.0, 0.0]) == pytest.approx(0.0)
    assert support(HPolytope.whole_space(2), [0.0, 0.0]) == 0.0
    assert support(HPolytope.whole_space(2), [0.0, 1.0]) == np.inf
    with pytest.raises(EmptySetError):
        support(HPolytope.empty(2), [1.0, 0.0])


def test_pontryagin_examples():
    D = pontryagin_diff(BoxSet.symmetric(2.0, 2), BoxSet.symmetric(0.5, 2))
    assert _same_set(D, BoxSet.symmetric(1.5, 2))
    P = _random_polytope(np.random.default_rng(1), 6, 2)
    D0 = pontryagin_diff(P, BoxSet(np.zeros(2), np.zeros(2)))
    np.testing.assert_array_equal(D0.offsets, P.offsets)
    D = pontryagin_diff(X_BENCH, W_BENCH)
    np.testing.assert_allclose(D.offsets, [4.0, 9.0, 4.0, -3.0])


def test_pontryagin_benchmark_by_sampling():
    rng = np.random.default_rng(2)
    D = pontryagin_diff(X_BENCH, W_BENCH)
    xs = rng.uniform([-4.0, 3.0], [4.0, 9.0], size=(10_000, 2))
    ws = rng.uniform(-3.0, 3.0, size=(10_000, 2))
    assert all(contains(D, x) for x in xs[:200])
    assert np.all(np.abs(xs[:, 0] + ws[:, 0]) <= 7.0)
    assert np.all((xs[:, 1] + ws[:, 1] >= 0.0) & (xs[:, 1] + ws[:, 1] <= 12.0))


def test_pontryagin_soundness_random():
    rng = np.random.default_rng(3)
    for _ in range(5):
        P = _random_polytope(rng, 7, 2, radius=2.0)
        W = _random_polytope(rng, 5, 2, radius=0.3)
        D = pontryagin_diff(P, W)
        if is_empty(D):
            continue
        xs = sample_hit_and_run(D, 20, rng, burn_in=200)
        wv = sample_hit_and_run(W, 5, rng, burn_in=200)
        for x in xs:
            for w in wv:
                assert contains(P, x + w, tol=1e-7)


# ---- redundancy, intersection, containment ----------------------------------------------

def test_redundancy_examples():
    R = remove_redundancy(HPolytope([[1.0], [1.0]], [1.0, 2.0]))
    assert R.n_rows == 1 and R.offsets[0] == pytest.approx(1.0)
    dup = HPolytope(np.vstack([SQUARE.normals, SQUARE.normals[:1]]),
                    np.concatenate([SQUARE.offsets, SQUARE.offsets[:1]]))
    assert remove_redundancy(dup).n_rows == 4
    assert is_empty(remove_redundancy(HPolytope([[1.0], [-1.0]], [-1.0, -1.0])))


def test_redundancy_on_random_halfspaces_around_disk():
    rng = np.random.default_rng(4)
    ang = rng.uniform(0, 2 * np.pi, 30)
    F = np.column_stack([np.cos(ang), np.sin(ang)])
    f = rng.uniform(1.0, 1.6, 30)
    P = HPolytope(F, f)
    R = remove_redundancy(P)
    kept = {tuple(np.round(r, 12)) for r in np.column_stack([R.normals, R.offsets])}
    for i in range(30):
        row = tuple(np.round(np.append(F[i], f[i]), 12))
        if row in kept:
            continue
        # removed row: maximising it over the retained rows must not exceed its offset
        st = solve_lp(LinearProgram(-F[i], ineq=(R.normals, R.offsets)))
        assert st.optimal and -st.objective <= f[i] + 1e-7
    pts = rng.uniform(-2, 2, size=(1000, 2))
    for x in pts:
        if abs(np.max(F @ x - f)) > 1e-6:
            assert contains(P, x) == contains(R, x)


def test_intersect_examples():
    a, b = BoxSet([-1.0], [1.0]), BoxSet([0.0], [2.0])
    assert _same_set(intersect(a, b), BoxSet([0.0], [1.0]))
    P = _random_polytope(np.random.default_rng(5), 6, 2)
    assert _same_set(intersect(P, P), P)
    assert is_empty(intersect(BoxSet([-1.0], [0.0]), BoxSet([1.0], [2.0])))
    tri = HPolytope([[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]], [0.0, 0.0, 1.0])
    assert _same_set(intersect(tri, SQUARE), tri)


def test_is_subset_examples():
    assert is_subset(SQUARE, BoxSet.symmetric(2.0, 2))
    assert not is_subset(BoxSet.symmetric(2.0, 2), SQUARE)
    assert is_subset(HPolytope.empty(2), SQUARE)
    assert not is_subset(HPolytope([[-1.0, 0.0]], [0.0]), SQUARE)


def test_is_subset_transitive_chain():
    rng = np.random.default_rng(6)
    base = _random_polytope(rng, 8, 2)
    chain = [base]
    for _ in range(3):
        chain.append(intersect(chain[-1], _random_polytope(rng, 4, 2, radius=0.8)))
    for i in range(len(chain)):
        assert is_subset(chain[i], chain[i])
        for j in range(i, len(chain)):
            assert is_subset(chain[j], chain[i])


# ---- projection -------------------------------------------------------------------------

def test_project_examples():
    P = HPolytope([[0.0, 1.0], [0.0, -1.0], [1.0, 1.0], [-1.0, -1.0]], [1.0, 1.0, 1.0, 1.0])
    assert _same_set(project(P, [0]), BoxSet([-2.0], [2.0]))
    cube = BoxSet(np.zeros(3), np.ones(3))
    assert _same_set(project(cube, [0, 1]), BoxSet(np.zeros(2), np.ones(2)))


def test_project_keeps_requested_order():
    P = BoxSet([0.0, 1.0, 2.0], [1.0, 2.0, 3.0])
    assert _same_set(project(P, [2, 0]), BoxSet([2.0, 0.0], [3.0, 1.0]))


def _shadow_oracle(P, x_keep):
    """LP: does some x_drop put (x_keep, x_drop) in P (keep = first two coordinates)?"""
    F, f = P.normals, P.offsets
    st = solve_lp(LinearProgram(np.zeros(F.shape[1] - 2),
                                ineq=(F[:, 2:], f - F[:, :2] @ x_keep)))
    return st.optimal


def test_project_random_3d_matches_lp_oracle():
    rng = np.random.default_rng(7)
    F = rng.normal(size=(10, 3))
    F /= np.linalg.norm(F, axis=1, keepdims=True)
    P = HPolytope(F, rng.uniform(0.5, 1.5, 10))
    P = intersect(P, BoxSet.symmetric(2.0, 3))
    S = project(P, [0, 1])
    bb = bounding_box(S)
    g0 = np.linspace(bb.lower[0] - 0.2, bb.upper[0] + 0.2, 50)
    g1 = np.linspace(bb.lower[1] - 0.2, bb.upper[1] + 0.2, 50)
    disagreements = 0
    for a in g0:
        for b in g1:
            x = np.array([a, b])
            inside = contains(S, x, tol=1e-6)
            if inside != _shadow_oracle(P, x):
                # only points within tolerance of the boundary may differ
                if np.min(S.offsets - S.normals @ x) < -1e-6 or not inside:
                    disagreements += 1
    assert disagreements == 0


# ---- helpers ----------------------------------------------------------------------------

def test_chebyshev_and_bounding_box():
    c, r = chebyshev_center(BoxSet([0.0, 0.0], [2.0, 4.0]))
    assert r == pytest.approx(1.0)
    assert c[0] == pytest.approx(1.0)
    _, r = chebyshev_center(HPolytope.empty(2))
    assert r < 0
    bb = bounding_box(HPolytope([[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]], [0.0, 0.0, 1.0]))
    np.testing.assert_allclose(bb.upper, [1.0, 1.0])


def test_hit_and_run_is_deterministic_and_inside():
    P = _random_polytope(np.random.default_rng(8), 6, 2)
    a = sample_hit_and_run(P, 50, np.random.default_rng(9), burn_in=100)
    b = sample_hit_and_run(P, 50, np.random.default_rng(9), burn_in=100)
    np.testing.assert_array_equal(a, b)
    assert all(contains(P, x, tol=1e-9) for x in a)


# ---- property tests ---------------------------------------------------------------------

boxes = st.tuples(
    st.lists(st.floats(-5, 0), min_size=2, max_size=2),
    st.lists(st.floats(0.01, 5), min_size=2, max_size=2),
).map(lambda t: BoxSet(np.array(t[0]), np.array(t[0]) + np.array(t[1])))


@settings(max_examples=40, deadline=None)
@given(boxes, boxes)
def test_box_pontryagin_matches_interval_arithmetic(P, W):
    D = pontryagin_diff(P, W)
    lo, hi = P.lower - W.lower, P.upper - W.upper
    if np.any(lo > hi + 1e-12):
        assert is_empty(D)
    else:
        assert _same_set(D, BoxSet(lo, np.maximum(hi, lo)))


@settings(max_examples=40, deadline=None)
@given(boxes, boxes)
def test_intersection_is_subset_of_both(P, Q):
    R = intersect(P, Q)
    assert is_subset(R, P) and is_subset(R, Q)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_redundancy_removal_preserves_points(seed):
    rng = np.random.default_rng(seed)
    P = _random_polytope(rng, 8, 2)
    R = remove_redundancy(P)
    assert R.n_rows <= P.n_rows
    for x in rng.uniform(-3.5, 3.5, size=(200, 2)):
        margin = np.min(P.offsets - P.normals @ x)
        if abs(margin) > 1e-6:
            assert contains(P, x) == contains(R, x)
