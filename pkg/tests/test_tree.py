import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from membrane_tree.tree import (
    TreeParams,
    ball_size,
    boundary_distance,
    build_tree,
    counting_constant,
    distance_class_counts,
    graph_distance,
    log_floor,
    separated_leaf_set,
)

small_trees = st.tuples(st.integers(3, 6), st.integers(0, 4))


def test_rejects_small_m():
    with pytest.raises(ValueError):
        TreeParams(2, 3)
    with pytest.raises(ValueError):
        TreeParams(3, -1)


def test_overflow_rejected():
    with pytest.raises(OverflowError):
        build_tree(TreeParams(25, 8), max_vertices=10**6)


def test_single_vertex():
    t = build_tree(TreeParams(3, 0))
    assert t.vertex_count == 1 and t.root == 0 and t.neighbors(0) == []


@pytest.mark.parametrize("m,n,N", [(3, 2, 10), (4, 3, 53)])
def test_ball_sizes(m, n, N):
    t = build_tree(TreeParams(m, n))
    assert t.vertex_count == N == ball_size(m, n)
    assert len(oracles.paths(m, n)) == N


@given(small_trees)
@settings(max_examples=40, deadline=None)
def test_structure_invariants(mn):
    m, n = mn
    t = build_tree(TreeParams(m, n))
    assert t.vertex_count == (m * (m - 1) ** n - 2) // (m - 2)
    assert t.depth.max() == n
    for v in range(t.vertex_count):
        kids = list(t.children(v))
        if t.depth[v] == n:
            assert kids == []
        else:
            assert len(kids) == (m if v == 0 else m - 1)
        # BFS order: children come after the parent, depths are sorted
        assert all(k > v and t.parent[k] == v for k in kids)
    assert np.all(np.diff(t.depth) >= 0)


@given(small_trees)
@settings(max_examples=25, deadline=None)
def test_bfs_order_matches_path_enumeration(mn):
    m, n = mn
    t = build_tree(TreeParams(m, n))
    D = oracles.distance_matrix(m, n)
    assert np.array_equal(t.distance_matrix(), D)


def test_distance_examples():
    t = build_tree(TreeParams(3, 2))
    assert graph_distance(t, 0, 0) == 0
    assert graph_distance(t, 0, 1) == 1
    leaf_a = t.children(1)[0]
    leaf_b = t.children(2)[0]
    assert graph_distance(t, leaf_a, leaf_b) == 4
    with pytest.raises(IndexError):
        graph_distance(t, 0, 10)


@given(st.integers(3, 5), st.integers(1, 5), st.data())
@settings(max_examples=40, deadline=None)
def test_distance_is_a_metric(m, n, data):
    t = build_tree(TreeParams(m, n))
    v = st.integers(0, t.vertex_count - 1)
    x, y, z = data.draw(v), data.draw(v), data.draw(v)
    dxy = graph_distance(t, x, y)
    assert dxy == graph_distance(t, y, x)
    assert (dxy == 0) == (x == y)
    assert graph_distance(t, x, z) <= dxy + graph_distance(t, y, z)


@pytest.mark.parametrize("n,depth,expected", [(5, 0, 6), (5, 5, 1), (3, 2, 2)])
def test_boundary_distance_examples(n, depth, expected):
    t = build_tree(TreeParams(3, n))
    x = t.generation(depth).start
    assert boundary_distance(t, x) == expected


@given(small_trees)
@settings(max_examples=20, deadline=None)
def test_boundary_distance_matches_extended_tree(mn):
    m, n = mn
    t = build_tree(TreeParams(m, n))
    D = oracles.distance_matrix(m, n + 1)
    N = t.vertex_count
    brute = D[:N, N:].min(axis=1)
    assert all(boundary_distance(t, x) == brute[x] for x in range(N))


@pytest.mark.parametrize("m,n,expected", [(3, 1, [4, 6, 6]), (3, 0, [1])])
def test_class_count_examples(m, n, expected):
    assert distance_class_counts(TreeParams(m, n)).counts.tolist() == expected


def test_class_count_edges_m3_n2():
    assert distance_class_counts(TreeParams(3, 2)).counts[1] == 18


@given(small_trees)
@settings(max_examples=30, deadline=None)
def test_class_counts_match_brute_force(mn):
    m, n = mn
    if ball_size(m, n) > 400:
        return
    tab = distance_class_counts(TreeParams(m, n))
    assert np.array_equal(tab.counts, oracles.class_counts(m, n))


@given(st.integers(3, 7), st.integers(0, 12))
@settings(max_examples=60, deadline=None)
def test_class_count_invariants(m, n):
    tab = distance_class_counts(TreeParams(m, n))
    N = ball_size(m, n)
    C = [int(c) for c in tab.counts]
    assert len(C) == 2 * n + 1
    assert sum(C) == N * N and C[0] == N
    assert all(c % 2 == 0 for c in C[1:])


@given(st.integers(3, 6), st.integers(1, 9))
@settings(max_examples=40, deadline=None)
def test_proof_summation_matches_counts(m, n):
    tab = distance_class_counts(TreeParams(m, n))
    for k in range(1, n + 1):
        assert int(tab.proof_sum[k]) == int(tab.counts[k])


@pytest.mark.parametrize("m", [3, 4, 5])
def test_count_shape_constant_uniform_in_n(m):
    sup = [distance_class_counts(TreeParams(m, n)).shape_ratio().max() for n in range(1, 11)]
    assert max(sup) <= counting_constant(m)
    # the ratio settles: the last few values agree to 1%
    assert abs(sup[-1] - sup[-3]) <= 0.01 * sup[-1]


def test_log_floor_is_natural():
    assert log_floor(8) == 2 and log_floor(20) == 2 and log_floor(21) == 3


def test_separated_set_m3_n8():
    t = build_tree(TreeParams(3, 8))
    U = separated_leaf_set(t)
    assert len(U) == 3 * 2 ** (8 - 4 - 1) == 24
    assert set(t.depth[U]) == {8 - 2}
    D = t.distance_matrix()[np.ix_(U, U)]
    assert D[~np.eye(len(U), dtype=bool)].min() >= 4


def test_separated_set_m4_depth():
    t = build_tree(TreeParams(4, 8))
    assert set(t.depth[separated_leaf_set(t)]) == {6}


def test_separated_set_needs_large_n():
    with pytest.raises(ValueError):
        separated_leaf_set(build_tree(TreeParams(3, 2)))


@given(st.integers(3, 5), st.integers(3, 9))
@settings(max_examples=20, deadline=None)
def test_separated_set_size_and_spacing(m, n):
    L = int(math.floor(math.log(n)))
    if n - 2 * L < 1 or ball_size(m, n) > 4000:
        return
    t = build_tree(TreeParams(m, n))
    U = separated_leaf_set(t)
    assert len(U) == m * (m - 1) ** (n - 2 * L - 1)
    D = t.distance_matrix()[np.ix_(U, U)]
    if len(U) > 1:
        assert D[~np.eye(len(U), dtype=bool)].min() >= 2 * L
