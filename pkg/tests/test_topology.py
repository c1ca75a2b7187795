import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hebbcontract.errors import DimensionMismatch, DuplicateEdge, IndexOutOfRange, ZeroCoefficient
from hebbcontract.topology import (
    apply_weighted,
    build_topology,
    from_adjacency,
    gather_post,
    gather_pre,
    max_in_degree,
    reconstruct_adjacency,
)

from helpers import FEEDFORWARD_EDGES, FEEDFORWARD_H, random_topology


@pytest.fixture
def ff():
    return build_topology(6, FEEDFORWARD_EDGES, FEEDFORWARD_H)


# printed incidence matrices of the six-neuron network (rows = neurons, columns = edges)
B_IN = np.array([
    [0, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 0, 0],
    [0, 0, 1, 0, 0, 0],
    [1, 0, 0, 0, 0, 0],
    [0, 0, 0, 1, 0, 1],
    [0, 1, 0, 0, 1, 0],
])
B_OUT = np.array([
    [1, 1, 0, 0, 0, 0],
    [0, 0, 1, 1, 0, 0],
    [0, 0, 0, 0, 1, 0],
    [0, 0, 0, 0, 0, 1],
    [0, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 0, 0],
])


def test_incidence_matches_printed_matrices(ff):
    np.testing.assert_array_equal(ff.dense_b_in(), B_IN)
    np.testing.assert_array_equal(ff.dense_b_out(), B_OUT)
    np.testing.assert_array_equal(ff.dense_b_in()[4], [0, 0, 0, 1, 0, 1])
    np.testing.assert_array_equal(ff.dense_b_out()[0], [1, 1, 0, 0, 0, 0])


def test_unit_column_sums(ff):
    np.testing.assert_array_equal(ff.dense_b_in().sum(axis=0), np.ones(6))
    np.testing.assert_array_equal(ff.dense_b_out().sum(axis=0), np.ones(6))
    assert np.abs(ff.dense_b_in().T).sum(axis=1).max() == 1
    assert np.abs(ff.dense_b_out().T).sum(axis=1).max() == 1


def test_empty_graph():
    t = build_topology(1, [], [])
    assert t.m == 0 and t.n == 1
    assert gather_pre(t, [3.0]).shape == (0,)
    assert max_in_degree(t) == 0
    np.testing.assert_array_equal(reconstruct_adjacency(t, []), np.zeros((1, 1)))


@pytest.mark.parametrize(
    "n, edges, h, exc, fragment",
    [
        (2, [(1, 2), (1, 2)], [1, 1], DuplicateEdge, "e2"),
        (2, [(1, 3)], [1], IndexOutOfRange, "e1"),
        (2, [(0, 1)], [1], IndexOutOfRange, "e1"),
        (3, [(1, 2), (2, 3)], [1, 0], ZeroCoefficient, "e2"),
    ],
)
def test_validation_names_edge(n, edges, h, exc, fragment):
    with pytest.raises(exc, match=fragment):
        build_topology(n, edges, h)


def test_length_mismatch():
    with pytest.raises(DimensionMismatch):
        build_topology(2, [(1, 2)], [1, 2])


def test_gather_examples(ff):
    x = np.arange(1.0, 7.0)
    assert gather_pre(ff, x)[2] == x[1]  # e3 leaves neuron 2
    assert gather_post(ff, x)[0] == x[3]  # e1 enters neuron 4
    np.testing.assert_array_equal(gather_post(ff, np.full(6, 2.5)), np.full(6, 2.5))
    with pytest.raises(DimensionMismatch):
        gather_pre(ff, np.ones(5))


def test_apply_weighted_examples(ff):
    np.testing.assert_array_equal(apply_weighted(ff, np.zeros(6), np.ones(6)), np.zeros(6))
    np.testing.assert_array_equal(apply_weighted(ff, np.ones(6), np.ones(6)), [0, 0, 1, 1, 2, 2])
    with pytest.raises(DimensionMismatch):
        apply_weighted(ff, np.ones(5), np.ones(6))


def test_reconstruct_placement(ff):
    w = np.arange(1.0, 7.0)
    W = reconstruct_adjacency(ff, w)
    expected = np.zeros((6, 6))
    for (i, j), v in zip([(4, 1), (6, 1), (3, 2), (5, 2), (6, 3), (5, 4)], w):
        expected[i - 1, j - 1] = v
    np.testing.assert_array_equal(W, expected)
    back = from_adjacency(W)
    assert sorted(zip(back.edges, back.h)) == sorted(zip(ff.edges, w))


def test_max_in_degree(ff):
    assert max_in_degree(ff) == 2
    recurrent = build_topology(
        6, FEEDFORWARD_EDGES + [(1, 6), (2, 5), (3, 5)], FEEDFORWARD_H + [-1, 1, 1]
    )
    assert recurrent.m == 9
    assert max_in_degree(recurrent) == 2


def test_topology_is_immutable(ff):
    with pytest.raises(ValueError):
        ff.h[0] = 5.0
    with pytest.raises(Exception):
        ff.n = 3


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 8), data=st.data())
def test_gather_and_apply_match_edge_loop(n, data):
    m = data.draw(st.integers(0, min(20, n * n)))
    seed = data.draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    topo = random_topology(rng, n, m)
    x = rng.normal(size=n)
    w = rng.normal(size=m)
    pre_loop = np.array([x[j - 1] for (_, j) in topo.edges])
    post_loop = np.array([x[i - 1] for (i, _) in topo.edges])
    np.testing.assert_array_equal(gather_pre(topo, x), pre_loop.reshape(-1))
    np.testing.assert_array_equal(gather_post(topo, x), post_loop.reshape(-1))

    # edge-ordered accumulation: same order as the documented scatter
    loop = np.zeros(n)
    for e, (i, j) in enumerate(topo.edges):
        loop[i - 1] += w[e] * x[j - 1]
    np.testing.assert_array_equal(apply_weighted(topo, w, x), loop)
    dense = reconstruct_adjacency(topo, w) @ x
    np.testing.assert_allclose(apply_weighted(topo, w, x), dense, rtol=1e-12, atol=1e-14)
    assert max_in_degree(topo) == (max((sum(1 for i, _ in topo.edges if i == k) for k in range(1, n + 1))) if m else 0)


def test_batched_operations(ff):
    rng = np.random.default_rng(3)
    X = rng.normal(size=(4, 6))
    Wt = rng.normal(size=(4, 6))
    out = apply_weighted(ff, Wt, X)
    for b in range(4):
        np.testing.assert_array_equal(out[b], apply_weighted(ff, Wt[b], X[b]))
    empty = build_topology(3, [], [])
    np.testing.assert_array_equal(apply_weighted(empty, np.zeros((4, 0)), X[:, :3]), np.zeros((4, 3)))
