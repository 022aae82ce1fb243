import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from censored_areal.errors import ConfigError, IsolatedRegion, ParseError
from censored_areal.graph import (Ordering, SpatialGraph, adjacency_matrix, directed_neighbors, grid_graph,
                                  path_graph, random_connected_graph, read_edge_list, row_stochastic,
                                  write_edge_list)


@pytest.mark.parametrize("side,n,edges", [(1, 1, 0), (3, 9, 12), (5, 25, 40)])
def test_grid_counts(side, n, edges):
    g = grid_graph(side)
    assert g.n == n and g.n_edges == edges == 2 * side * (side - 1)


def test_adjacency_small_paths():
    np.testing.assert_array_equal(adjacency_matrix(path_graph(2)), [[0, 1], [1, 0]])
    A = adjacency_matrix(path_graph(3))
    assert A[0, 2] == 0 and A[0, 1] == A[1, 2] == 1


def test_grid_row_sums():
    np.testing.assert_array_equal(adjacency_matrix(grid_graph(3)).sum(axis=1), [2, 3, 2, 3, 4, 3, 2, 3, 2])


def test_row_stochastic():
    np.testing.assert_array_equal(row_stochastic(adjacency_matrix(path_graph(2))), [[0, 1], [1, 0]])
    np.testing.assert_allclose(row_stochastic(adjacency_matrix(path_graph(3)))[1], [0.5, 0, 0.5])
    with pytest.raises(IsolatedRegion):
        row_stochastic(adjacency_matrix(SpatialGraph(3, ((0, 1),))))


def test_directed_neighbors_examples():
    assert directed_neighbors(path_graph(2)).parents == ((), (0,))
    np.testing.assert_array_equal(directed_neighbors(path_graph(3)).sizes, [0, 1, 1])
    assert directed_neighbors(grid_graph(3)).sizes.sum() == 12


def test_ordering_changes_parents():
    nb = directed_neighbors(path_graph(3), Ordering((2, 1, 0)))
    assert nb.parents == ((1,), (2,), ())


def test_graph_validation():
    with pytest.raises(ConfigError):
        SpatialGraph(2, ((0, 0),))
    with pytest.raises(ConfigError):
        SpatialGraph(2, ((0, 2),))
    with pytest.raises(ConfigError):
        SpatialGraph(2, ((0, 1),), ("a", "a"))
    with pytest.raises(ConfigError):
        Ordering((0, 0, 1))


def test_edge_list_round_trip(tmp_path):
    g = SpatialGraph(3, ((0, 1), (1, 2)), ("a", "b", "c"))
    p = tmp_path / "g.txt"
    write_edge_list(g, p)
    assert read_edge_list(p) == g


def test_edge_list_parse_errors(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("1 2\n2 x\n")
    with pytest.raises(ParseError) as err:
        read_edge_list(p)
    assert err.value.line == 2
    p.write_text("0 1\n")
    with pytest.raises(ParseError):
        read_edge_list(p)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 10_000), prob=st.floats(0, 1))
def test_random_graph_connected_and_handshake(n, seed, prob):
    g = random_connected_graph(n, np.random.default_rng(seed), prob)
    assert g.is_connected()
    nb = directed_neighbors(g, Ordering(tuple(np.random.default_rng(seed + 1).permutation(n))))
    assert nb.sizes.sum() == g.n_edges
    A = adjacency_matrix(g)
    assert np.array_equal(A, A.T) and A.sum() == 2 * g.n_edges
