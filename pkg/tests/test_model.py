import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epbp.densities import Normal
from epbp.exceptions import InvalidInputError, NotATreeError
from epbp.model import (
    DEFAULT_TREE_EDGES,
    GridPotentials,
    Graph,
    TreePotentials,
    build_grid,
    build_tree,
    make_denoise_mrf,
    make_grid_mrf,
    make_tree_mrf,
)


@pytest.mark.parametrize("rows,cols,nodes,edges", [(3, 3, 9, 12), (1, 1, 1, 0), (50, 50, 2500, 4900)])
def test_grid_sizes(rows, cols, nodes, edges):
    g = build_grid(rows, cols)
    assert (g.node_count, len(g.edges)) == (nodes, edges)


@given(st.integers(1, 60), st.integers(1, 60))
@settings(max_examples=40)
def test_grid_edge_formula(rows, cols):
    g = build_grid(rows, cols)
    assert len(g.edges) == rows * (cols - 1) + cols * (rows - 1)


def test_grid_row_major():
    g = build_grid(2, 3)
    assert g.neighbors(0) == (1, 3)
    assert g.neighbors(4) == (1, 3, 5)


def test_adjacency_involution():
    for g in (build_grid(4, 5), build_tree(DEFAULT_TREE_EDGES, base=1)):
        for u in range(g.node_count):
            for v in g.neighbors(u):
                assert u in g.neighbors(v)
                assert (min(u, v), max(u, v)) in g.edges


def test_chain_tree():
    g = build_tree([(1, 2), (2, 3)], base=1)
    assert g.node_count == 3 and len(g.edges) == 2
    assert max(len(g.neighbors(u)) for u in range(3)) == 2


def _union_find_acyclic(edges, n):
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            a = parent[a]
        return a

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra == rb:
            return False
        parent[ra] = rb
    return len({find(i) for i in range(n)}) == 1


def test_default_tree_union_find_oracle():
    g = build_tree(DEFAULT_TREE_EDGES, base=1)
    assert g.node_count == 8 and len(g.edges) == 7
    assert _union_find_acyclic(g.edges, g.node_count)
    assert g.is_tree() and g.diameter() == 5


@pytest.mark.parametrize("edges", [[(1, 2), (2, 3), (3, 1)], [(1, 2), (3, 4)]])
def test_not_a_tree(edges):
    with pytest.raises(NotATreeError):
        build_tree(edges, base=1)


def test_graph_rejects_self_loops_and_duplicates():
    with pytest.raises(InvalidInputError):
        Graph(2, ((0, 0),))
    with pytest.raises(InvalidInputError):
        Graph(2, ((0, 1), (1, 0)))


def test_grid_mrf_defaults():
    p = GridPotentials()
    assert p.alpha == (0.6, 0.4)
    mrf = make_grid_mrf(np.zeros(9))
    assert mrf.log_edge(1.3, 1.3) == 0.0


def test_grid_node_potential_matches_direct_mixture():
    y = np.linspace(-1, 1, 9)
    mrf = make_grid_mrf(y)
    x = 0.37
    d = x - y[4]
    direct = np.log(0.6 * np.exp(-0.5 * (d + 2) ** 2)
                    + 0.4 * np.exp(-((d - 2) / 1.3 + np.exp(-(d - 2) / 1.3))))
    assert mrf.log_node(4, x) == pytest.approx(direct, abs=1e-12)


def test_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        make_grid_mrf(np.zeros(9), shape=(2, 2))
    with pytest.raises(InvalidInputError):
        make_tree_mrf(np.zeros(5))
    with pytest.raises(InvalidInputError):
        make_grid_mrf(np.zeros(8))


def test_tree_mrf():
    assert TreePotentials().alpha == (0.3, 0.7)
    mrf = make_tree_mrf(np.zeros(8))
    assert mrf.log_edge(0.0, 1.0) == pytest.approx(-1.0)


def test_tree_node_potential_bimodal():
    y = 0.4
    mrf = make_tree_mrf(np.full(8, y))
    x = np.arange(-6, 6, 1e-3) + y
    v = mrf.log_node(0, x)
    peaks = x[1:-1][(v[1:-1] > v[:-2]) & (v[1:-1] > v[2:])]
    assert len(peaks) == 2
    assert peaks[0] == pytest.approx(y - 2, abs=0.05)
    assert peaks[1] == pytest.approx(y + 1, abs=0.05)


def test_denoise_mrf():
    mrf = make_denoise_mrf(np.full((50, 50), 0.5))
    assert mrf.node_count == 2500
    assert mrf.log_edge(0.0, 0.2) == pytest.approx(mrf.log_edge(0.0, 0.5))
    assert mrf.log_edge(0.0, 0.5) == pytest.approx(-0.2 / 0.03)
    assert mrf.log_node(17, 0.5) == 0.0


def test_denoise_mrf_requires_2d():
    with pytest.raises(InvalidInputError):
        make_denoise_mrf(np.zeros(4))


def test_edge_symmetry(rng):
    a, b = rng.normal(0, 5, 10 ** 4), rng.normal(0, 5, 10 ** 4)
    for mrf in (make_grid_mrf(np.zeros(9)), make_tree_mrf(np.zeros(8)),
                make_denoise_mrf(np.zeros((2, 2)))):
        np.testing.assert_array_equal(mrf.log_edge(a, b), mrf.log_edge(b, a))


def test_observations_read_only():
    mrf = make_grid_mrf(np.zeros(9))
    with pytest.raises(ValueError):
        mrf.observations[0] = 1.0


def test_custom_potentials():
    mrf = make_grid_mrf(np.zeros(4), GridPotentials(edge_beta=0.5))
    assert mrf.log_edge(0.0, 1.0) == pytest.approx(-2.0)
    assert isinstance(make_tree_mrf(np.zeros(8)).node_kernel.components[0], Normal)
