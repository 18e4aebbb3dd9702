"""Pairwise Markov random fields and builders for the benchmark graphs."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .densities import DensityKernel, Gumbel, Laplace, Normal, TruncatedLaplace, mixture
from .exceptions import InvalidInputError, NotATreeError

# balanced 8-node tree, 1-based labels
DEFAULT_TREE_EDGES = ((1, 2), (1, 3), (2, 4), (2, 5), (3, 6), (3, 7), (4, 8))


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on nodes ``0..node_count-1``.

    ``shape`` is set for lattices built by :func:`build_grid` so that the
    sweep schedule can follow rows and columns.
    """

    node_count: int
    edges: tuple
    adjacency: tuple = field(init=False)
    shape: tuple | None = None

    def __post_init__(self):
        if self.node_count < 1:
            raise InvalidInputError("a graph needs at least one node")
        canon = []
        seen = set()
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise InvalidInputError(f"self-loop on node {u}")
            if not (0 <= u < self.node_count and 0 <= v < self.node_count):
                raise InvalidInputError(f"edge ({u}, {v}) references an unknown node")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise InvalidInputError(f"duplicate edge {key}")
            seen.add(key)
            canon.append(key)
        adj = [[] for _ in range(self.node_count)]
        for u, v in canon:
            adj[u].append(v)
            adj[v].append(u)
        object.__setattr__(self, "edges", tuple(canon))
        object.__setattr__(self, "adjacency", tuple(tuple(sorted(a)) for a in adj))

    def neighbors(self, u: int) -> tuple:
        return self.adjacency[u]

    @property
    def directed_edges(self) -> list:
        return [(u, v) for u in range(self.node_count) for v in self.adjacency[u]]

    def is_tree(self) -> bool:
        return len(self.edges) == self.node_count - 1 and self.is_connected()

    def is_connected(self) -> bool:
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v in self.adjacency[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == self.node_count

    def diameter(self) -> int:
        """Longest shortest-path length (BFS from every node)."""
        best = 0
        for s in range(self.node_count):
            dist = {s: 0}
            frontier = [s]
            while frontier:
                nxt = []
                for u in frontier:
                    for v in self.adjacency[u]:
                        if v not in dist:
                            dist[v] = dist[u] + 1
                            nxt.append(v)
                frontier = nxt
            best = max(best, max(dist.values()))
        return best


def build_grid(rows: int, cols: int) -> Graph:
    """4-connected lattice with row-major node ids."""
    if rows < 1 or cols < 1:
        raise InvalidInputError("grid dimensions must be >= 1")
    edges = []
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c
            if c + 1 < cols:
                edges.append((u, u + 1))
            if r + 1 < rows:
                edges.append((u, u + cols))
    return Graph(rows * cols, tuple(edges), shape=(rows, cols))


def build_tree(edge_list: Iterable[Sequence[int]], base: int = 0) -> Graph:
    """Validated tree from an edge list whose labels start at ``base``.

    Raises NotATreeError when the edges contain a cycle or leave the graph
    disconnected.
    """
    edges = [(int(u) - base, int(v) - base) for u, v in edge_list]
    if not edges:
        return Graph(1, ())
    labels = {x for e in edges for x in e}
    n = max(labels) + 1
    if min(labels) < 0 or labels != set(range(n)):
        raise NotATreeError("node labels must be contiguous starting at the base")
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for u, v in edges:
        ru, rv = find(u), find(v)
        if ru == rv:
            raise NotATreeError(f"edge ({u + base}, {v + base}) closes a cycle")
        parent[ru] = rv
    if len({find(a) for a in range(n)}) != 1:
        raise NotATreeError("edge list is disconnected")
    return Graph(n, tuple(edges))


@dataclass(frozen=True)
class PairwiseMRF:
    """Pairwise MRF whose potentials are translation-invariant kernels.

    Node potential: ``node_kernel(x_u - y_u)``; edge potential:
    ``edge_kernel(x_u - x_v)``.  Every edge kernel used here is symmetric,
    so the edge potential is symmetric in its arguments.
    """

    graph: Graph
    node_kernel: DensityKernel
    edge_kernel: DensityKernel
    observations: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.observations, dtype=float).reshape(-1)
        if y.size != self.graph.node_count:
            raise InvalidInputError(
                f"got {y.size} observations for {self.graph.node_count} nodes"
            )
        if not np.all(np.isfinite(y)):
            raise InvalidInputError("observations must be finite")
        y.setflags(write=False)
        object.__setattr__(self, "observations", y)

    @property
    def node_count(self) -> int:
        return self.graph.node_count

    def neighbors(self, u: int) -> tuple:
        return self.graph.adjacency[u]

    def log_node(self, u: int, x):
        return self.node_kernel._log_eval(np.asarray(x, dtype=float) - self.observations[u])

    def log_edge(self, xu, xv):
        return self.edge_kernel._log_eval(np.asarray(xu, dtype=float) - np.asarray(xv, dtype=float))

    def log_edge_diff(self, d):
        return self.edge_kernel._log_eval(d)


@dataclass(frozen=True)
class GridPotentials:
    """Bimodal skewed node potential with a Laplace coupling."""

    alpha: tuple = (0.6, 0.4)
    normal: tuple = (-2.0, 1.0)
    gumbel: tuple = (2.0, 1.3)
    edge_beta: float = 2.0

    def node_kernel(self):
        return mixture(self.alpha, [Normal(*self.normal), Gumbel(*self.gumbel)])

    def edge_kernel(self):
        return Laplace(0.0, self.edge_beta)


@dataclass(frozen=True)
class TreePotentials:
    alpha: tuple = (0.3, 0.7)
    normal1: tuple = (-2.0, 1.0)
    normal2: tuple = (1.0, 0.5)
    edge_beta: float = 1.0

    def node_kernel(self):
        return mixture(self.alpha, [Normal(*self.normal1), Normal(*self.normal2)])

    def edge_kernel(self):
        return Laplace(0.0, self.edge_beta)


@dataclass(frozen=True)
class DenoisePotentials:
    sigma: float = 0.1
    edge_beta: float = 0.03
    lam: float = 0.2

    def node_kernel(self):
        return Normal(0.0, self.sigma)

    def edge_kernel(self):
        return TruncatedLaplace(0.0, self.edge_beta, self.lam)


def make_mrf(graph: Graph, y, potentials) -> PairwiseMRF:
    return PairwiseMRF(graph, potentials.node_kernel(), potentials.edge_kernel(), y)


def make_grid_mrf(y, potentials: GridPotentials | None = None, shape=None) -> PairwiseMRF:
    """Grid MRF with the mixture-of-Normal-and-Gumbel node potential.

    ``shape`` defaults to the square grid matching ``len(y)``.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    if shape is None:
        side = int(round(np.sqrt(y.size)))
        if side * side != y.size:
            raise InvalidInputError("non-square observation count; pass shape=(rows, cols)")
        shape = (side, side)
    return make_mrf(build_grid(*shape), y, potentials or GridPotentials())


def make_tree_mrf(y, edges=DEFAULT_TREE_EDGES, base: int = 1,
                  potentials: TreePotentials | None = None) -> PairwiseMRF:
    return make_mrf(build_tree(edges, base=base), y, potentials or TreePotentials())


def make_denoise_mrf(noisy_image, potentials: DenoisePotentials | None = None) -> PairwiseMRF:
    """Grid MRF over the pixels of a 2-d array (row-major node ids)."""
    img = np.asarray(noisy_image, dtype=float)
    if img.ndim != 2:
        raise InvalidInputError("noisy image must be a 2-d array")
    return make_mrf(build_grid(*img.shape), img.reshape(-1), potentials or DenoisePotentials())
