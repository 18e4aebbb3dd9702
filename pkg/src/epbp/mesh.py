"""Ground truth on a fixed mesh: discretized LBP and exact marginalization."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.special import logsumexp

from .exceptions import InvalidInputError, MeshMismatchError, NumericalFailureError, UnsupportedGraphError

DEFAULT_MESH_POINTS = 200
DEFAULT_MESH_MARGIN = 10.0


@dataclass(frozen=True)
class Mesh:
    lo: float
    hi: float
    n_points: int = DEFAULT_MESH_POINTS

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi) and self.lo < self.hi):
            raise InvalidInputError(f"invalid mesh range [{self.lo}, {self.hi}]")
        if self.n_points < 2:
            raise InvalidInputError("a mesh needs at least 2 points")

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n_points)

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.n_points - 1)

    def normalize_log(self, log_values: np.ndarray) -> np.ndarray:
        """Densities on the mesh from unnormalized logs, rows summing to 1/spacing."""
        log_values = np.asarray(log_values, dtype=float)
        top = log_values.max(axis=-1, keepdims=True)
        vals = np.exp(log_values - top)
        return vals / (vals.sum(axis=-1, keepdims=True) * self.spacing)


def default_mesh(observations, n_points: int = DEFAULT_MESH_POINTS,
                 margin: float = DEFAULT_MESH_MARGIN) -> Mesh:
    y = np.asarray(observations, dtype=float)
    if y.size == 0:
        raise InvalidInputError("need at least one observation")
    return Mesh(float(y.min()) - margin, float(y.max()) + margin, n_points)


@dataclass(frozen=True)
class MeshBelief:
    node: int
    values: np.ndarray


@dataclass
class MeshBeliefs:
    """Per-node normalized densities on a shared mesh, shape (n_nodes, K)."""

    mesh: Mesh
    values: np.ndarray

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, u) -> MeshBelief:
        return MeshBelief(u, self.values[u])

    def __iter__(self):
        return (self[u] for u in range(len(self)))

    @classmethod
    def from_log(cls, mesh: Mesh, log_values) -> "MeshBeliefs":
        return cls(mesh, mesh.normalize_log(np.atleast_2d(log_values)))

    def to_csv(self, path) -> None:
        write_beliefs_csv(self, path)


def write_beliefs_csv(beliefs: MeshBeliefs, path) -> None:
    x = beliefs.mesh.points
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["node", "x", "density"])
        for u, row in enumerate(beliefs.values):
            for xk, d in zip(x, row):
                out.writerow([u, repr(float(xk)), repr(float(d))])


def _log_node_table(mrf, x):
    return np.stack([mrf.log_node(u, x) for u in range(mrf.node_count)])


def _edge_table(mrf, x):
    # entry [k, j] = log psi(x_k - x_j)
    return mrf.log_edge_diff(x[:, None] - x[None, :])


def _convolve(edge_exp, edge_log, log_pre, log_dx):
    """log of sum_k psi(x_k, x_j) exp(log_pre[k]) dx for every j."""
    top = log_pre.max()
    with np.errstate(divide="ignore", under="ignore"):
        out = np.log(np.exp(log_pre - top) @ edge_exp) + top + log_dx
    bad = ~np.isfinite(out)
    if bad.any():
        out[bad] = logsumexp(edge_log[:, bad] + log_pre[:, None], axis=0) + log_dx
    return out


class MeshLBP:
    """Loopy BP with messages tabulated on a mesh.

    Messages are initialized uniform and renormalized after every update so
    that ``sum(m) * dx == 1``.
    """

    def __init__(self, mrf, mesh: Mesh):
        self.mrf = mrf
        self.mesh = mesh
        x = mesh.points
        self.log_dx = np.log(mesh.spacing)
        self.log_node = _log_node_table(mrf, x)
        self.edge_log = _edge_table(mrf, x)
        self.edge_exp = np.exp(self.edge_log)
        uniform = np.full(mesh.n_points, -np.log(mesh.spacing * mesh.n_points))
        self.log_msg = {e: uniform.copy() for e in mrf.graph.directed_edges}
        self.iteration = 0

    def incoming_sum(self, u):
        total = self.log_node[u].copy()
        for w in self.mrf.neighbors(u):
            total += self.log_msg[(w, u)]
        return total

    def update_node(self, u: int) -> None:
        total = self.incoming_sum(u)
        for v in self.mrf.neighbors(u):
            pre = total - self.log_msg[(v, u)]
            m = _convolve(self.edge_exp, self.edge_log, pre, self.log_dx)
            m -= logsumexp(m) + self.log_dx
            if not np.all(np.isfinite(m)):
                raise NumericalFailureError(
                    f"non-finite mesh message {u}->{v} at iteration {self.iteration}"
                )
            self.log_msg[(u, v)] = m

    def sweep(self, order) -> None:
        for u in order:
            self.update_node(u)
        self.iteration += 1

    def beliefs(self) -> MeshBeliefs:
        logs = np.stack([self.incoming_sum(u) for u in range(self.mrf.node_count)])
        return MeshBeliefs.from_log(self.mesh, logs)


def run_mesh_lbp(mrf, mesh: Mesh, iterations: int = 20, schedule=None) -> MeshBeliefs:
    """Mesh LBP truth after ``iterations`` full sweeps."""
    from .schedule import Schedule

    if iterations < 1:
        raise InvalidInputError("iterations must be >= 1")
    schedule = schedule or Schedule.for_graph(mrf.graph)
    lbp = MeshLBP(mrf, mesh)
    for it in range(iterations):
        lbp.sweep(schedule.sweep(it))
    return lbp.beliefs()


def brute_force_marginals(mrf, mesh: Mesh, method: str = "auto") -> MeshBeliefs:
    """Exact mesh marginals by tree elimination or exhaustive summation.

    ``method`` is "tree", "exhaustive" (at most 3 nodes) or "auto".
    """
    g = mrf.graph
    if method == "auto":
        method = "tree" if g.is_tree() else "exhaustive"
    if method == "exhaustive":
        if g.node_count > 3:
            raise UnsupportedGraphError("exhaustive marginals support at most 3 nodes")
        return _exhaustive(mrf, mesh)
    if method == "tree":
        if not g.is_tree():
            raise UnsupportedGraphError("tree elimination needs a tree")
        return _tree_elimination(mrf, mesh)
    raise InvalidInputError(f"unknown method {method!r}")


def _exhaustive(mrf, mesh):
    x = mesh.points
    n, k = mrf.node_count, mesh.n_points
    node = _log_node_table(mrf, x)
    edge = _edge_table(mrf, x)
    joint = np.zeros((k,) * n)
    for u in range(n):
        shape = [1] * n
        shape[u] = k
        joint = joint + node[u].reshape(shape)
    for u, v in mrf.graph.edges:
        shape = [1] * n
        shape[u] = k
        shape[v] = k
        joint = joint + edge.reshape(shape)
    logs = []
    for u in range(n):
        axes = tuple(a for a in range(n) if a != u)
        logs.append(logsumexp(joint, axis=axes) if axes else joint)
    return MeshBeliefs.from_log(mesh, np.stack(logs))


def _tree_elimination(mrf, mesh):
    """Collect to node 0 then distribute, summing out one leaf at a time."""
    x = mesh.points
    g = mrf.graph
    node = _log_node_table(mrf, x)
    edge = _edge_table(mrf, x)
    parent = {0: None}
    order = [0]
    for u in order:
        for v in g.neighbors(u):
            if v not in parent:
                parent[v] = u
                order.append(v)
    up = {}
    for u in reversed(order):
        if parent[u] is None:
            continue
        local = node[u] + sum((up[c] for c in g.neighbors(u) if parent.get(c) == u), 0.0)
        up[u] = logsumexp(edge + local[:, None], axis=0)
    down = {}
    for u in order:
        children = [c for c in g.neighbors(u) if parent.get(c) == u]
        base = node[u] + (down[u] if u in down else 0.0)
        for c in children:
            others = sum((up[d] for d in children if d != c), 0.0)
            down[c] = logsumexp(edge + (base + others)[:, None], axis=0)
    logs = []
    for u in range(g.node_count):
        total = node[u] + (down[u] if u in down else 0.0)
        for c in g.neighbors(u):
            if parent.get(c) == u:
                total = total + up[c]
        logs.append(total)
    return MeshBeliefs.from_log(mesh, np.stack(logs))


def check_same_mesh(a: MeshBeliefs, b: MeshBeliefs) -> None:
    if a.mesh != b.mesh or a.values.shape != b.values.shape:
        raise MeshMismatchError("beliefs live on different meshes or node sets")


def l1_error(estimate: MeshBeliefs, truth: MeshBeliefs) -> float:
    """Mean over nodes of the mesh L1 distance between normalized beliefs."""
    check_same_mesh(estimate, truth)
    per_node = np.abs(estimate.values - truth.values).sum(axis=1) * truth.mesh.spacing
    return float(per_node.mean())
