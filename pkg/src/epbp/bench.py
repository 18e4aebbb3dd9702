"""Experiment configuration, accuracy and convergence benchmarks, denoising."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import EPBPError, InvalidInputError
from .imageio import GrayImage
from .mesh import Mesh, MeshBeliefs, default_mesh, l1_error, run_mesh_lbp
from .model import (
    DEFAULT_TREE_EDGES,
    GridPotentials,
    TreePotentials,
    make_denoise_mrf,
    make_grid_mrf,
    make_tree_mrf,
)
from .samplers import DEFAULT_SUBQUAD_MAP, EPBP, PBP, PureEP
from .validation import check_positive_int

__all__ = [
    "CSV_HEADER", "METHODS", "ExperimentConfig", "BenchResult", "Denoiser",
    "generate_observations", "load_config", "config_hash", "build_mrf", "build_mesh",
    "make_estimator", "run_accuracy_bench", "run_iteration_trace", "write_csv",
    "write_meta", "format_row", "CsvSink", "denoise", "synthetic_image", "add_noise", "l1_error",
]

log = logging.getLogger(__name__)

CSV_HEADER = ("method", "N", "M", "seed", "iteration", "mean_l1", "wall_ms")
# "epbp-subquad" takes M from the subquad map; M = 0 in the CSV means full sums
METHODS = ("epbp", "epbp-subquad", "pbp", "pbp-after-ep", "ep")
OBSERVATION_SCALE = 2.0


def generate_observations(node_count: int, seed: int = 0, values=None) -> np.ndarray:
    """Per-node observations, i.i.d. Normal(0, 2^2) from ``seed``.

    An explicit ``values`` list is returned as is (after a length check) and
    never touches a random stream.
    """
    node_count = check_positive_int(node_count, "node_count")
    if values is not None:
        y = np.asarray(values, dtype=float).reshape(-1)
        if y.size != node_count or not np.all(np.isfinite(y)):
            raise InvalidInputError(f"expected {node_count} finite observations, got {y.size}")
        return y
    return np.random.default_rng(seed).normal(0.0, OBSERVATION_SCALE, node_count)


@dataclass
class ExperimentConfig:
    """Everything a benchmark run depends on.

    ``graph`` is ``{"type": "grid", "rows": r, "cols": c}`` or
    ``{"type": "tree", "edges": [[a, b], ...], "base": 1}``; ``potentials``
    overrides fields of the family defaults for that graph type;
    ``observations`` is ``{"seed": s}`` or ``{"values": [...]}``.  Run seeds
    are ``seed, seed + 1, ..., seed + n_seeds - 1``.
    """

    graph: dict = field(default_factory=lambda: {"type": "grid", "rows": 3, "cols": 3})
    potentials: dict = field(default_factory=dict)
    observations: dict = field(default_factory=lambda: {"seed": 0})
    methods: list = field(default_factory=lambda: ["epbp", "pbp"])
    n_list: list = field(default_factory=lambda: [10, 20, 50, 100, 200, 500])
    subquad_map: dict = field(default_factory=lambda: dict(DEFAULT_SUBQUAD_MAP))
    iterations: int = 20
    truth_iterations: int = 20
    seed: int = 0
    n_seeds: int = 5
    trace_n: int = 30
    prop_std: float = 1.0
    mesh_points: int = 200
    mesh_range: list | None = None
    out: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.methods:
            raise InvalidInputError("method list is empty")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise InvalidInputError(f"unknown methods {unknown}; choose from {list(METHODS)}")
        if not self.n_list:
            raise InvalidInputError("N list is empty")
        for n in self.n_list:
            check_positive_int(n, "N")
        self.subquad_map = {int(k): int(v) for k, v in self.subquad_map.items()}
        for n, m in self.subquad_map.items():
            check_positive_int(m, f"M for N={n}")
        check_positive_int(self.iterations, "iterations")
        check_positive_int(self.truth_iterations, "truth_iterations")
        check_positive_int(self.n_seeds, "n_seeds")
        check_positive_int(self.trace_n, "trace_n")
        check_positive_int(self.mesh_points, "mesh_points")
        if "epbp-subquad" in self.methods:
            missing = [n for n in self.n_list if n not in self.subquad_map]
            if missing:
                raise InvalidInputError(f"no subquad M for N in {missing}")
        if self.graph.get("type") not in ("grid", "tree"):
            raise InvalidInputError(f"unknown graph type {self.graph.get('type')!r}")
        if self.mesh_range is not None and len(self.mesh_range) != 2:
            raise InvalidInputError("mesh_range needs two values")

    @property
    def seeds(self) -> list:
        return list(range(self.seed, self.seed + self.n_seeds))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})


def load_config(path) -> ExperimentConfig:
    """Read a YAML config; unknown keys are rejected."""
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise InvalidInputError("config file must hold a mapping")
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    extra = sorted(set(raw) - names)
    if extra:
        raise InvalidInputError(f"unknown config keys: {extra}")
    return ExperimentConfig(**raw)


def config_hash(config: ExperimentConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _node_count(graph: dict) -> int:
    if graph["type"] == "grid":
        return int(graph.get("rows", 3)) * int(graph.get("cols", 3))
    edges = graph.get("edges", DEFAULT_TREE_EDGES)
    return len(edges) + 1


def build_mrf(config: ExperimentConfig):
    g = config.graph
    y = generate_observations(_node_count(g), config.observations.get("seed", 0),
                              config.observations.get("values"))
    params = {k: tuple(v) if isinstance(v, list) else v for k, v in config.potentials.items()}
    if g["type"] == "grid":
        return make_grid_mrf(y, GridPotentials(**params),
                             shape=(int(g.get("rows", 3)), int(g.get("cols", 3))))
    return make_tree_mrf(y, g.get("edges", DEFAULT_TREE_EDGES), int(g.get("base", 1)),
                         TreePotentials(**params))


def build_mesh(config: ExperimentConfig, mrf) -> Mesh:
    if config.mesh_range is not None:
        lo, hi = config.mesh_range
        return Mesh(float(lo), float(hi), config.mesh_points)
    return default_mesh(mrf.observations, config.mesh_points)


def make_estimator(method: str, n: int, seed: int, config: ExperimentConfig, ep_factors=None):
    it = config.iterations
    if method == "epbp":
        return EPBP(n_particles=n, n_iterations=it, random_state=seed)
    if method == "epbp-subquad":
        return EPBP(n_particles=n, n_iterations=it, subquad_m=config.subquad_map[n],
                    random_state=seed)
    if method == "pbp":
        return PBP(n_particles=n, n_iterations=it, prop_std=config.prop_std, random_state=seed)
    if method == "pbp-after-ep":
        return PBP(n_particles=n, n_iterations=it, proposal="fixed-ep",
                   ep_proposals=ep_factors, random_state=seed)
    if method == "ep":
        return PureEP(n_iterations=it)
    raise InvalidInputError(f"unknown method {method!r}")


@dataclass
class BenchResult:
    rows: list
    failures: list
    truth: MeshBeliefs | None = None

    @property
    def ok(self) -> bool:
        return not self.failures


def _row(method, n, m, seed, iteration, err, wall_s):
    return {"method": method, "N": n, "M": m, "seed": seed, "iteration": iteration,
            "mean_l1": err, "wall_ms": wall_s * 1e3}


class _Context:
    """Truth and shared EP proposals, computed once per benchmark."""

    def __init__(self, config):
        self.config = config
        self.mrf = build_mrf(config)
        self.mesh = build_mesh(config, self.mrf)
        self.truth = run_mesh_lbp(self.mrf, self.mesh, config.truth_iterations)
        self._ep = None

    def ep_factors(self):
        if self._ep is None:
            ep = PureEP(n_iterations=self.config.iterations).fit(self.mrf, self.mesh)
            self._ep = ep.belief_factors_
        return self._ep

    def cells(self, methods, n_list):
        for method in methods:
            # pure EP has no particles and no randomness: one cell
            if method == "ep":
                yield method, 0, 0, 0
                continue
            for n in n_list:
                m = self.config.subquad_map[n] if method == "epbp-subquad" else 0
                for seed in self.config.seeds:
                    yield method, n, m, seed

    def estimator(self, method, n, seed):
        ep = self.ep_factors() if method == "pbp-after-ep" else None
        return make_estimator(method, max(n, 1), seed, self.config, ep)


def _run_cells(config, body, n_list, sink):
    ctx = _Context(config)
    rows, failures = [], []
    for method, n, m, seed in ctx.cells(config.methods, n_list):
        try:
            new = body(ctx, method, n, m, seed)
        except (EPBPError, ArithmeticError, ValueError) as exc:
            log.error("%s N=%d seed=%d failed: %s", method, n, seed, exc)
            failures.append({"method": method, "N": n, "seed": seed, "error": repr(exc)})
            continue
        for r in new:
            rows.append(r)
            if sink is not None:
                sink(r)
    return BenchResult(rows, failures, ctx.truth)


def run_accuracy_bench(config: ExperimentConfig, sink=None) -> BenchResult:
    """One row per (method, N, seed): final mean L1 against the mesh truth.

    ``wall_ms`` times ``fit`` only.  A failing cell is logged and recorded
    in ``failures`` and the remaining cells still run.
    """

    def body(ctx, method, n, m, seed):
        est = ctx.estimator(method, n, seed)
        t0 = time.perf_counter()
        est.fit(ctx.mrf, ctx.mesh)
        wall = time.perf_counter() - t0
        err = l1_error(est.predict(ctx.mesh), ctx.truth)
        return [_row(method, n, m, seed, est.n_iter_, err, wall)]

    return _run_cells(config, body, config.n_list, sink)


def _prior_beliefs(mrf, mesh):
    x = mesh.points
    return MeshBeliefs.from_log(mesh, np.stack([mrf.log_node(u, x)
                                                for u in range(mrf.node_count)]))


def run_iteration_trace(config: ExperimentConfig, sink=None) -> BenchResult:
    """Error after every sweep at ``N = config.trace_n``.

    Iteration 0 is the error of the node potentials alone; ``wall_ms`` is
    the cumulative sweep time (evaluation on the mesh is not timed).
    """

    def body(ctx, method, n, m, seed):
        rows = [_row(method, n, m, seed, 0, l1_error(_prior_beliefs(ctx.mrf, ctx.mesh),
                                                     ctx.truth), 0.0)]

        def record(it, est):
            if it > 0:
                err = l1_error(est.predict(ctx.mesh), ctx.truth)
                rows.append(_row(method, n, m, seed, it, err, sum(est.iteration_times_)))

        ctx.estimator(method, n, seed).fit(ctx.mrf, ctx.mesh, callback=record)
        return rows

    return _run_cells(config, body, [config.trace_n], sink)


class CsvSink:
    """Serialized CSV writer; rows are flushed as they complete."""

    def __init__(self, path):
        self._fh = open(path, "w", newline="")
        self._writer = csv.DictWriter(self._fh, fieldnames=CSV_HEADER)
        self._writer.writeheader()

    def __call__(self, row):
        self._writer.writerow(format_row(row))
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def format_row(row):
    out = dict(row)
    out["mean_l1"] = repr(float(row["mean_l1"]))
    out["wall_ms"] = f"{row['wall_ms']:.3f}"
    return out


def write_csv(rows, path) -> None:
    with CsvSink(path) as sink:
        for r in rows:
            sink(r)


def write_meta(path, config: ExperimentConfig, command: str, result: BenchResult | None = None):
    """Sidecar ``<path>.meta.json`` with the config hash and master seed."""
    meta = {
        "command": command,
        "config_sha256": config_hash(config),
        "master_seed": config.seed,
        "seeds": config.seeds,
        "config": config.to_dict(),
    }
    if result is not None:
        meta["failures"] = result.failures
    target = Path(str(path) + ".meta.json")
    target.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str))
    return target


# -- denoising ---------------------------------------------------------------

def synthetic_image(size: int = 50) -> GrayImage:
    """Piecewise-constant test image: background, a square, a disc and a ramp band."""
    size = check_positive_int(size, "size")
    img = np.full((size, size), 0.2)
    r, c = np.mgrid[0:size, 0:size] / size
    img[(r > 0.1) & (r < 0.45) & (c > 0.1) & (c < 0.45)] = 0.8
    img[(r - 0.68) ** 2 + (c - 0.68) ** 2 < 0.2 ** 2] = 0.5
    band = (r > 0.75) & (r < 0.92) & (c < 0.45)
    img[band] = np.round(0.3 + 0.6 * c[band] / 0.45, 1)
    return GrayImage(img)


def add_noise(image: GrayImage, sigma: float = 0.1, seed: int = 0) -> GrayImage:
    """Additive Normal(0, sigma^2) noise, clipped back into [0, 1]."""
    rng = np.random.default_rng(seed)
    noisy = image.pixels + rng.normal(0.0, sigma, image.pixels.shape)
    return GrayImage(np.clip(noisy, 0.0, 1.0))


def denoise(noisy: GrayImage, n_particles: int = 30, subquad_m: int | None = 5,
            iterations: int = 10, seed: int = 0) -> GrayImage:
    """Posterior-mean reconstruction under the truncated-Laplace pixel MRF.

    Runs sub-quadratic EPBP and returns each pixel's importance-weighted
    particle mean under its final belief.
    """
    px = noisy.pixels
    if px.min() < 0 or px.max() > 1:
        raise InvalidInputError("pixels must lie in [0, 1]")
    mrf = make_denoise_mrf(px)
    margin = 0.5
    est = EPBP(n_particles=n_particles, n_iterations=iterations, subquad_m=subquad_m,
               ep_range=(float(px.min()) - margin, float(px.max()) + margin),
               random_state=seed).fit(mrf)
    return GrayImage(np.clip(est.predict_mean().reshape(px.shape), 0.0, 1.0))


class Denoiser(TransformerMixin, BaseEstimator):
    """Transformer wrapper around :func:`denoise` for 2-d arrays in [0, 1]."""

    def __init__(self, n_particles=30, subquad_m=5, n_iterations=10, random_state=0):
        self.n_particles = n_particles
        self.subquad_m = subquad_m
        self.n_iterations = n_iterations
        self.random_state = random_state

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        out = denoise(GrayImage(X), self.n_particles, self.subquad_m, self.n_iterations,
                      self.random_state)
        return np.array(out.pixels)
