"""Inference backends with a scikit-learn style interface.

Each estimator is configured through ``__init__`` keyword arguments
(``get_params``/``set_params`` come from :class:`sklearn.base.BaseEstimator`)
and is fitted on a :class:`~epbp.model.PairwiseMRF`::

    est = EPBP(n_particles=100, n_iterations=20, random_state=0).fit(mrf)
    beliefs = est.predict(mesh)        # MeshBeliefs
    means = est.predict_mean()         # per-node posterior means

Fitted attributes end with an underscore, following sklearn conventions.
"""
from __future__ import annotations

import time
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .exceptions import DegenerateWeightsError, InvalidInputError
from .gaussian_ep import DEFAULT_QUAD_POINTS, UNIT, GaussianFactor, Proposal, project_tilted
from .mesh import Mesh, MeshBeliefs, MeshLBP, default_mesh
from .particles import (
    INIT_MESSAGE,
    ParticleMessage,
    compute_outgoing_weights,
    effective_sample_size,
    normalize_log_weights,
    subsample,
)
from .schedule import Schedule
from .validation import check_mrf, check_positive_int, check_seed

# sub-quadratic component count M for each particle count N
DEFAULT_SUBQUAD_MAP = {10: 5, 20: 6, 50: 8, 100: 10, 200: 11, 500: 13}


def rng_stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for one (iteration, node, ...) cell of a run."""
    return np.random.default_rng([seed, *keys])


def metropolis_hastings(log_target, init, steps: int, prop_std: float, rng):
    """Vectorized random-walk MH: one independent chain per entry of ``init``.

    Returns ``(states, log_target(states), acceptance_rate)``.
    """
    x = np.array(init, dtype=float, copy=True)
    lp = log_target(x)
    accepted = 0
    for _ in range(steps):
        prop = x + prop_std * rng.standard_normal(x.shape)
        lp_prop = log_target(prop)
        accept = np.log(rng.random(x.shape)) < lp_prop - lp
        x = np.where(accept, prop, x)
        lp = np.where(accept, lp_prop, lp)
        accepted += int(accept.sum())
    rate = accepted / (steps * x.size) if steps and x.size else 1.0
    return x, lp, rate


def mh_sample_from_belief(mrf, u, incoming, n_samples, init_positions, steps=20,
                          prop_std=1.0, rng=None):
    """MH draws targeting ``psi_u * prod(incoming)``, one chain per init position."""
    init = np.asarray(init_positions, dtype=float).reshape(-1)
    if init.size != n_samples:
        raise InvalidInputError("need one init position per chain")
    rng = rng if rng is not None else np.random.default_rng()

    def log_target(x):
        out = mrf.log_node(u, x)
        for w in mrf.neighbors(u):
            out = out + incoming[w].log_eval(x)
        return out

    return metropolis_hastings(log_target, init, steps, prop_std, rng)[0]


class _MessagePassingEstimator(BaseEstimator):
    """Shared fit loop: initialize, sweep ``n_iterations`` times, record diagnostics."""

    def _check_fitted(self):
        if not hasattr(self, "mrf_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet")

    def _resolve_schedule(self, mrf):
        if self.schedule is None:
            return Schedule.for_graph(mrf.graph)
        if isinstance(self.schedule, Schedule):
            return self.schedule
        return Schedule(tuple(self.schedule))

    def _ep_range(self, mrf, mesh):
        if self.ep_range is not None:
            lo, hi = self.ep_range
            return float(lo), float(hi)
        m = mesh if mesh is not None else default_mesh(mrf.observations)
        return m.lo, m.hi

    def fit(self, mrf, mesh: Mesh | None = None, callback=None):
        """Run inference on ``mrf``.

        ``callback(iteration, estimator)`` is called after initialization
        (iteration 0) and after every sweep.
        """
        check_mrf(mrf)
        check_positive_int(self.n_iterations, "n_iterations")
        self.mrf_ = mrf
        self.mesh_ = mesh
        self.schedule_ = self._resolve_schedule(mrf)
        if len(self.schedule_.sweep(0)) != mrf.node_count:
            raise InvalidInputError("schedule does not match the graph")
        self.seed_ = check_seed(getattr(self, "random_state", None))
        self.diagnostics_ = []
        self.iteration_times_ = []
        self._initialize(mrf, mesh)
        self.n_iter_ = 0
        if callback is not None:
            callback(0, self)
        for it in range(self.n_iterations):
            start = time.perf_counter()
            for u in self.schedule_.sweep(it):
                t0 = time.perf_counter()
                info = self._update_node(u, it)
                self.diagnostics_.append(
                    {"iteration": it + 1, "node": u,
                     "wall_us": (time.perf_counter() - t0) * 1e6, **info}
                )
            self.iteration_times_.append(time.perf_counter() - start)
            self.n_iter_ = it + 1
            if callback is not None:
                callback(it + 1, self)
        return self

    def predict(self, mesh: Mesh | None = None) -> MeshBeliefs:
        """Final beliefs evaluated on ``mesh`` and normalized there."""
        self._check_fitted()
        mesh = mesh or self.mesh_ or default_mesh(self.mrf_.observations)
        x = mesh.points
        logs = np.stack([self._log_belief(u, x) for u in range(self.mrf_.node_count)])
        return MeshBeliefs.from_log(mesh, logs)


class _ParticleEstimator(_MessagePassingEstimator):
    """Common state for estimators whose messages are particle mixtures."""

    def _init_messages(self, mrf):
        self.messages_ = {e: INIT_MESSAGE for e in mrf.graph.directed_edges}
        self.particles_ = [None] * mrf.node_count

    def _log_belief(self, u, x):
        out = np.array(self.mrf_.log_node(u, x), dtype=float)
        for w in self.mrf_.neighbors(u):
            out = out + self.messages_[(w, u)].log_eval(x)
        return out

    def _emit_messages(self, u, x, log_belief, incoming, log_q, it, subquad_m=None,
                       shared=False):
        """Replace every outgoing message of ``u``; returns the ESS of each."""
        mrf = self.mrf_
        ess = {}
        sub_rng = rng_stream(self.seed_, it, u, 1) if subquad_m is not None else None
        for v in mrf.neighbors(u):
            try:
                w = compute_outgoing_weights(log_belief, incoming[v], log_q)
            except DegenerateWeightsError as exc:
                raise DegenerateWeightsError(f"edge {u}->{v}: {exc}") from exc
            msg = ParticleMessage(u, v, x, w, mrf.edge_kernel)
            if subquad_m is not None:
                msg = subsample(msg, subquad_m, sub_rng, shared)
            self.messages_[(u, v)] = msg
            ess[v] = effective_sample_size(w)
        return ess

    def _incoming_at(self, u, x, fast=True):
        return {w: (self.messages_[(w, u)].log_eval_fast(x) if fast
                    else self.messages_[(w, u)].log_eval(x))
                for w in self.mrf_.neighbors(u)}

    def predict_mean(self) -> np.ndarray:
        """Importance-weighted mean of each node's last particles under its final belief."""
        self._check_fitted()
        out = np.empty(self.mrf_.node_count)
        for u in range(self.mrf_.node_count):
            x = self.particles_[u]
            if x is None:
                raise NotFittedError(f"node {u} was never updated")
            log_w = self._log_belief(u, x) - self._log_proposal(u, x)
            out[u] = float(normalize_log_weights(log_w) @ x)
        return out


class EPBP(_ParticleEstimator):
    """Particle BP with Gaussian proposals adapted by expectation propagation.

    Parameters
    ----------
    n_particles : int
        Particles drawn per node update.
    n_iterations : int
        Full sweeps over the graph.
    subquad_m : int or None
        When set, beliefs at the particles are evaluated with M multinomially
        drawn message components instead of all N (cost O(MN) per neighbour).
    subquad_shared : bool
        Reuse one index set per message for all evaluation points instead of
        drawing per point.  Cheaper, but the error no longer vanishes with N.
    quad_points : int
        Quadrature points for the EP moment computations.
    ep_range : (float, float) or None
        Quadrature range used while a cavity is improper; defaults to the
        mesh range (or the default mesh for the observations).
    schedule : Schedule, sequence of orderings or None
        Node update order; grids alternate the four raster orderings.
    random_state : int or None
    """

    def __init__(self, n_particles=100, n_iterations=20, subquad_m=None,
                 subquad_shared=False, quad_points=DEFAULT_QUAD_POINTS, ep_range=None,
                 schedule=None, random_state=None):
        self.n_particles = n_particles
        self.n_iterations = n_iterations
        self.subquad_m = subquad_m
        self.subquad_shared = subquad_shared
        self.quad_points = quad_points
        self.ep_range = ep_range
        self.schedule = schedule
        self.random_state = random_state

    def _initialize(self, mrf, mesh):
        check_positive_int(self.n_particles, "n_particles")
        if self.subquad_m is not None:
            check_positive_int(self.subquad_m, "subquad_m")
        self.ep_range_ = self._ep_range(mrf, mesh)
        self._init_messages(mrf)
        self.proposals_ = [
            Proposal(initial_node_factor(mrf, u, self.ep_range_, self.quad_points),
                     {w: UNIT for w in mrf.neighbors(u)})
            for u in range(mrf.node_count)
        ]
        self.ep_reverts_ = 0

    def _log_proposal(self, u, x):
        return self.proposals_[u].product.log_pdf(x)

    def _update_node(self, u, it):
        mrf = self.mrf_
        rng = rng_stream(self.seed_, it, u)
        q = self.proposals_[u].product
        x = q.sample(rng, self.n_particles)
        log_q = q.log_pdf(x)
        incoming = self._incoming_at(u, x, fast=True)
        log_b = mrf.log_node(u, x) + sum(incoming.values(), 0.0)
        ess = self._emit_messages(u, x, log_b, incoming, log_q, it, self.subquad_m,
                                  self.subquad_shared)
        reverts = 0
        for v in mrf.neighbors(u):
            prop = self.proposals_[v]
            if not prop.ep_update(None, lambda z, v=v: mrf.log_node(v, z),
                                  self.ep_range_, self.quad_points):
                reverts += 1
            # tilted target always uses the full N-term message
            if not prop.ep_update(u, self.messages_[(u, v)].log_eval,
                                  self.ep_range_, self.quad_points):
                reverts += 1
            if not prop.product.proper:
                raise AssertionError(f"proposal at node {v} became improper")
        self.particles_[u] = x
        self.ep_reverts_ += reverts
        return {"min_ess": min(ess.values()) if ess else float(self.n_particles),
                "ep_reverts": reverts}


def initial_node_factor(mrf, u, ep_range, quad_points=DEFAULT_QUAD_POINTS) -> GaussianFactor:
    """Gaussian projection of the node potential alone (flat cavity)."""
    proj = project_tilted(lambda z: mrf.log_node(u, z), UNIT,
                          fallback_range=ep_range, n_points=quad_points)
    if proj.reverted:
        lo, hi = ep_range
        return GaussianFactor.from_moments(0.5 * (lo + hi), ((hi - lo) / 4.0) ** 2)
    return proj.factor


class PBP(_ParticleEstimator):
    """Particle BP baseline.

    ``proposal="last-belief"`` refreshes each node's particles with a short
    MH chain targeting the current belief, started from the previous
    particles; the outgoing weights then reduce to ``1 / m_vu(x_i)``.
    ``proposal="fixed-ep"`` draws exactly from per-node Gaussians produced by
    a :class:`PureEP` run ("PBP after EP").
    """

    def __init__(self, n_particles=100, n_iterations=20, proposal="last-belief",
                 mh_steps=20, prop_std=1.0, init_std=5.0, ep_proposals=None,
                 ep_range=None, schedule=None, random_state=None):
        self.n_particles = n_particles
        self.n_iterations = n_iterations
        self.proposal = proposal
        self.mh_steps = mh_steps
        self.prop_std = prop_std
        self.init_std = init_std
        self.ep_proposals = ep_proposals
        self.ep_range = ep_range
        self.schedule = schedule
        self.random_state = random_state

    def _initialize(self, mrf, mesh):
        check_positive_int(self.n_particles, "n_particles")
        self._init_messages(mrf)
        self.acceptance_ = []
        if self.proposal == "last-belief":
            self.proposals_ = None
        elif self.proposal == "fixed-ep":
            factors = self.ep_proposals
            if factors is None:
                ep = PureEP(n_iterations=self.n_iterations, ep_range=self.ep_range,
                            schedule=self.schedule).fit(mrf, mesh)
                factors = ep.belief_factors_
            if len(factors) != mrf.node_count or not all(f.proper for f in factors):
                raise InvalidInputError("fixed-ep needs one proper Gaussian per node")
            self.proposals_ = list(factors)
        else:
            raise InvalidInputError(f"unknown proposal source {self.proposal!r}")

    def _log_proposal(self, u, x):
        if self.proposals_ is not None:
            return self.proposals_[u].log_pdf(x)
        return self._log_belief(u, x)

    def _update_node(self, u, it):
        mrf = self.mrf_
        rng = rng_stream(self.seed_, it, u)
        n = self.n_particles
        if self.proposals_ is not None:
            q = self.proposals_[u]
            x = q.sample(rng, n)
            incoming = self._incoming_at(u, x)
            log_b = mrf.log_node(u, x) + sum(incoming.values(), 0.0)
            ess = self._emit_messages(u, x, log_b, incoming, q.log_pdf(x), it)
        else:
            start = self.particles_[u]
            if start is None:
                start = mrf.observations[u] + self.init_std * rng.standard_normal(n)
            x, _, rate = metropolis_hastings(
                lambda z: self._log_belief(u, z), start, self.mh_steps, self.prop_std, rng
            )
            self.acceptance_.append(rate)
            incoming = self._incoming_at(u, x)
            # q_u is the belief itself, so weights are 1 / m_vu(x_i)
            zeros = np.zeros(n)
            ess = self._emit_messages(u, x, zeros, incoming, zeros, it)
        self.particles_[u] = x
        return {"min_ess": min(ess.values()) if ess else float(n), "ep_reverts": 0}

    def predict_mean(self) -> np.ndarray:
        if self.proposals_ is not None:
            return super().predict_mean()
        # particles are (approximate) belief draws: plain average
        self._check_fitted()
        return np.array([float(np.mean(x)) for x in self.particles_])


class PureEP(_MessagePassingEstimator):
    """Gaussian-message LBP.

    Each directed message is a Gaussian factor.  A node update of ``u`` first
    refreshes the node-potential factor by EP against its cavity, then for
    every neighbour ``v`` integrates the exact message
    ``int psi_uv psi_u prod_{w != v} g_wu`` on the mesh and projects
    ``message * cavity_v`` onto a Gaussian.  Updates that would make a
    node's Gaussian improper are skipped and counted in ``ep_reverts_``.
    """

    def __init__(self, n_iterations=20, quad_points=DEFAULT_QUAD_POINTS, ep_range=None,
                 schedule=None):
        self.n_iterations = n_iterations
        self.quad_points = quad_points
        self.ep_range = ep_range
        self.schedule = schedule

    def _initialize(self, mrf, mesh):
        mesh = mesh or default_mesh(mrf.observations)
        self.ep_range_ = self._ep_range(mrf, mesh)
        self._grid = MeshLBP(mrf, mesh)
        self._x = mesh.points
        self.proposals_ = [
            Proposal(initial_node_factor(mrf, u, self.ep_range_, self.quad_points),
                     {w: UNIT for w in mrf.neighbors(u)})
            for u in range(mrf.node_count)
        ]
        self.ep_reverts_ = 0

    @property
    def belief_factors_(self) -> list:
        return [p.product for p in self.proposals_]

    def _update_node(self, u, it):
        mrf = self.mrf_
        grid = self._grid
        x = self._x
        reverts = 0
        prop_u = self.proposals_[u]
        if not prop_u.ep_update(None, lambda z: mrf.log_node(u, z), self.ep_range_,
                                self.quad_points):
            reverts += 1
        msg_logs = {w: f.log_eval(x) for w, f in prop_u.message_factors.items()}
        total = grid.log_node[u] + sum(msg_logs.values(), 0.0)
        for v in mrf.neighbors(u):
            pre = total - msg_logs[v]
            top = pre.max()
            with np.errstate(under="ignore", divide="ignore"):
                log_m = np.log(np.exp(pre - top) @ grid.edge_exp)
            if not np.all(np.isfinite(log_m)):
                reverts += 1
                continue
            prop_v = self.proposals_[v]
            # tilted density is only known on the mesh
            proj = project_tilted(lambda _: log_m, prop_v.cavity(u), quad=x, refine=False)
            if proj.reverted or not prop_v.try_update(u, proj.factor):
                reverts += 1
        self.ep_reverts_ += reverts
        return {"min_ess": np.nan, "ep_reverts": reverts}

    def _log_belief(self, u, x):
        return self.proposals_[u].product.log_eval(x)

    def predict_mean(self) -> np.ndarray:
        self._check_fitted()
        return np.array([p.product.s / p.product.r for p in self.proposals_])


class RunResult(NamedTuple):
    beliefs: MeshBeliefs
    diagnostics: list
    estimator: _MessagePassingEstimator


def _run(est, mrf, mesh):
    est.fit(mrf, mesh)
    return RunResult(est.predict(mesh), est.diagnostics_, est)


def run_epbp(mrf, mesh=None, n_particles=100, iterations=20, schedule=None, subquad_m=None,
             seed=None) -> RunResult:
    """Functional form of :class:`EPBP`; returns mesh beliefs and diagnostics."""
    return _run(EPBP(n_particles=n_particles, n_iterations=iterations, subquad_m=subquad_m,
                     schedule=schedule, random_state=seed), mrf, mesh)


def run_pbp(mrf, mesh=None, n_particles=100, iterations=20, schedule=None, seed=None,
            proposal="last-belief", ep_proposals=None, prop_std=1.0) -> RunResult:
    return _run(PBP(n_particles=n_particles, n_iterations=iterations, proposal=proposal,
                    ep_proposals=ep_proposals, prop_std=prop_std, schedule=schedule,
                    random_state=seed), mrf, mesh)


def run_pure_ep(mrf, mesh=None, iterations=20, schedule=None) -> RunResult:
    """Gaussian-message LBP; ``result.estimator.belief_factors_`` holds the products."""
    return _run(PureEP(n_iterations=iterations, schedule=schedule), mrf, mesh)
