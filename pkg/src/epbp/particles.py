"""Particle messages, belief evaluation and importance weights.

All evaluations return logs.  A message ``u -> v`` is the mixture
``sum_i w_i psi_uv(x_u^(i), x_v)`` over particles drawn at the source node.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .densities import DensityKernel
from .exceptions import DegenerateWeightsError, InvalidInputError


def logsumexp_rows(a: np.ndarray, log_b: np.ndarray | None = None) -> np.ndarray:
    """Row-wise ``log(sum_j b_j exp(a_ij))`` with a fixed reduction order."""
    if log_b is not None:
        a = a + log_b
    top = a.max(axis=-1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        return (top + np.log(np.exp(a - top).sum(axis=-1, keepdims=True)))[..., 0]


def _mixture_log_eval(kernel, sources, weights, x):
    """``log sum_i weights_i exp(kernel(sources_i - x))`` for every x."""
    x = np.asarray(x, dtype=float)
    flat = x.reshape(-1)
    # entry [j, i] = kernel(sources_i - x_j)
    logk = kernel._log_eval_inplace(np.subtract.outer(-flat, -sources))
    with np.errstate(under="ignore", divide="ignore"):
        out = np.log(np.exp(logk) @ weights)
    bad = ~np.isfinite(out)
    if bad.any():
        logk = kernel._log_eval_inplace(np.subtract.outer(-flat[bad], -sources))
        with np.errstate(divide="ignore"):
            out[bad] = logsumexp_rows(logk, np.log(weights))
    return out.reshape(x.shape) if x.ndim else float(out[0])


class InitMessage:
    """Constant-one message used before a node has sent anything."""

    def log_eval(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros_like(x) if x.ndim else 0.0

    def log_eval_fast(self, x):
        return self.log_eval(x)


INIT_MESSAGE = InitMessage()


@dataclass(frozen=True)
class ParticleMessage:
    source: int
    target: int
    particles: np.ndarray
    weights: np.ndarray
    edge_kernel: DensityKernel = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.particles, dtype=float).reshape(-1)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if p.size < 1 or p.size != w.size:
            raise InvalidInputError("message needs N >= 1 particles with one weight each")
        if not np.all(np.isfinite(p)):
            raise InvalidInputError("particles must be finite")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InvalidInputError("message weights must be nonnegative and sum to 1")
        object.__setattr__(self, "particles", p)
        object.__setattr__(self, "weights", w)

    @property
    def n_particles(self) -> int:
        return self.particles.size

    def log_eval(self, x):
        return _mixture_log_eval(self.edge_kernel, self.particles, self.weights, x)

    # the belief product evaluates whichever estimator the run uses
    log_eval_fast = log_eval

    def ess(self) -> float:
        return float(1.0 / np.sum(self.weights ** 2))


@dataclass(frozen=True)
class SubsampledMessage:
    """Unbiased estimate of a ParticleMessage from M multinomial component draws.

    By default the message first draws a pool of N components from its
    weights; each evaluation point then picks its own M pool entries
    uniformly.  Marginally every pick is a multinomial draw, estimates at
    distinct points use different components, and the extra pool error
    shrinks like the particle error itself.  With ``shared=True`` one index
    set is drawn up front and reused everywhere (the error then floors at a
    level set by M alone).  :meth:`log_eval` is the full mixture and
    :meth:`log_eval_fast` the M-term estimator.
    """

    base: ParticleMessage
    n_components: int
    rng: np.random.Generator = field(repr=False)
    indices: np.ndarray | None = None
    _pool: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_components < 1:
            raise InvalidInputError("need M >= 1 indices")
        if self.indices is None:
            pool = self.base.particles[
                draw_indices(self.base.weights, self.base.n_particles, self.rng)]
            object.__setattr__(self, "_pool", pool)
        else:
            idx = np.asarray(self.indices, dtype=np.intp).reshape(-1)
            if idx.size != self.n_components:
                raise InvalidInputError("shared index set must hold M indices")
            if idx.min() < 0 or idx.max() >= self.base.n_particles:
                raise InvalidInputError("subsample index out of range")
            object.__setattr__(self, "indices", idx)

    @property
    def shared(self) -> bool:
        return self.indices is not None

    @property
    def source(self):
        return self.base.source

    @property
    def target(self):
        return self.base.target

    @property
    def particles(self):
        return self.base.particles

    @property
    def weights(self):
        return self.base.weights

    def ess(self) -> float:
        return self.base.ess()

    def log_eval(self, x):
        return self.base.log_eval(x)

    def log_eval_fast(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1)
        m = self.n_components
        if self.indices is not None:
            src = np.broadcast_to(self.base.particles[self.indices], (flat.size, m))
        else:
            pool = self._pool
            src = pool[self.rng.integers(0, pool.size, (flat.size, m))]
        logk = self.base.edge_kernel._log_eval_inplace(src - flat[:, None])
        with np.errstate(under="ignore", divide="ignore"):
            out = np.log(np.exp(logk).sum(axis=1))
        bad = ~np.isfinite(out)
        if bad.any():
            out[bad] = logsumexp_rows(logk[bad])
        out -= np.log(m)
        return out.reshape(x.shape) if x.ndim else float(out[0])


def _inverse_cdf(cdf, u):
    idx = np.searchsorted(cdf, u * cdf[-1], side="right")
    np.minimum(idx, cdf.size - 1, out=idx)
    return idx


def draw_indices(weights, size, rng: np.random.Generator) -> np.ndarray:
    """Multinomial (with replacement) component indices."""
    return _inverse_cdf(np.cumsum(np.asarray(weights, dtype=float)), rng.random(size))


def eval_message(m, x, subsampled: bool = True):
    """Message value at ``x`` (linear scale).

    SubsampledMessage instances use the M-term estimator unless
    ``subsampled`` is False.
    """
    f = m.log_eval_fast if subsampled else m.log_eval
    return np.exp(f(x))


def log_belief_at(mrf, u: int, incoming: Mapping, x, subsampled: bool = True):
    """``log psi_u(x) + sum_w log m_wu(x)`` over the neighbours of ``u``."""
    out = np.array(mrf.log_node(u, x), dtype=float)
    for w in mrf.neighbors(u):
        m = incoming[w]
        out = out + (m.log_eval_fast(x) if subsampled else m.log_eval(x))
    return out


def eval_belief_at(mrf, u: int, incoming: Mapping, x, subsampled: bool = True):
    return np.exp(log_belief_at(mrf, u, incoming, x, subsampled))


def normalize_log_weights(log_w: np.ndarray) -> np.ndarray:
    log_w = np.asarray(log_w, dtype=float)
    top = np.max(log_w)
    if not np.isfinite(top):
        raise DegenerateWeightsError("all importance weights vanished")
    w = np.exp(log_w - top)
    total = w.sum()
    if not (np.isfinite(total) and total > 0):
        raise DegenerateWeightsError("importance weight normalizer is not finite")
    w /= total
    return w


def compute_outgoing_weights(log_belief, log_incoming, log_proposal) -> np.ndarray:
    """Normalized weights proportional to belief / incoming / proposal.

    All three inputs are logs of strictly positive values at the same
    particles.
    """
    return normalize_log_weights(
        np.asarray(log_belief, dtype=float)
        - np.asarray(log_incoming, dtype=float)
        - np.asarray(log_proposal, dtype=float)
    )


def subsample(m: ParticleMessage, n_components: int, rng: np.random.Generator,
              shared: bool = False) -> SubsampledMessage:
    """M-component estimator of ``m`` drawing from ``rng``.

    ``shared=True`` fixes one set of M indices now; otherwise indices are
    drawn per evaluation point.
    """
    if n_components < 1:
        raise InvalidInputError("M must be >= 1")
    indices = draw_indices(m.weights, n_components, rng) if shared else None
    return SubsampledMessage(m, int(n_components), rng, indices)


def effective_sample_size(weights) -> float:
    w = np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(w * w))
