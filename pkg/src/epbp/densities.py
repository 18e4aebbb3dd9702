"""Unnormalized univariate density kernels.

Every kernel exposes ``log_eval`` (vectorized over numpy arrays) and kernels
made only of normals additionally support ``sample``.  Kernels are immutable
and carry no normalizing constants; message passing is invariant to scale.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import InvalidInputError, UnsupportedVariantError

# exp(-z) overflows float64 beyond this; the kernel is numerically zero there anyway
_GUMBEL_Z_FLOOR = -700.0


def _as_finite(x):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("kernel evaluated at a non-finite point")
    return arr


def _check_positive(name, value):
    if not (np.isfinite(value) and value > 0):
        raise InvalidInputError(f"{name} must be a finite positive number, got {value!r}")


def _out(values, x):
    return float(values) if np.ndim(x) == 0 else values


class DensityKernel:
    """Base class; subclasses implement ``_log_eval`` on float arrays."""

    def log_eval(self, x):
        """Log of the unnormalized kernel at ``x`` (scalar or array)."""
        arr = _as_finite(x)
        return _out(self._log_eval(arr), x)

    def __call__(self, x):
        return np.exp(self.log_eval(x))

    def _log_eval(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _log_eval_inplace(self, x: np.ndarray) -> np.ndarray:
        """Like ``_log_eval`` but may overwrite ``x``; used on scratch arrays."""
        return self._log_eval(x)

    def sample(self, rng: np.random.Generator, size=None):
        raise UnsupportedVariantError(
            f"sampling is not supported for {type(self).__name__} kernels"
        )


@dataclass(frozen=True)
class Normal(DensityKernel):
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        _check_positive("sigma", self.sigma)

    def _log_eval(self, x):
        z = (x - self.mu) / self.sigma
        return -0.5 * z * z

    def sample(self, rng, size=None):
        return rng.normal(self.mu, self.sigma, size=size)


@dataclass(frozen=True)
class Gumbel(DensityKernel):
    """Standard (max) Gumbel kernel ``exp(-(z + exp(-z)))``, ``z = (x - mu) / beta``."""

    mu: float = 0.0
    beta: float = 1.0

    def __post_init__(self):
        _check_positive("beta", self.beta)

    def _log_eval(self, x):
        z = np.maximum((x - self.mu) / self.beta, _GUMBEL_Z_FLOOR)
        return -(z + np.exp(-z))


@dataclass(frozen=True)
class Laplace(DensityKernel):
    mu: float = 0.0
    beta: float = 1.0

    def __post_init__(self):
        _check_positive("beta", self.beta)

    def _log_eval(self, x):
        return -np.abs(x - self.mu) / self.beta

    def _log_eval_inplace(self, x):
        if self.mu:
            x -= self.mu
        np.abs(x, out=x)
        x *= -1.0 / self.beta
        return x


@dataclass(frozen=True)
class TruncatedLaplace(DensityKernel):
    """Laplace kernel clamped to its value at distance ``lam`` from the mode.

    The floor makes the kernel non-integrable, which is the point: it models
    pixel similarity that stops penalizing beyond an edge threshold.
    """

    mu: float = 0.0
    beta: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        _check_positive("beta", self.beta)
        _check_positive("lam", self.lam)

    def _log_eval(self, x):
        return -np.minimum(np.abs(x - self.mu), self.lam) / self.beta

    def _log_eval_inplace(self, x):
        if self.mu:
            x -= self.mu
        np.abs(x, out=x)
        np.minimum(x, self.lam, out=x)
        x *= -1.0 / self.beta
        return x


@dataclass(frozen=True)
class Mixture(DensityKernel):
    weights: tuple
    components: tuple
    _log_weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        weights = tuple(float(w) for w in self.weights)
        components = tuple(self.components)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "components", components)
        if len(weights) == 0 or len(weights) != len(components):
            raise InvalidInputError("mixture needs one weight per component")
        if any(w < 0 or not np.isfinite(w) for w in weights):
            raise InvalidInputError("mixture weights must be nonnegative")
        if abs(sum(weights) - 1.0) > 1e-12:
            raise InvalidInputError(f"mixture weights sum to {sum(weights)!r}, not 1")
        if not all(isinstance(c, DensityKernel) for c in components):
            raise InvalidInputError("mixture components must be DensityKernel instances")
        with np.errstate(divide="ignore"):
            object.__setattr__(self, "_log_weights", np.log(np.array(weights)))

    def _log_eval(self, x):
        out = None
        for lw, c in zip(self._log_weights, self.components):
            term = lw + c._log_eval(x)
            out = term if out is None else np.logaddexp(out, term)
        return out

    def sample(self, rng, size=None):
        for c in self.components:
            if not isinstance(c, (Normal, Mixture)):
                raise UnsupportedVariantError(
                    f"cannot sample a mixture containing {type(c).__name__}"
                )
        n = 1 if size is None else int(np.prod(size))
        picks = rng.choice(len(self.components), size=n, p=np.array(self.weights))
        out = np.empty(n)
        for k, c in enumerate(self.components):
            idx = np.flatnonzero(picks == k)
            if idx.size:
                out[idx] = c.sample(rng, size=idx.size)
        return out[0] if size is None else out.reshape(size)


def mixture(weights: Sequence[float], components: Sequence[DensityKernel]) -> Mixture:
    return Mixture(tuple(weights), tuple(components))


def log_eval(kernel: DensityKernel, x):
    return kernel.log_eval(x)


def sample(kernel: DensityKernel, rng: np.random.Generator, size=None):
    return kernel.sample(rng, size=size)
