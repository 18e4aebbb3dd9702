"""Gaussian factors in natural parameters and the EP moment-matching step."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, NamedTuple

import numpy as np

from .exceptions import ImproperFactorError, InvalidInputError

DEFAULT_QUAD_POINTS = 61
QUAD_HALF_WIDTH = 6.0
# refined grids reach further so that truncating a Gaussian-like tail costs
# well under 1e-9 of the variance
REFINE_HALF_WIDTH = 8.0
# recentering passes after the cavity-based grid
_MAX_REFINE = 5


class GaussianFactor(NamedTuple):
    """Unnormalized Gaussian ``exp(-r x^2 / 2 + s x)``.

    ``r`` is the precision and ``s`` the precision-weighted mean.  A single
    factor may have ``r <= 0``; it then has no moments.
    """

    r: float = 0.0
    s: float = 0.0

    @classmethod
    def from_moments(cls, mean: float, variance: float) -> "GaussianFactor":
        if not variance > 0:
            raise ImproperFactorError(f"variance must be positive, got {variance!r}")
        return cls(1.0 / variance, mean / variance)

    @property
    def proper(self) -> bool:
        return self.r > 0 and math.isfinite(self.r) and math.isfinite(self.s)

    def __mul__(self, other):
        return GaussianFactor(self.r + other.r, self.s + other.s)

    def __truediv__(self, other):
        return GaussianFactor(self.r - other.r, self.s - other.s)

    def log_eval(self, x):
        return (-0.5 * self.r * x + self.s) * x

    def log_pdf(self, x):
        """Normalized log density; only for proper factors."""
        mean, var = moments(self)
        x = np.asarray(x, dtype=float)
        return -0.5 * (x - mean) ** 2 / var - 0.5 * np.log(2 * np.pi * var)

    def sample(self, rng: np.random.Generator, size=None):
        mean, var = moments(self)
        return rng.normal(mean, np.sqrt(var), size=size)


UNIT = GaussianFactor(0.0, 0.0)


def multiply(a: GaussianFactor, b: GaussianFactor) -> GaussianFactor:
    return a * b


def divide(a: GaussianFactor, b: GaussianFactor) -> GaussianFactor:
    return a / b


def moments(f: GaussianFactor) -> tuple[float, float]:
    """Mean and variance of a proper factor."""
    if not f.r > 0:
        raise ImproperFactorError(f"factor with precision {f.r!r} has no moments")
    return f.s / f.r, 1.0 / f.r


@lru_cache(maxsize=8)
def _unit_grid(n_points: int) -> np.ndarray:
    grid = np.linspace(-1.0, 1.0, n_points)
    grid.setflags(write=False)
    return grid


def _grid(lo: float, hi: float, n_points: int) -> np.ndarray:
    return 0.5 * (lo + hi) + 0.5 * (hi - lo) * _unit_grid(n_points)


def make_quadrature(cavity: GaussianFactor, fallback_range, n_points: int = DEFAULT_QUAD_POINTS):
    """Equally spaced evaluation points for a tilted-moment computation.

    Spans ``mean +/- 6 sd`` of a proper cavity, otherwise ``fallback_range``.
    """
    if n_points < 3:
        raise InvalidInputError("quadrature needs at least 3 points")
    if cavity.proper:
        mean, var = moments(cavity)
        half = QUAD_HALF_WIDTH * math.sqrt(var)
        return _grid(mean - half, mean + half, n_points)
    lo, hi = fallback_range
    return _grid(lo, hi, n_points)


def tilted_moments(log_density: np.ndarray, points: np.ndarray):
    """Mean and variance of a density known up to scale on a uniform grid.

    Riemann sums, plus one Richardson step when the point count is odd.
    """
    top = log_density.max()
    if not math.isfinite(top):
        return math.nan, math.nan
    w = np.exp(log_density - top)
    # shift by a grid point near the mode to keep the second moment well conditioned
    mode = float(points[int(np.argmax(w))])
    d = points - mode
    basis = np.stack((np.ones_like(d), d, d * d))
    full = basis @ w
    mean, var = _moments_from_sums(full)
    if points.size % 2 == 0 or points.size < 5:
        return mode + mean, var
    # Richardson step against the every-other-point sum: cancels the h^2 error
    # that kinks (Laplace-type targets) leave in a plain Riemann sum; smooth
    # integrands are already exact to rounding on both grids
    half = 2.0 * (basis[:, ::2] @ w[::2])
    r_mean, r_var = _moments_from_sums((4.0 * full - half) / 3.0)
    if math.isfinite(r_var) and r_var > 0:
        mean, var = r_mean, r_var
    return mode + mean, var


def _moments_from_sums(sums):
    z, m1, m2 = sums
    if not z > 0:
        return math.nan, math.nan
    shift = m1 / z
    return float(shift), float(m2 / z - shift * shift)


def _resolved(points, mean, var) -> bool:
    """Grid covers mean +/- 8 sd and spacing is at most sd / 2."""
    sd = math.sqrt(var)
    lo, hi = points[0], points[-1]
    spacing = (hi - lo) / (points.size - 1)
    reach = 0.98 * REFINE_HALF_WIDTH * sd
    return spacing <= 0.5 * sd and mean - reach >= lo and mean + reach <= hi


@dataclass
class Projection:
    """Outcome of a tilted projection; ``factor`` is None when the update must revert."""

    factor: GaussianFactor | None
    mean: float = np.nan
    variance: float = np.nan

    @property
    def reverted(self) -> bool:
        return self.factor is None


def project_tilted(
    target_log: Callable[[np.ndarray], np.ndarray],
    cavity: GaussianFactor,
    quad=None,
    *,
    fallback_range=(-10.0, 10.0),
    n_points: int = DEFAULT_QUAD_POINTS,
    refine: bool = True,
) -> Projection:
    """Gaussian factor whose product with ``cavity`` matches the tilted moments.

    The tilted density ``exp(target_log(x)) * cavity(x)`` is evaluated on
    ``quad`` (or the cavity-based grid) and its first two moments are matched.
    With ``refine`` the grid is re-centred on the tilted mean +/- 8 sd until
    it stabilizes, which keeps narrow or off-centre tilted densities resolved.
    Returns a reverting Projection if the tilted variance is not positive.
    """
    points = np.asarray(quad if quad is not None else
                        make_quadrature(cavity, fallback_range, n_points), dtype=float)
    if points.size == 0:
        raise InvalidInputError("empty quadrature")
    k = points.size
    log_t = target_log(points) + cavity.log_eval(points)
    if refine and quad is None and cavity.proper and np.argmax(log_t) in (0, k - 1):
        # a broad, off-centre cavity can put its grid where the target has no mass
        points = _grid(fallback_range[0], fallback_range[1], k)
        log_t = target_log(points) + cavity.log_eval(points)
    mean, var = tilted_moments(log_t, points)
    if refine:
        for _ in range(_MAX_REFINE):
            if not (np.isfinite(var) and var > 0) or _resolved(points, mean, var):
                break
            spacing = (points[-1] - points[0]) / (k - 1)
            # shrink by at most ~10x per pass so that unresolved mass stays inside
            half = max(REFINE_HALF_WIDTH * math.sqrt(var), 3.0 * spacing)
            points = _grid(mean - half, mean + half, k)
            mean, var = tilted_moments(target_log(points) + cavity.log_eval(points), points)
    if not (math.isfinite(mean) and math.isfinite(var) and var > 0):
        return Projection(None, mean, var)
    return Projection(GaussianFactor.from_moments(mean, var) / cavity, mean, var)


@dataclass
class Proposal:
    """Gaussian proposal ``node_factor * prod(message_factors)``.

    The product is cached and kept proper: :meth:`try_update` refuses any
    factor replacement that would make it improper.
    """

    node_factor: GaussianFactor
    message_factors: dict = field(default_factory=dict)
    product: GaussianFactor = field(init=False)

    def __post_init__(self):
        self.product = self._recompute()

    def _recompute(self) -> GaussianFactor:
        p = self.node_factor
        for f in self.message_factors.values():
            p = p * f
        return p

    def factor(self, key) -> GaussianFactor:
        return self.node_factor if key is None else self.message_factors[key]

    def cavity(self, key) -> GaussianFactor:
        """Proposal with one factor divided out (``key=None`` for the node factor)."""
        return self.product / self.factor(key)

    def try_update(self, key, new: GaussianFactor) -> bool:
        candidate = self.cavity(key) * new
        if not (candidate.proper and math.isfinite(new.r) and math.isfinite(new.s)):
            return False
        if key is None:
            self.node_factor = new
        else:
            self.message_factors[key] = new
        self.product = candidate
        return True

    def ep_update(self, key, target_log, fallback_range, n_points=DEFAULT_QUAD_POINTS) -> bool:
        """One EP step for factor ``key``; returns False if the factor reverted."""
        proj = project_tilted(target_log, self.cavity(key),
                              fallback_range=fallback_range, n_points=n_points)
        if proj.reverted:
            return False
        return self.try_update(key, proj.factor)
