"""Argument validation helpers shared by estimators and the CLI."""
from __future__ import annotations

from numbers import Integral

import numpy as np

from .exceptions import InvalidInputError


def check_positive_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, Integral) or value < 1:
        raise InvalidInputError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_seed(random_state) -> int:
    """Integer master seed; ``None`` draws fresh OS entropy."""
    if random_state is None:
        return int(np.random.SeedSequence().entropy % (2 ** 63))
    if isinstance(random_state, Integral) and random_state >= 0:
        return int(random_state)
    raise InvalidInputError(f"random_state must be a nonnegative int or None, got {random_state!r}")


def check_mrf(mrf):
    from .model import PairwiseMRF

    if not isinstance(mrf, PairwiseMRF):
        raise InvalidInputError(f"expected a PairwiseMRF, got {type(mrf).__name__}")
    return mrf


def check_finite_array(values, name: str, ndim: int | None = None) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise InvalidInputError(f"{name} must be {ndim}-dimensional")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr
