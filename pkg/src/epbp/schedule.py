"""Sequential node-update orderings."""
from __future__ import annotations

from dataclasses import dataclass

from .exceptions import InvalidInputError


@dataclass(frozen=True)
class Schedule:
    """Cyclic list of sweeps; sweep ``t`` uses ``orderings[t % len(orderings)]``."""

    orderings: tuple

    def __post_init__(self):
        if not self.orderings:
            raise InvalidInputError("schedule needs at least one ordering")
        n = len(self.orderings[0])
        for order in self.orderings:
            if sorted(order) != list(range(n)):
                raise InvalidInputError("each sweep must be a permutation of the nodes")
        object.__setattr__(self, "orderings", tuple(tuple(o) for o in self.orderings))

    def sweep(self, iteration: int) -> tuple:
        return self.orderings[iteration % len(self.orderings)]

    @classmethod
    def for_grid(cls, rows: int, cols: int) -> "Schedule":
        """Top-down-left-right, left-right-top-down, down-up-right-left, right-left-down-up."""
        row_major = [r * cols + c for r in range(rows) for c in range(cols)]
        col_major = [r * cols + c for c in range(cols) for r in range(rows)]
        return cls((row_major, col_major, row_major[::-1], col_major[::-1]))

    @classmethod
    def for_graph(cls, graph) -> "Schedule":
        if graph.shape is not None:
            return cls.for_grid(*graph.shape)
        ids = list(range(graph.node_count))
        return cls((ids, ids[::-1]))

    @classmethod
    def fixed(cls, order) -> "Schedule":
        return cls((tuple(order),))
