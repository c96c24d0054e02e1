"""Batched joint samples passed between generators, sampling and losses."""

from __future__ import annotations

from dataclasses import dataclass

from .autodiff import Tensor


@dataclass
class JointBatch:
    """A batch drawn from one source recipe.

    ``values`` holds one (n, dim) tensor per domain in canonical domain
    order; ``source`` is the 1-based class label the critic must assign;
    ``graph_connected`` records which components carry gradients (generated)
    versus empirical draws (never connected).
    """

    domains: tuple[str, ...]
    values: tuple[Tensor, ...]
    source: int
    graph_connected: tuple[bool, ...]

    def __post_init__(self):
        counts = {v.shape[0] for v in self.values}
        if len(counts) != 1:
            raise ValueError(f"joint batch: inconsistent batch sizes {sorted(counts)}")

    @property
    def n(self) -> int:
        return self.values[0].shape[0]


def connectivity(values) -> tuple[bool, ...]:
    """Actual graph connectivity of each component."""
    return tuple(v.node is not None for v in values)
