"""Order-statistics aggregation of per-divergence bounds."""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = ["BoundFamily", "k_agg", "k_agg_auto"]


@dataclass(frozen=True)
class BoundFamily:
    """Per-divergence lower and upper bounds for one query."""

    lowers: tuple
    uppers: tuple
    labels: tuple = field(default=())

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lowers)
        up = tuple(float(v) for v in self.uppers)
        if len(lo) != len(up) or len(lo) < 1:
            raise ValueError("lowers and uppers must be equal-length and nonempty")
        labels = tuple(self.labels) if self.labels else tuple(f"f{i}" for i in range(len(lo)))
        if len(labels) != len(lo):
            raise ValueError("labels must match the bound lists")
        object.__setattr__(self, "lowers", lo)
        object.__setattr__(self, "uppers", up)
        object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return len(self.lowers)


def k_agg(family: BoundFamily, k: int):
    """k-th largest lower, k-th smallest upper."""
    if not 1 <= k <= family.size:
        raise ValueError(f"k={k} out of range 1..{family.size}")
    lo = sorted(family.lowers, reverse=True)[k - 1]
    up = sorted(family.uppers)[k - 1]
    return lo, up


def k_agg_auto(family: BoundFamily):
    """Increment k from 1 until lo <= up; on exhaustion return k = n_f with
    a crossed flag instead of failing."""
    for k in range(1, family.size + 1):
        lo, up = k_agg(family, k)
        if lo <= up:
            return lo, up, k, False
    lo, up = k_agg(family, family.size)
    return lo, up, family.size, True
