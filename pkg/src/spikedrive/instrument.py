"""Forward-pass instrumentation: firing-rate measurement and the
spike-path audit that checks what kind of tensor each charged op consumes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Observation", "Probe"]


@dataclass(frozen=True)
class Observation:
    layer: str
    t: int
    rate: float
    kind: str  # binary | integer | dense


def classify(a: np.ndarray) -> str:
    if a.size == 0:
        return "binary"
    mn, mx = a.min(), a.max()
    if mn >= 0 and mx <= 1 and np.isin(a, (0.0, 1.0)).all():
        return "binary"
    if mn >= 0 and np.array_equal(a, np.round(a)):
        return "integer"
    return "dense"


@dataclass
class Probe:
    """Collects one observation per (charged op, timestep)."""

    entries: list[Observation] = field(default_factory=list)
    t: int = 0

    def observe(self, layer: str, a: np.ndarray, kind: str | None = None,
                rate: float | None = None):
        if rate is None:
            rate = float(np.count_nonzero(a)) / a.size if a.size else 0.0
        self.entries.append(Observation(layer, self.t, rate, kind or classify(a)))

    def rates(self) -> dict[tuple[str, int], float]:
        return {(e.layer, e.t): e.rate for e in self.entries}
