"""Core tensor carriers: dense floats, binary spikes, integer counts, and the
address-event representation used for sparse interchange.

All carriers are immutable after construction (the wrapped arrays are marked
read-only) so they can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgError, EmptyTensorError, InvalidEventError, ParseError, ShapeError

__all__ = [
    "DenseTensor",
    "SpikeTensor",
    "IntTensor",
    "EventList",
    "firing_rate",
    "to_events",
    "from_events",
    "load_event_file",
]


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


class DenseTensor:
    """Row-major real-valued tensor. All values must be finite."""

    __slots__ = ("data",)

    def __init__(self, data):
        a = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(a)):
            raise ValueError("DenseTensor values must be finite")
        self.data = _freeze(a.copy() if a.base is not None or a.flags.writeable else a)

    @property
    def shape(self):
        return self.data.shape

    @classmethod
    def zeros(cls, shape):
        return cls(np.zeros(shape, dtype=np.float64))

    def __eq__(self, other):
        return isinstance(other, DenseTensor) and np.array_equal(self.data, other.data)

    def __repr__(self):
        return f"DenseTensor(shape={self.shape})"


class SpikeTensor:
    """Binary activation tensor; every element is exactly 0 or 1."""

    __slots__ = ("data",)

    def __init__(self, data):
        a = np.asarray(data)
        if a.size and not np.isin(a, (0, 1)).all():
            raise ValueError("SpikeTensor values must be exactly 0 or 1")
        self.data = _freeze(a.astype(np.uint8))

    @property
    def shape(self):
        return self.data.shape

    @classmethod
    def zeros(cls, shape):
        return cls(np.zeros(shape, dtype=np.uint8))

    @classmethod
    def ones(cls, shape):
        return cls(np.ones(shape, dtype=np.uint8))

    def __eq__(self, other):
        return isinstance(other, SpikeTensor) and np.array_equal(self.data, other.data)

    def __repr__(self):
        return f"SpikeTensor(shape={self.shape})"


class IntTensor:
    """Non-negative integer tensor; arises from sums/products of spikes."""

    __slots__ = ("data",)

    def __init__(self, data):
        a = np.asarray(data)
        if not np.issubdtype(a.dtype, np.integer):
            if a.size and not np.array_equal(a, np.round(a)):
                raise ValueError("IntTensor values must be integers")
            a = a.astype(np.int64)
        if a.size and a.min() < 0:
            raise ValueError("IntTensor values must be non-negative")
        self.data = _freeze(a.astype(np.int64))

    @property
    def shape(self):
        return self.data.shape

    def __eq__(self, other):
        return isinstance(other, IntTensor) and np.array_equal(self.data, other.data)

    def __repr__(self):
        return f"IntTensor(shape={self.shape})"


@dataclass(frozen=True)
class EventList:
    """Sparse carrier: one (t, flat_index) record per spike.

    ``t`` indexes the leading axis of the origin tensor; ``flat_index`` is the
    position within that timestep's slice. Records are sorted by
    (t, flat_index) and contain no duplicates. For rank-1 tensors the whole
    tensor is a single t=0 slice.
    """

    records: tuple[tuple[int, int], ...]
    shape: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not self.shape:
            raise InvalidEventError("EventList requires the origin tensor shape")
        slice_size = int(np.prod(self.shape[1:])) if len(self.shape) > 1 else int(self.shape[0])
        n_slices = self.shape[0] if len(self.shape) > 1 else 1
        prev = (-1, -1)
        for t, flat in self.records:
            if not (0 <= t < n_slices and 0 <= flat < slice_size):
                raise InvalidEventError(f"event ({t}, {flat}) out of bounds for shape {self.shape}")
            if (t, flat) <= prev:
                raise InvalidEventError("events must be strictly sorted by (t, flat_index)")
            prev = (t, flat)

    def __len__(self):
        return len(self.records)


def firing_rate(s) -> float:
    """Fraction of non-zero elements in a spike (or integer) tensor."""
    a = s.data if hasattr(s, "data") else np.asarray(s)
    if a.size == 0:
        raise EmptyTensorError("firing rate of a zero-element tensor is undefined")
    return float(np.count_nonzero(a)) / a.size


def to_events(s: SpikeTensor) -> EventList:
    """Enumerate the nonzero positions of a spike tensor as sorted events."""
    a = s.data
    if a.ndim >= 2:
        flat = a.reshape(a.shape[0], -1)
    else:
        flat = a.reshape(1, -1)
    ts, idx = np.nonzero(flat)
    records = tuple(zip(ts.tolist(), idx.tolist()))
    return EventList(records=records, shape=tuple(a.shape))


def from_events(e: EventList) -> SpikeTensor:
    """Inverse of :func:`to_events`; reconstructs the exact spike tensor."""
    shape = e.shape
    if len(shape) >= 2:
        flat = np.zeros((shape[0], int(np.prod(shape[1:]))), dtype=np.uint8)
    else:
        flat = np.zeros((1, shape[0]), dtype=np.uint8)
    for t, i in e.records:
        flat[t, i] = 1
    return SpikeTensor(flat.reshape(shape))


def load_event_file(path, bins: int, resolution: tuple[int, int],
                    channels: int = 1) -> SpikeTensor:
    """Read a DVS-style text event stream and accumulate it into spike frames.

    Each line is ``timestamp_us,x,y,polarity`` (unsigned integers, polarity in
    {0, 1}). Events are split into ``bins`` equal-duration windows by
    timestamp and binarized per pixel: a pixel is 1 in a bin if at least one
    event fell there. With ``channels=2`` polarity selects the channel;
    with ``channels=1`` polarity is ignored.

    Returns a ``(T, 1, C, H, W)`` spike tensor. An empty file yields the
    all-zero tensor.
    """
    if bins < 1:
        raise ArgError(f"bins must be >= 1, got {bins}")
    if channels not in (1, 2):
        raise ValueError("channels must be 1 or 2")
    h, w = resolution
    events = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ParseError(f"expected 4 comma-separated fields, got {len(parts)}", lineno)
            try:
                ts, x, y, pol = (int(p) for p in parts)
            except ValueError:
                raise ParseError(f"non-integer field in {line!r}", lineno) from None
            if ts < 0 or x < 0 or y < 0:
                raise ParseError("fields must be unsigned", lineno)
            if pol not in (0, 1):
                raise ParseError(f"polarity must be 0 or 1, got {pol}", lineno)
            if x >= w or y >= h:
                raise ParseError(f"pixel ({x}, {y}) outside {w}x{h} sensor", lineno)
            events.append((ts, x, y, pol))

    frames = np.zeros((bins, 1, channels, h, w), dtype=np.uint8)
    if not events:
        return SpikeTensor(frames)

    t0 = min(e[0] for e in events)
    t1 = max(e[0] for e in events)
    span = t1 - t0
    for ts, x, y, pol in events:
        b = min(bins - 1, int((ts - t0) * bins / span)) if span > 0 else 0
        c = pol if channels == 2 else 0
        frames[b, 0, c, y, x] = 1
    return SpikeTensor(frames)


def check_same_shape(a, b, what: str = "operands"):
    if a.shape != b.shape:
        raise ShapeError(f"{what} must share a shape, got {a.shape} vs {b.shape}")
