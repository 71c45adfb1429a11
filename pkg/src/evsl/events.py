"""Core event data types and windowed representations.

Timestamps are real-valued microseconds throughout, so sub-microsecond
raster steps and timing noise stay representable; quantization to a camera's
clock is an explicit step in the projector simulator. Every time window is
half-open, [t_start, t_end), so consecutive windows partition a stream
without double-counting boundary events.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple

import numpy as np


class Event(NamedTuple):
    """One sensor event: timestamp in microseconds, pixel column/row, polarity."""

    t: float
    x: int
    y: int
    p: int


def _frozen(a: np.ndarray) -> np.ndarray:
    a = a.copy()
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class EventStream:
    """Time-sorted events bound to a sensor resolution.

    Events are stored as parallel arrays (t: float64 microseconds, x/y: int32,
    p: int8 in {-1, +1}). Arrays are copied and marked read-only at
    construction; streams are plain values, safe to share across threads.
    """

    resolution: tuple[int, int]
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        w, h = self.resolution
        if w < 1 or h < 1:
            raise ValueError(f"invalid resolution {self.resolution!r}")
        t = np.asarray(self.t, dtype=np.float64).ravel()
        x = np.asarray(self.x, dtype=np.int32).ravel()
        y = np.asarray(self.y, dtype=np.int32).ravel()
        p = np.asarray(self.p, dtype=np.int8).ravel()
        if not (len(t) == len(x) == len(y) == len(p)):
            raise ValueError("event arrays must have equal length")
        if len(t):
            if t[0] < 0.0:
                raise ValueError("event timestamps must be non-negative")
            if np.any(np.diff(t) < 0.0):
                raise ValueError("event timestamps must be non-decreasing")
            if x.min() < 0 or x.max() >= w or y.min() < 0 or y.max() >= h:
                raise ValueError("event coordinates outside resolution")
            if not np.all(np.abs(p) == 1):
                raise ValueError("polarity must be -1 or +1")
        object.__setattr__(self, "resolution", (int(w), int(h)))
        object.__setattr__(self, "t", _frozen(t))
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "p", _frozen(p))

    @classmethod
    def empty(cls, resolution: tuple[int, int]) -> "EventStream":
        z = np.empty(0)
        return cls(resolution, z, z, z, z)

    @classmethod
    def from_events(cls, resolution: tuple[int, int], events: Iterable[Event]) -> "EventStream":
        evs = list(events)
        if not evs:
            return cls.empty(resolution)
        t = np.array([e.t for e in evs], dtype=np.float64)
        x = np.array([e.x for e in evs], dtype=np.int32)
        y = np.array([e.y for e in evs], dtype=np.int32)
        p = np.array([e.p for e in evs], dtype=np.int8)
        order = np.argsort(t, kind="stable")
        return cls(resolution, t[order], x[order], y[order], p[order])

    @classmethod
    def from_arrays(cls, resolution, t, x, y, p, sort: bool = True) -> "EventStream":
        t = np.asarray(t, dtype=np.float64)
        if sort and len(t) > 1:
            order = np.argsort(t, kind="stable")
            return cls(resolution, t[order], np.asarray(x)[order], np.asarray(y)[order], np.asarray(p)[order])
        return cls(resolution, t, x, y, p)

    @staticmethod
    def merge(streams: Iterable["EventStream"]) -> "EventStream":
        """Concatenate streams over the same resolution and re-sort by time."""
        streams = list(streams)
        if not streams:
            raise ValueError("nothing to merge")
        res = streams[0].resolution
        if any(s.resolution != res for s in streams):
            raise ValueError("streams have mismatched resolutions")
        t = np.concatenate([s.t for s in streams])
        x = np.concatenate([s.x for s in streams])
        y = np.concatenate([s.y for s in streams])
        p = np.concatenate([s.p for s in streams])
        return EventStream.from_arrays(res, t, x, y, p, sort=True)

    def window_indices(self, t_start: float, t_end: float) -> tuple[int, int]:
        """Index range [i0, i1) of events with t_start <= t < t_end."""
        i0 = int(np.searchsorted(self.t, t_start, side="left"))
        i1 = int(np.searchsorted(self.t, t_end, side="left"))
        return i0, i1

    def slice_window(self, t_start: float, t_end: float) -> "EventStream":
        i0, i1 = self.window_indices(t_start, t_end)
        return EventStream(self.resolution, self.t[i0:i1], self.x[i0:i1], self.y[i0:i1], self.p[i0:i1])

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self.t)):
            yield Event(float(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.p[i]))


@dataclass(frozen=True)
class EventFrame:
    """Per-pixel event counts accumulated over a time window."""

    resolution: tuple[int, int]
    counts: np.ndarray  # (H, W) int64
    window: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "counts", _frozen(np.asarray(self.counts, dtype=np.int64)))

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class TimeSurface:
    """Per-pixel timestamp of the most recent event in a window.

    Pixels without any event in the window hold NaN.
    """

    resolution: tuple[int, int]
    last_t: np.ndarray  # (H, W) float64, NaN where no event
    window: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "last_t", _frozen(np.asarray(self.last_t, dtype=np.float64)))

    @property
    def occupied(self) -> np.ndarray:
        return np.isfinite(self.last_t)


@dataclass(frozen=True)
class VoxelGrid:
    """Spatio-temporal event tensor with bilinear temporal binning."""

    bins: int
    values: np.ndarray  # (B, H, W) float64
    window: tuple[float, float]  # (t0, t0 + span)

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(np.asarray(self.values, dtype=np.float64)))


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel metric depth in meters plus a validity flag.

    Valid pixels must carry strictly positive, finite depth.
    """

    resolution: tuple[int, int]
    depth: np.ndarray  # (H, W) float64
    valid: np.ndarray  # (H, W) bool

    def __post_init__(self):
        w, h = self.resolution
        depth = np.asarray(self.depth, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if depth.shape != (h, w) or valid.shape != (h, w):
            raise ValueError("depth/valid shape must be (height, width)")
        object.__setattr__(self, "depth", _frozen(depth))
        object.__setattr__(self, "valid", _frozen(valid))

    @classmethod
    def constant(cls, resolution: tuple[int, int], depth_m: float) -> "DepthMap":
        w, h = resolution
        return cls(resolution, np.full((h, w), float(depth_m)), np.ones((h, w), dtype=bool))

    @classmethod
    def all_invalid(cls, resolution: tuple[int, int]) -> "DepthMap":
        w, h = resolution
        return cls(resolution, np.zeros((h, w)), np.zeros((h, w), dtype=bool))

    @property
    def valid_count(self) -> int:
        return int(self.valid.sum())


@dataclass(frozen=True)
class LogDepthCodec:
    """Normalized log-depth mapping between metric depth and [0, 1]-ish values.

    A depth d encodes to log(d / d_max) / alpha + 1, so d == d_max maps to
    exactly 1 and d == d_max * exp(-alpha) maps to 0.
    """

    alpha: float = 5.7
    d_max: float = 1000.0

    def __post_init__(self):
        if self.alpha <= 0 or self.d_max <= 0:
            raise ValueError("alpha and d_max must be positive")


def make_event_frame(stream: EventStream, window: tuple[float, float]) -> EventFrame:
    """Count events per pixel over [t_start, t_end)."""
    t0, t1 = window
    if t1 < t0:
        raise ValueError(f"invalid window ({t0}, {t1})")
    w, h = stream.resolution
    counts = np.zeros((h, w), dtype=np.int64)
    i0, i1 = stream.window_indices(t0, t1)
    np.add.at(counts, (stream.y[i0:i1], stream.x[i0:i1]), 1)
    return EventFrame(stream.resolution, counts, (float(t0), float(t1)))


def make_time_surface(stream: EventStream, window: tuple[float, float]) -> TimeSurface:
    """Keep, per pixel, the latest event timestamp within [t_start, t_end)."""
    t0, t1 = window
    if t1 < t0:
        raise ValueError(f"invalid window ({t0}, {t1})")
    w, h = stream.resolution
    last = np.full((h, w), -np.inf)
    i0, i1 = stream.window_indices(t0, t1)
    np.maximum.at(last, (stream.y[i0:i1], stream.x[i0:i1]), stream.t[i0:i1])
    last[~np.isfinite(last)] = np.nan
    return TimeSurface(stream.resolution, last, (float(t0), float(t1)))


def make_voxel_grid(stream: EventStream, window: tuple[float, float], bins: int = 5) -> VoxelGrid:
    """Accumulate polarities into temporal bins with a bilinear kernel.

    ``window`` is (t0, span). Each event lands at normalized time
    t* = (bins - 1) * (t - t0) / span and contributes p * max(0, 1 - |b - t*|)
    to bin b. Contributions falling outside [0, bins - 1] are clipped, so
    boundary bins only ever receive in-range weight.
    """
    if not isinstance(bins, (int, np.integer)) or bins < 2:
        raise ValueError("bins must be an integer >= 2")
    t0, span = window
    if span <= 0:
        raise ValueError("window span must be positive")
    w, h = stream.resolution
    values = np.zeros((bins, h, w))
    if len(stream):
        tstar = (bins - 1) / span * (stream.t - t0)
        i0 = np.floor(tstar).astype(np.int64)
        w1 = tstar - i0
        pol = stream.p.astype(np.float64)
        lo = (i0 >= 0) & (i0 <= bins - 1)
        np.add.at(values, (i0[lo], stream.y[lo], stream.x[lo]), pol[lo] * (1.0 - w1[lo]))
        hi = (i0 + 1 >= 0) & (i0 + 1 <= bins - 1) & (w1 > 0)
        np.add.at(values, (i0[hi] + 1, stream.y[hi], stream.x[hi]), pol[hi] * w1[hi])
    return VoxelGrid(int(bins), values, (float(t0), float(t0 + span)))


def encode_log_depth(depth_map: DepthMap, codec: LogDepthCodec = LogDepthCodec()) -> np.ndarray:
    """Encode metric depth to the normalized log scale; invalid pixels become NaN."""
    d = depth_map.depth
    valid = depth_map.valid
    if np.any(valid & ~(d > 0)):
        raise ValueError("valid pixels must have strictly positive depth")
    out = np.full(d.shape, np.nan)
    dv = d[valid]
    out[valid] = np.log(dv / codec.d_max) / codec.alpha + 1.0
    return out


def decode_log_depth(values: np.ndarray, codec: LogDepthCodec = LogDepthCodec()) -> DepthMap:
    """Invert :func:`encode_log_depth`; non-finite entries decode to invalid pixels."""
    values = np.asarray(values, dtype=np.float64)
    valid = np.isfinite(values)
    depth = np.zeros(values.shape)
    depth[valid] = codec.d_max * np.exp(codec.alpha * (values[valid] - 1.0))
    h, w = values.shape
    return DepthMap((w, h), depth, valid)
