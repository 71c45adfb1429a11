"""Synthetic scene engine and the guide event camera.

Scenes are a textured background plane plus axis-aligned rectangles moving in
a fronto-parallel plane. The guide camera renders the scene at a fixed
internal rate, tracks a per-pixel reference log-intensity, and emits an event
whenever the log intensity crosses a multiple of the contrast threshold,
with the inter-frame crossing time recovered by linear interpolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .events import DepthMap, EventStream


@dataclass(frozen=True)
class CheckerTexture:
    """Two-level checkerboard used to texture the background plane."""

    tile_px: int = 16
    low: float = 0.4
    high: float = 0.6

    def __post_init__(self):
        if self.tile_px < 1:
            raise ValueError("tile_px must be >= 1")
        if not (0 < self.low <= 1 and 0 < self.high <= 1):
            raise ValueError("texture intensities must lie in (0, 1]")


@dataclass(frozen=True)
class Background:
    depth_m: float
    intensity: float = 0.5
    checker: CheckerTexture | None = None

    def __post_init__(self):
        if self.depth_m <= 0:
            raise ValueError("background depth must be positive")
        if not (0 < self.intensity <= 1):
            raise ValueError("background intensity must lie in (0, 1]")

    def intensity_image(self, resolution: tuple[int, int]) -> np.ndarray:
        w, h = resolution
        if self.checker is None:
            return np.full((h, w), self.intensity)
        yy, xx = np.mgrid[0:h, 0:w]
        parity = (xx // self.checker.tile_px + yy // self.checker.tile_px) % 2
        return np.where(parity == 0, self.checker.low, self.checker.high).astype(np.float64)


@dataclass(frozen=True)
class MovingObject:
    """Axis-aligned rectangle translating at constant pixel velocity.

    Position is (x0 + vx * t, y0 + vy * t) at scene time t (microseconds),
    rounded to the nearest pixel at render time. The rectangle may leave the
    frame; rendering clips.
    """

    x0: float
    y0: float
    width: int
    height: int
    velocity: tuple[float, float] = (0.0, 0.0)
    depth_m: float = 1.0
    intensity: float = 0.9

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("object width/height must be >= 1")
        if self.depth_m <= 0:
            raise ValueError("object depth must be positive")
        if not (0 < self.intensity <= 1):
            raise ValueError("object intensity must lie in (0, 1]")


@dataclass(frozen=True)
class SceneScript:
    resolution: tuple[int, int]
    duration_us: float
    background: Background
    objects: tuple[MovingObject, ...] = ()

    def __post_init__(self):
        w, h = self.resolution
        if w < 1 or h < 1:
            raise ValueError(f"invalid resolution {self.resolution!r}")
        if self.duration_us < 0:
            raise ValueError("duration must be non-negative")
        for i, obj in enumerate(self.objects):
            if not obj.depth_m < self.background.depth_m:
                raise ValueError(f"objects[{i}]: object depth must be in front of the background")
        object.__setattr__(self, "objects", tuple(self.objects))


@dataclass(frozen=True)
class GuideCameraModel:
    """Threshold model of the guide event camera.

    ``contrast_threshold`` is the log-intensity step per event. The camera
    renders the scene at ``render_rate_hz`` to detect crossings.
    ``noise_rate_hz`` adds uniformly distributed spurious events per pixel
    per second (zero by default).
    """

    contrast_threshold: float = 0.3
    render_rate_hz: float = 1000.0
    noise_rate_hz: float = 0.0

    def __post_init__(self):
        if self.contrast_threshold <= 0:
            raise ValueError("contrast_threshold must be positive")
        if self.render_rate_hz <= 0:
            raise ValueError("render_rate_hz must be positive")
        if self.noise_rate_hz < 0:
            raise ValueError("noise_rate_hz must be non-negative")


def render_scene(script: SceneScript, t_us: float) -> tuple[np.ndarray, DepthMap]:
    """Render per-pixel intensity and metric depth at scene time ``t_us``.

    Objects are painted over the background farthest-first, so the nearest
    object wins where rectangles overlap.
    """
    if not (0.0 <= t_us <= script.duration_us):
        raise ValueError(f"t={t_us} outside scene duration [0, {script.duration_us}]")
    w, h = script.resolution
    intensity = script.background.intensity_image(script.resolution).copy()
    depth = np.full((h, w), script.background.depth_m)
    for obj in sorted(script.objects, key=lambda o: -o.depth_m):
        x0 = int(math.floor(obj.x0 + obj.velocity[0] * t_us + 0.5))
        y0 = int(math.floor(obj.y0 + obj.velocity[1] * t_us + 0.5))
        xa, xb = max(x0, 0), min(x0 + obj.width, w)
        ya, yb = max(y0, 0), min(y0 + obj.height, h)
        if xa < xb and ya < yb:
            intensity[ya:yb, xa:xb] = obj.intensity
            depth[ya:yb, xa:xb] = obj.depth_m
    return intensity, DepthMap(script.resolution, depth, np.ones((h, w), dtype=bool))


def _render_times(t0: float, t1: float, step_us: float) -> np.ndarray:
    n = int(math.ceil((t1 - t0) / step_us))
    times = t0 + step_us * np.arange(n + 1)
    times[-1] = t1
    if n >= 1 and times[-2] >= t1:
        times = times[:-1]
        times[-1] = t1
    return times


def generate_guide_events(
    script: SceneScript,
    camera: GuideCameraModel,
    interval: tuple[float, float],
    seed: int = 0,
) -> EventStream:
    """Emit brightness-change events for ``interval`` (half-open).

    Per pixel the camera keeps a reference log-intensity; at each internal
    render step it emits floor(|dL| / C) events of sign(dL), where dL is the
    change relative to the reference, then advances the reference by the
    emitted multiple of C. Event timestamps are placed where the linear
    intensity ramp crosses each successive threshold level.
    """
    t0, t1 = interval
    if not (0.0 <= t0 <= t1 <= script.duration_us):
        raise ValueError(f"interval ({t0}, {t1}) outside scene duration")
    if t1 <= t0:
        return EventStream.empty(script.resolution)

    c = camera.contrast_threshold
    step_us = 1e6 / camera.render_rate_hz
    times = _render_times(t0, t1, step_us)

    ref = np.log(render_scene(script, times[0])[0])
    ts_parts: list[np.ndarray] = []
    xs_parts: list[np.ndarray] = []
    ys_parts: list[np.ndarray] = []
    ps_parts: list[np.ndarray] = []

    for t_prev, t_cur in zip(times[:-1], times[1:]):
        cur = np.log(render_scene(script, t_cur)[0])
        dl = cur - ref
        mag = np.abs(dl)
        cnt = np.floor(mag / c).astype(np.int64)
        ys, xs = np.nonzero(cnt)
        if len(ys):
            n_px = cnt[ys, xs]
            sign = np.sign(dl[ys, xs])
            # per-event crossing index j = 1..n within each firing pixel
            total = int(n_px.sum())
            rep = np.repeat(np.arange(len(ys)), n_px)
            j = np.arange(total) - np.repeat(np.cumsum(n_px) - n_px, n_px) + 1
            frac = (j * c) / mag[ys, xs][rep]
            ts_parts.append(t_prev + (t_cur - t_prev) * frac)
            xs_parts.append(xs[rep].astype(np.int32))
            ys_parts.append(ys[rep].astype(np.int32))
            ps_parts.append(sign[rep].astype(np.int8))
            ref[ys, xs] += sign * n_px * c

    if camera.noise_rate_hz > 0:
        w, h = script.resolution
        rng = np.random.default_rng((seed, int(round(t0 * 1000)), 0xD1CE))
        lam = camera.noise_rate_hz * w * h * (t1 - t0) * 1e-6
        n_noise = int(rng.poisson(lam))
        if n_noise:
            ts_parts.append(rng.uniform(t0, t1, size=n_noise))
            xs_parts.append(rng.integers(0, w, size=n_noise, dtype=np.int32))
            ys_parts.append(rng.integers(0, h, size=n_noise, dtype=np.int32))
            ps_parts.append(rng.choice(np.array([-1, 1], dtype=np.int8), size=n_noise))

    if not ts_parts:
        return EventStream.empty(script.resolution)
    t = np.concatenate(ts_parts)
    x = np.concatenate(xs_parts)
    y = np.concatenate(ys_parts)
    p = np.concatenate(ps_parts)
    keep = t < t1  # a crossing exactly at the interval end belongs to the next window
    return EventStream.from_arrays(script.resolution, t[keep], x[keep], y[keep], p[keep], sort=True)
