"""Illumination sampling policies: dense, sparse, and event-guided.

The event-guided policy turns guide-camera activity into projector regions
of interest: median-filter the event frame, binarize, extract 8-connected
components, and dilate each component's bounding box. Pixels inside a region
are scanned densely; the rest of the field of view keeps a sparse background
stride.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import ndimage

from .events import EventFrame


@dataclass(frozen=True)
class DensePolicy:
    """Illuminate every projector pixel."""


@dataclass(frozen=True)
class SparsePolicy:
    """Illuminate every Nth pixel.

    ``grid`` switches from the default 1-D raster-index stride (every Nth
    slot of the row-major scan, the reading under which the dwell time is
    exactly N times the dense dwell) to a 2-D grid (every Nth column of
    every Nth row).
    """

    stride: int = 16
    grid: bool = False

    def __post_init__(self):
        if self.stride < 1:
            raise ValueError("stride must be >= 1")


@dataclass(frozen=True)
class EventGuidedPolicy:
    median_kernel_px: int = 3
    active_threshold: int = 1
    min_area_px: int = 4
    dilation_px: int = 4
    background_stride: int = 16
    first_period: str = "dense"  # fallback while no guide events exist yet

    def __post_init__(self):
        if self.median_kernel_px < 1 or self.median_kernel_px % 2 == 0:
            raise ValueError("median_kernel_px must be odd and >= 1")
        if self.active_threshold < 1:
            raise ValueError("active_threshold must be >= 1")
        if self.min_area_px < 1:
            raise ValueError("min_area_px must be >= 1")
        if self.dilation_px < 0:
            raise ValueError("dilation_px must be >= 0")
        if self.background_stride < 1:
            raise ValueError("background_stride must be >= 1")
        if self.first_period not in ("dense", "sparse"):
            raise ValueError("first_period must be 'dense' or 'sparse'")


Policy = Union[DensePolicy, SparsePolicy, EventGuidedPolicy]


@dataclass(frozen=True)
class IlluminationMask:
    """Per-projector-pixel on/off pattern for one scan period."""

    resolution: tuple[int, int]
    on: np.ndarray  # (H, W) bool

    def __post_init__(self):
        w, h = self.resolution
        on = np.asarray(self.on, dtype=bool)
        if on.shape != (h, w):
            raise ValueError("mask shape must be (height, width)")
        on = on.copy()
        on.flags.writeable = False
        object.__setattr__(self, "on", on)

    @property
    def fraction(self) -> float:
        """On-pixel count over total pixels; doubles as the power proxy."""
        w, h = self.resolution
        return float(self.on.sum()) / (w * h)


@dataclass(frozen=True)
class RoiSet:
    """Axis-aligned boxes (x_min, y_min, x_max, y_max), inclusive, in-frame."""

    boxes: tuple[tuple[int, int, int, int], ...]

    def __post_init__(self):
        for box in self.boxes:
            x0, y0, x1, y1 = box
            if x1 < x0 or y1 < y0:
                raise ValueError(f"degenerate box {box!r}")
        object.__setattr__(self, "boxes", tuple(tuple(int(v) for v in b) for b in self.boxes))

    def __len__(self) -> int:
        return len(self.boxes)


def median_filter_frame(frame: EventFrame, kernel_px: int = 3) -> EventFrame:
    """Median of the k x k count neighborhood per pixel; borders zero-padded."""
    if kernel_px < 1 or kernel_px % 2 == 0:
        raise ValueError("kernel size must be odd and >= 1")
    if kernel_px == 1:
        return frame
    filtered = ndimage.median_filter(frame.counts, size=kernel_px, mode="constant", cval=0)
    return EventFrame(frame.resolution, filtered, frame.window)


_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


def detect_roi(
    frame: EventFrame,
    active_threshold: int = 1,
    min_area_px: int = 1,
    dilation_px: int = 0,
) -> RoiSet:
    """Bounding boxes of 8-connected active components, dilated and clipped.

    A pixel is active when its count reaches ``active_threshold``; components
    smaller than ``min_area_px`` are discarded as specks.
    """
    if active_threshold < 1:
        raise ValueError("active_threshold must be >= 1")
    w, h = frame.resolution
    binary = frame.counts >= active_threshold
    labels, n = ndimage.label(binary, structure=_EIGHT_CONNECTED)
    if n == 0:
        return RoiSet(())
    areas = np.bincount(labels.ravel(), minlength=n + 1)
    boxes = []
    for label, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None or areas[label] < min_area_px:
            continue
        ys, xs = sl
        boxes.append((
            max(xs.start - dilation_px, 0),
            max(ys.start - dilation_px, 0),
            min(xs.stop - 1 + dilation_px, w - 1),
            min(ys.stop - 1 + dilation_px, h - 1),
        ))
    return RoiSet(tuple(boxes))


def _stride_mask(resolution: tuple[int, int], stride: int, grid: bool = False) -> np.ndarray:
    w, h = resolution
    if grid:
        on = np.zeros((h, w), dtype=bool)
        on[::stride, ::stride] = True
        return on
    flat = np.arange(w * h) % stride == 0
    return flat.reshape(h, w)


def scale_roi(box: tuple[int, int, int, int], scale: tuple[float, float], resolution: tuple[int, int]):
    """Map an inclusive pixel box through a per-axis scale, covering conservatively."""
    sx, sy = scale
    w, h = resolution
    x0, y0, x1, y1 = box
    return (
        min(max(int(np.floor(x0 * sx)), 0), w - 1),
        min(max(int(np.floor(y0 * sy)), 0), h - 1),
        min(max(int(np.ceil((x1 + 1) * sx)) - 1, 0), w - 1),
        min(max(int(np.ceil((y1 + 1) * sy)) - 1, 0), h - 1),
    )


def build_mask(
    policy: Policy,
    proj_resolution: tuple[int, int],
    rois: RoiSet | None = None,
    scale: tuple[float, float] = (1.0, 1.0),
) -> IlluminationMask:
    """Compute the illumination mask for one scan period.

    ``scale`` maps guide-camera pixel coordinates onto the projector plane
    (rectified, axis-aligned). For the event-guided policy, pixels inside any
    scaled region are on; elsewhere the background stride applies. A pixel on
    a region border is on (region membership wins over the stride pattern).
    """
    w, h = proj_resolution
    if isinstance(policy, DensePolicy):
        on = np.ones((h, w), dtype=bool)
    elif isinstance(policy, SparsePolicy):
        on = _stride_mask(proj_resolution, policy.stride, policy.grid)
    elif isinstance(policy, EventGuidedPolicy):
        on = _stride_mask(proj_resolution, policy.background_stride)
        for box in (rois.boxes if rois is not None else ()):
            x0, y0, x1, y1 = scale_roi(box, scale, proj_resolution)
            on[y0:y1 + 1, x0:x1 + 1] = True
    else:
        raise TypeError(f"unknown policy {policy!r}")
    return IlluminationMask(proj_resolution, on)


def active_pixel_fraction(frame: EventFrame, active_threshold: int = 1) -> float:
    """Fraction of pixels whose event count reaches the threshold."""
    if active_threshold < 1:
        raise ValueError("active_threshold must be >= 1")
    w, h = frame.resolution
    return float((frame.counts >= active_threshold).sum()) / (w * h)
