"""Event-guided structured-light depth sensing: simulator and analysis tools."""

from .events import (
    DepthMap,
    Event,
    EventFrame,
    EventStream,
    LogDepthCodec,
    TimeSurface,
    VoxelGrid,
    decode_log_depth,
    encode_log_depth,
    make_event_frame,
    make_time_surface,
    make_voxel_grid,
)
from .scene import (
    Background,
    CheckerTexture,
    GuideCameraModel,
    MovingObject,
    SceneScript,
    generate_guide_events,
    render_scene,
)
from .policy import (
    DensePolicy,
    EventGuidedPolicy,
    IlluminationMask,
    Policy,
    RoiSet,
    SparsePolicy,
    active_pixel_fraction,
    build_mask,
    detect_roi,
    median_filter_frame,
)
from .projector import (
    DEFAULT_JITTER_ANCHORS,
    NoiseModel,
    ProjectorModel,
    ScanPlan,
    SensorGeometry,
    SensorPreset,
    SENSOR_PRESETS,
    build_scan_plan,
    get_preset,
    pixel_dwell_time,
    raster_event_rate,
    simulate_reflection_events,
    timestamp_jitter_std,
)
from .depth import (
    DegenerateInputError,
    NonPositiveDisparityError,
    OutOfPeriodError,
    PlaneFit,
    PointCloud,
    decode_projector_indices,
    decode_projector_pixel,
    depth_to_points,
    fit_plane,
    inpaint_depth,
    reconstruct_depth,
    triangulate,
)
from .harness import (
    ConfigError,
    PeriodReport,
    Scenario,
    compare_sampling,
    load_scenario,
    parse_scenario,
    run_scenario,
    sweep_dwell_time,
    sweep_event_rate,
)

__version__ = "0.1.0"

__all__ = [
    "Background",
    "CheckerTexture",
    "ConfigError",
    "DEFAULT_JITTER_ANCHORS",
    "DegenerateInputError",
    "DensePolicy",
    "DepthMap",
    "Event",
    "EventFrame",
    "EventGuidedPolicy",
    "EventStream",
    "GuideCameraModel",
    "IlluminationMask",
    "LogDepthCodec",
    "MovingObject",
    "NoiseModel",
    "NonPositiveDisparityError",
    "OutOfPeriodError",
    "PeriodReport",
    "PlaneFit",
    "PointCloud",
    "Policy",
    "ProjectorModel",
    "RoiSet",
    "ScanPlan",
    "Scenario",
    "SceneScript",
    "SensorGeometry",
    "SensorPreset",
    "SENSOR_PRESETS",
    "SparsePolicy",
    "TimeSurface",
    "VoxelGrid",
    "active_pixel_fraction",
    "build_mask",
    "build_scan_plan",
    "compare_sampling",
    "decode_log_depth",
    "decode_projector_indices",
    "decode_projector_pixel",
    "depth_to_points",
    "detect_roi",
    "encode_log_depth",
    "fit_plane",
    "generate_guide_events",
    "get_preset",
    "inpaint_depth",
    "load_scenario",
    "make_event_frame",
    "make_time_surface",
    "make_voxel_grid",
    "median_filter_frame",
    "parse_scenario",
    "pixel_dwell_time",
    "raster_event_rate",
    "reconstruct_depth",
    "render_scene",
    "run_scenario",
    "simulate_reflection_events",
    "sweep_dwell_time",
    "sweep_event_rate",
    "timestamp_jitter_std",
    "triangulate",
]
