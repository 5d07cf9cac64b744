"""Two-view mmWave radar capture, processing, and fusion toolkit.

The pipeline runs raw chirp cubes through motion filtering, range and
Doppler FFTs, energy compensation, range gating, digital beamforming,
and velocity-ordered point selection, then aligns the two sensor
streams on a shared clock and packs fused point clouds into fixed-shape
feature tensors.
"""
from .fusion import (
    AlignedWindow,
    ClockOffset,
    PairedFrame,
    PairingResult,
    TensorFormatError,
    assemble_feature_tensor,
    calibrate_timestamps,
    cloud_feature_rows,
    compute_offset,
    gate_windows,
    merge_views,
    offset_from_clock_sample,
    pair_views,
    read_feature_tensor,
    write_feature_tensor,
)
from .io_files import (
    Capture,
    CaptureFormatError,
    load_config,
    read_capture,
    save_config,
    write_capture,
    write_cloud_ply,
    write_clouds_csv,
)
from .rdmap import (
    MtiState,
    MtiStateError,
    ProcessingOptions,
    clutter_removal,
    doppler_fft,
    dump_tensor,
    load_tensor,
    mti_filter,
    process_frame,
    range_fft,
    validate_options,
)
from .simulate import (
    SceneFormatError,
    ScattererTruth,
    SimulatedSession,
    load_scene,
    parse_scene,
    scatterer_truth,
    simulate_session,
    synthesize_frame,
)
from .spatial import (
    Candidates,
    beamform,
    dbf_weights,
    detect_points,
    energy_compensation,
    extract_point_cloud,
    gate_bin_interval,
    project_to_cartesian,
    range_gate,
    select_by_velocity,
)
from .types import (
    C_LIGHT,
    BeamGrid,
    ClockModel,
    ConfigError,
    FrameCube,
    PointCloud,
    RadarConfig,
    RadarPoint,
    RadarPose,
    RangeDopplerMap,
    Scatterer,
    ScatterScene,
    Trajectory,
    default_pose_pair,
    mirror_pose,
    sentinel_point,
    validate_config,
)

__version__ = "0.1.0"

__all__ = [
    "AlignedWindow",
    "BeamGrid",
    "C_LIGHT",
    "Candidates",
    "Capture",
    "CaptureFormatError",
    "ClockModel",
    "ClockOffset",
    "ConfigError",
    "FrameCube",
    "MtiState",
    "MtiStateError",
    "PairedFrame",
    "PairingResult",
    "PointCloud",
    "ProcessingOptions",
    "RadarConfig",
    "RadarPoint",
    "RadarPose",
    "RangeDopplerMap",
    "ScatterScene",
    "Scatterer",
    "ScattererTruth",
    "SceneFormatError",
    "SimulatedSession",
    "TensorFormatError",
    "Trajectory",
    "assemble_feature_tensor",
    "beamform",
    "calibrate_timestamps",
    "cloud_feature_rows",
    "clutter_removal",
    "compute_offset",
    "dbf_weights",
    "default_pose_pair",
    "detect_points",
    "doppler_fft",
    "dump_tensor",
    "energy_compensation",
    "extract_point_cloud",
    "gate_bin_interval",
    "gate_windows",
    "load_config",
    "load_scene",
    "load_tensor",
    "merge_views",
    "mirror_pose",
    "mti_filter",
    "offset_from_clock_sample",
    "pair_views",
    "parse_scene",
    "process_frame",
    "project_to_cartesian",
    "range_fft",
    "range_gate",
    "read_capture",
    "read_feature_tensor",
    "save_config",
    "scatterer_truth",
    "select_by_velocity",
    "sentinel_point",
    "simulate_session",
    "synthesize_frame",
    "validate_config",
    "validate_options",
    "write_capture",
    "write_cloud_ply",
    "write_clouds_csv",
    "write_feature_tensor",
    "__version__",
]
