"""File formats: binary captures, config files, CSV and PLY exports.

Every multi-byte value in the binary formats is little-endian. The
capture layout is:

    magic "MMVC" | uint32 version | uint8 view (0 left, 1 right)
    uint32 metadata length | metadata JSON (config + clock sample)
    uint32 frame count
    per frame: uint32 frame index | int64 local timestamp (ns)
               | complex64 samples, interleaved re/im float32,
                 C order over (rx, chirp, sample)

The clock sample is one (reference_ns, local_ns) reading pair taken at
capture start; offset calibration works from it downstream.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np
import yaml

from .types import (
    ConfigError,
    FrameCube,
    PointCloud,
    RadarConfig,
    VIEWS,
    validate_config,
)

CAPTURE_MAGIC = b"MMVC"
CAPTURE_VERSION = 1

CSV_COLUMNS = (
    "frame",
    "t",
    "view",
    "gate",
    "x",
    "y",
    "z",
    "v",
    "energy",
    "range",
    "az",
    "el",
)


class CaptureFormatError(ValueError):
    """Raised for malformed capture files."""


@dataclass(frozen=True)
class Capture:
    view: str
    config: RadarConfig
    frames: tuple
    clock_sample: tuple[int, int] | None = None


def write_capture(
    path,
    frames,
    config: RadarConfig,
    clock_sample: tuple[int, int] | None = None,
) -> None:
    """Write one stream of frames with its config embedded.

    Frames must all belong to one view, match the config's cube shape
    and carry nondecreasing local timestamps.
    """
    frames = tuple(frames)
    views = {f.view for f in frames}
    if len(views) > 1:
        raise ValueError(f"capture mixes views {sorted(views)}")
    view = frames[0].view if frames else VIEWS[0]
    if view not in VIEWS:
        raise ValueError(f"capture view must be one of {VIEWS}, got {view!r}")
    prev_ts = None
    for f in frames:
        if not f.matches(config):
            raise ValueError(
                f"frame {f.frame_index} shape {f.samples.shape} does not "
                "match the capture config"
            )
        if prev_ts is not None and f.local_timestamp_ns < prev_ts:
            raise ValueError(
                f"frame {f.frame_index} timestamp decreases within the stream"
            )
        prev_ts = f.local_timestamp_ns

    meta = {"config": config.to_dict(), "clock_sample": None}
    if clock_sample is not None:
        ref_ns, local_ns = clock_sample
        meta["clock_sample"] = {"reference_ns": int(ref_ns), "local_ns": int(local_ns)}
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")

    with open(path, "wb") as fh:
        fh.write(CAPTURE_MAGIC)
        fh.write(struct.pack("<I", CAPTURE_VERSION))
        fh.write(struct.pack("<B", VIEWS.index(view)))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(frames)))
        for f in frames:
            fh.write(struct.pack("<I", f.frame_index))
            fh.write(struct.pack("<q", f.local_timestamp_ns))
            fh.write(np.ascontiguousarray(f.samples, dtype="<c8").tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CaptureFormatError(f"truncated capture: short read in {what}")
    return buf


def read_capture(path) -> Capture:
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != CAPTURE_MAGIC:
            raise CaptureFormatError(
                f"bad magic {magic!r}, expected {CAPTURE_MAGIC!r}"
            )
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != CAPTURE_VERSION:
            raise CaptureFormatError(f"unsupported capture version {version}")
        (view_code,) = struct.unpack("<B", _read_exact(fh, 1, "view tag"))
        if view_code >= len(VIEWS):
            raise CaptureFormatError(f"unknown view code {view_code}")
        view = VIEWS[view_code]
        (meta_len,) = struct.unpack("<I", _read_exact(fh, 4, "metadata length"))
        try:
            meta = json.loads(_read_exact(fh, meta_len, "metadata").decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CaptureFormatError(f"bad capture metadata: {exc}") from None
        try:
            config = validate_config(RadarConfig.from_dict(meta["config"]))
        except (KeyError, TypeError, ConfigError) as exc:
            raise CaptureFormatError(f"bad embedded config: {exc}") from None
        clock_sample = None
        if meta.get("clock_sample") is not None:
            cs = meta["clock_sample"]
            clock_sample = (int(cs["reference_ns"]), int(cs["local_ns"]))

        (n_frames,) = struct.unpack("<I", _read_exact(fh, 4, "frame count"))
        shape = (config.rx_count, config.chirps_per_frame, config.samples_per_chirp)
        n_bytes = int(np.prod(shape)) * 8  # complex64
        frames = []
        prev_ts = None
        for k in range(n_frames):
            (frame_index,) = struct.unpack("<I", _read_exact(fh, 4, f"frame {k} index"))
            (ts,) = struct.unpack("<q", _read_exact(fh, 8, f"frame {k} timestamp"))
            if prev_ts is not None and ts < prev_ts:
                raise CaptureFormatError(
                    f"frame {frame_index} timestamp decreases within the stream"
                )
            prev_ts = ts
            raw = _read_exact(fh, n_bytes, f"frame {k} samples")
            samples = np.frombuffer(raw, dtype="<c8").reshape(shape)
            frames.append(
                FrameCube(
                    samples=samples,
                    view=view,
                    frame_index=frame_index,
                    local_timestamp_ns=ts,
                )
            )
        trailing = fh.read(1)
        if trailing:
            raise CaptureFormatError("trailing bytes after the last frame")
    return Capture(
        view=view, config=config, frames=tuple(frames), clock_sample=clock_sample
    )


# ---------------------------------------------------------------------------
# config files: YAML mapping mirroring RadarConfig field names
# ---------------------------------------------------------------------------


def load_config(path) -> RadarConfig:
    """Load and validate a config file.

    Keys mirror RadarConfig field names one-to-one; unspecified fields
    keep their defaults and unknown keys are errors.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config file must hold a key: value mapping")
    return validate_config(RadarConfig.from_dict(data))


def save_config(path, config: RadarConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=False)


# ---------------------------------------------------------------------------
# point cloud exports
# ---------------------------------------------------------------------------


def write_clouds_csv(path, clouds) -> None:
    """Write clouds as CSV, one row per point, fixed column order."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for cloud in clouds:
            t = cloud.timestamp_s
            t_text = repr(t) if t is not None else ""
            for p in cloud.points:
                x, y, z = p.position_m
                row = (
                    str(cloud.frame_index),
                    t_text,
                    p.view,
                    p.gate,
                    repr(x),
                    repr(y),
                    repr(z),
                    repr(p.radial_velocity_mps),
                    repr(p.energy),
                    repr(p.range_m),
                    repr(p.azimuth_rad),
                    repr(p.elevation_rad),
                )
                fh.write(",".join(row) + "\n")


PLY_PROPERTIES = ("x", "y", "z", "velocity", "energy")


def write_cloud_ply(path, cloud: PointCloud) -> None:
    """Write one cloud as binary little-endian PLY with velocity and
    energy as extra per-vertex properties."""
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {len(cloud)}"]
    header += [f"property float {name}" for name in PLY_PROPERTIES]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        for p in cloud.points:
            x, y, z = p.position_m
            fh.write(
                struct.pack("<5f", x, y, z, p.radial_velocity_mps, p.energy)
            )
