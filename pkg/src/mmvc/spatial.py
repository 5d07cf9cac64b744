"""Spatial processing: from a range-Doppler map to a one-view point cloud.

Pipeline per frame and view: per-range-bin energy compensation, range
gating into body-region bands, digital beamforming on the two antenna
pairs, relative-threshold detection, velocity-extreme selection down to
the fixed point budget, and projection into the head frame.
"""
from __future__ import annotations

import dataclasses
import functools
import math
from dataclasses import dataclass

import numpy as np

from .types import (
    BeamGrid,
    PointCloud,
    RadarConfig,
    RadarPoint,
    RadarPose,
    RangeDopplerMap,
    gate_tag,
    sentinel_point,
)


def energy_compensation(rd: RangeDopplerMap) -> RangeDopplerMap:
    """Equalise mean magnitude across range bins, per channel.

    For each channel, every range bin's cells are scaled by M / m where
    m is that bin's mean magnitude over the Doppler axis and M is the
    mean of m over the populated bins. Afterwards every populated bin
    has mean magnitude M, so near-range returns no longer drown far
    ones. Scaling is by a positive real, so phases are untouched, and
    applying the compensation twice changes nothing.

    All-zero bins (m = 0) are left unscaled and reported in
    ``zero_bins`` as (range bin, channel) pairs; restricting the
    reference mean M to populated bins is what keeps the operation
    idempotent in their presence.
    """
    cells = rd.cells
    m = np.abs(cells).mean(axis=1)  # (range bin, channel)
    populated = m > 0.0
    counts = populated.sum(axis=0)
    sums = np.where(populated, m, 0.0).sum(axis=0)
    ref = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    scale = np.where(populated, ref[None, :] / np.where(populated, m, 1.0), 1.0)
    out = cells * scale[:, None, :]
    zero_bins = tuple(
        (int(r), int(c)) for r, c in np.argwhere(~populated)
    )
    return dataclasses.replace(
        rd, cells=out, compensated=True, zero_bins=zero_bins
    )


def gate_bin_interval(
    bounds_m: tuple[float, float],
    bin_width_m: float,
    bin_count: int,
) -> tuple[int, int]:
    """Inclusive (first, last) range-bin interval for a gate.

    A bin belongs to the gate when its centre distance lies in
    [low, high); the half-open top keeps adjacent gates disjoint when a
    bound lands exactly on a bin centre. Raises for gates that fall
    outside the map or that contain no bin centre at all.
    """
    low, high = bounds_m
    if not (0 <= low < high):
        raise ValueError(f"bad gate bounds ({low}, {high})")
    eps = 1e-9
    first = math.ceil(low / bin_width_m - eps)
    last = math.ceil(high / bin_width_m - eps) - 1
    if first >= bin_count:
        raise ValueError(
            f"gate ({low}, {high}) lies outside the map extent "
            f"({bin_count * bin_width_m:.3f} m)"
        )
    if last < first:
        raise ValueError(f"empty gate: ({low}, {high}) contains no bin centre")
    return first, min(last, bin_count - 1)


def range_gate(
    rd: RangeDopplerMap,
    bounds_m: tuple[float, float],
    tag: str = "",
) -> RangeDopplerMap:
    """Zero every cell whose range-bin centre falls outside the gate."""
    first, last = gate_bin_interval(
        bounds_m, rd.range_bin_width_m, rd.cells.shape[0]
    )
    out = np.zeros_like(rd.cells)
    out[first : last + 1] = rd.cells[first : last + 1]
    return dataclasses.replace(rd, cells=out, gate=tag or rd.gate)


@functools.lru_cache(maxsize=16)
def _weights_cached(
    spacing_m: float, wavelength_m: float, max_steer_rad: float, beam_count: int
) -> np.ndarray:
    angles = np.linspace(-max_steer_rad, max_steer_rad, beam_count)
    ant = np.arange(2)[:, None]
    w = np.exp(1j * 2.0 * np.pi * (ant * spacing_m / wavelength_m) * np.sin(angles))
    w.setflags(write=False)
    return w


def dbf_weights(config: RadarConfig) -> np.ndarray:
    """Steering matrix W indexed (antenna in pair, beam).

    W(i, b) = exp(j * 2 pi * (i * spacing / lambda) * sin(theta_b)) for
    beams uniform across [-max_steer, +max_steer]. Row 0 is the shared
    corner antenna and is identically one.
    """
    return _weights_cached(
        config.antenna_spacing_m,
        config.center_wavelength_m,
        config.max_steer_rad,
        config.beam_count,
    )


def beamform(
    rd: RangeDopplerMap,
    weights: np.ndarray,
    config: RadarConfig,
) -> BeamGrid:
    """Sweep both antenna pairs over the beam set; combine as a product.

    Channels are grouped as azimuth pair (0, 1) and elevation pair
    (0, 2) sharing the corner antenna. Each pair is combined by
    delay-and-sum with the conjugated steering weights, so a source
    with a positive inter-antenna phase ramp peaks on the matching
    positive beam. The detection field is the element-wise product of
    the two pairs' response magnitudes over (azimuth beam, elevation
    beam).
    """
    cells = rd.cells
    if cells.shape[2] != 3:
        raise ValueError(
            f"beamforming expects 3 channels (corner, azimuth, elevation), "
            f"got {cells.shape[2]}"
        )
    if weights.shape != (2, config.beam_count):
        raise ValueError(
            f"weights shape {weights.shape} does not match (2, {config.beam_count})"
        )
    n_r, n_d, _ = cells.shape
    n_b = config.beam_count
    mags = np.zeros((n_r, n_d, n_b, n_b))
    # Rows of zeros (everything a gate removed) stay zero without
    # spending beam sweeps on them.
    live = np.any(cells.reshape(n_r, -1) != 0, axis=1)
    if np.any(live):
        w1c = np.conj(weights[1])[None, None, :]
        sub = cells[live]
        az = sub[:, :, 0, None] * np.conj(weights[0])[None, None, :] + (
            sub[:, :, 1, None] * w1c
        )
        el = sub[:, :, 0, None] * np.conj(weights[0])[None, None, :] + (
            sub[:, :, 2, None] * w1c
        )
        mags[live] = np.abs(az)[:, :, :, None] * np.abs(el)[:, :, None, :]
    return BeamGrid(
        magnitudes=mags,
        beam_angles_rad=tuple(config.beam_angles_rad),
        gate=rd.gate or "",
        range_bin_width_m=rd.range_bin_width_m,
        velocity_bin_width_mps=rd.velocity_bin_width_mps,
        view=rd.view,
        frame_index=rd.frame_index,
        calibrated_timestamp_ns=rd.calibrated_timestamp_ns,
    )


@dataclass(frozen=True, eq=False)
class Candidates:
    """Columnar list of detected cells from one (view, gate) grid."""

    range_bins: np.ndarray
    doppler_bins: np.ndarray
    azimuth_bins: np.ndarray
    elevation_bins: np.ndarray
    ranges_m: np.ndarray
    velocities_mps: np.ndarray
    azimuths_rad: np.ndarray
    elevations_rad: np.ndarray
    energies: np.ndarray
    view: str
    gate: str

    def __len__(self) -> int:
        return len(self.energies)

    @classmethod
    def empty(cls, view: str, gate: str) -> "Candidates":
        z = np.zeros(0)
        zi = np.zeros(0, dtype=int)
        return cls(zi, zi, zi, zi, z, z, z, z, z, view, gate)

    def take(self, indices) -> "Candidates":
        idx = np.asarray(indices, dtype=int)
        return Candidates(
            self.range_bins[idx],
            self.doppler_bins[idx],
            self.azimuth_bins[idx],
            self.elevation_bins[idx],
            self.ranges_m[idx],
            self.velocities_mps[idx],
            self.azimuths_rad[idx],
            self.elevations_rad[idx],
            self.energies[idx],
            self.view,
            self.gate,
        )


def detect_points(grid: BeamGrid, config: RadarConfig) -> Candidates:
    """Keep cells within ``detect_threshold_db`` of the grid's peak.

    The reference is the peak magnitude of the given (already gated)
    grid, so detection is insensitive to absolute scale. A cell is kept
    when 20*log10(magnitude / peak) exceeds the threshold; an all-zero
    grid yields no candidates.
    """
    mags = grid.magnitudes
    cell_peak = mags.max(axis=(2, 3)) if mags.size else np.zeros((0, 0))
    peak = cell_peak.max() if cell_peak.size else 0.0
    if peak <= 0.0:
        return Candidates.empty(grid.view, grid.gate)
    threshold = peak * 10.0 ** (config.detect_threshold_db / 20.0)
    # Scan beam pairs only inside cells whose own peak clears the
    # threshold; everything else cannot contribute. Candidate order
    # matches a row-major scan of the full grid.
    live_r, live_d = np.nonzero(cell_peak > threshold)
    sub = mags[live_r, live_d]
    sub_mask = sub > threshold
    cell, a, e = np.nonzero(sub_mask)
    r = live_r[cell]
    d = live_d[cell]
    angles = np.asarray(grid.beam_angles_rad)
    centre = grid.zero_velocity_bin
    return Candidates(
        range_bins=r,
        doppler_bins=d,
        azimuth_bins=a,
        elevation_bins=e,
        ranges_m=r * grid.range_bin_width_m,
        velocities_mps=(d - centre) * grid.velocity_bin_width_mps,
        azimuths_rad=angles[a],
        elevations_rad=angles[e],
        energies=sub[sub_mask],
        view=grid.view,
        gate=grid.gate,
    )


def select_by_velocity(
    candidates: Candidates, config: RadarConfig
) -> tuple[Candidates, int]:
    """Pick the velocity extremes down to exactly 2 * point_budget rows.

    Candidates are totally ordered by signed velocity with ties broken
    by higher energy, then lower range, then lexicographic (azimuth,
    elevation) beam index; the lowest and highest ``point_budget``
    entries of that order are kept. Short candidate lists keep
    everything and pad by repeating the highest-energy candidate; the
    returned count is how many trailing rows are pad repeats. An empty
    input returns an empty selection with a full pad count (the caller
    emits all-zero sentinels).
    """
    budget = 2 * config.point_budget
    n = len(candidates)
    if n == 0:
        return candidates, budget
    order = np.lexsort(
        (
            candidates.elevation_bins,
            candidates.azimuth_bins,
            candidates.range_bins,
            -candidates.energies,
            candidates.doppler_bins,
        )
    )
    if n >= budget:
        chosen = np.concatenate(
            [order[: config.point_budget], order[-config.point_budget :]]
        )
        return candidates.take(chosen), 0
    pad_count = budget - n
    ordered_energy = candidates.energies[order]
    best = order[int(np.argmax(ordered_energy == candidates.energies.max()))]
    chosen = np.concatenate([order, np.full(pad_count, best, dtype=int)])
    return candidates.take(chosen), pad_count


def project_to_cartesian(
    range_m: float,
    azimuth_rad: float,
    elevation_rad: float,
    pose: RadarPose,
    max_angle_rad: float = math.pi / 4,
) -> np.ndarray:
    """Head-frame position of a (range, azimuth, elevation) detection.

    The sensor-frame direction is (sin az cos el, sin el, cos az cos el);
    the pose rotates and translates it into the head frame. Angles
    beyond the steering field of view are rejected.
    """
    if range_m < 0:
        raise ValueError(f"negative range {range_m}")
    tol = 1e-9
    if abs(azimuth_rad) > max_angle_rad + tol or abs(elevation_rad) > max_angle_rad + tol:
        raise ValueError(
            f"angles ({azimuth_rad:.4f}, {elevation_rad:.4f}) rad fall outside "
            f"the +-{max_angle_rad:.4f} rad field of view"
        )
    direction = np.array(
        [
            math.sin(azimuth_rad) * math.cos(elevation_rad),
            math.sin(elevation_rad),
            math.cos(azimuth_rad) * math.cos(elevation_rad),
        ]
    )
    return pose.sensor_to_head(range_m * direction)


def extract_point_cloud(
    rd: RangeDopplerMap,
    pose: RadarPose,
    config: RadarConfig,
    weights: np.ndarray | None = None,
) -> PointCloud:
    """Full spatial chain for one view: gates, beams, detection, budget.

    Returns exactly ``2 * point_budget`` points per configured gate,
    padding under-populated gates (all-zero sentinels if a gate had no
    detections at all). Point positions are head-frame coordinates via
    ``pose``; velocities, ranges and angles stay sensor-relative.
    """
    if weights is None:
        weights = dbf_weights(config)
    points: list[RadarPoint] = []
    pad_total = 0
    for i, bounds in enumerate(config.gate_bounds_m):
        tag = gate_tag(i)
        gated = range_gate(rd, bounds, tag)
        grid = beamform(gated, weights, config)
        cands = detect_points(grid, config)
        selected, pad_count = select_by_velocity(cands, config)
        pad_total += pad_count
        if len(selected) == 0:
            points.extend(
                sentinel_point(rd.view, tag) for _ in range(2 * config.point_budget)
            )
            continue
        n_real = len(selected) - pad_count
        for k in range(len(selected)):
            position = project_to_cartesian(
                float(selected.ranges_m[k]),
                float(selected.azimuths_rad[k]),
                float(selected.elevations_rad[k]),
                pose,
                max_angle_rad=config.max_steer_rad,
            )
            points.append(
                RadarPoint(
                    position_m=tuple(float(v) for v in position),
                    radial_velocity_mps=float(selected.velocities_mps[k]),
                    energy=float(selected.energies[k]),
                    range_m=float(selected.ranges_m[k]),
                    azimuth_rad=float(selected.azimuths_rad[k]),
                    elevation_rad=float(selected.elevations_rad[k]),
                    view=rd.view,
                    gate=tag,
                    is_pad=k >= n_real,
                )
            )
    return PointCloud(
        points=tuple(points),
        view=rd.view,
        frame_index=rd.frame_index,
        timestamp_ns=rd.calibrated_timestamp_ns,
        pad_count=pad_total,
        degraded=False,
    )
