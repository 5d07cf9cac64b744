"""Per-frame range-Doppler processing.

Stage order is fixed: background subtraction (MTI) on raw samples,
range FFT over the sample axis, static clutter removal on the range
spectrum, Doppler FFT over the chirp axis. Each stage is optional via
``ProcessingOptions`` but can never be reordered; the options
validator rejects any other arrangement.

The forward FFTs are unnormalised (the 1/N factor lives on the inverse
only) and both axes use a Hann window by default.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import FrameCube, RadarConfig, RangeDopplerMap

STAGE_ORDER = ("mti", "range_fft", "clutter", "doppler_fft")
MTI_MODES = ("ema", "mean")


class MtiStateError(ValueError):
    """Raised when a frame does not fit the accumulated filter state."""


@dataclass(frozen=True)
class ProcessingOptions:
    """Which optional stages run; order itself is not configurable."""

    apply_mti: bool = True
    mti_mode: str = "ema"
    apply_clutter_removal: bool = True
    apply_compensation: bool = True
    apply_window: bool = True
    stage_order: tuple[str, ...] = STAGE_ORDER


def validate_options(options: ProcessingOptions) -> ProcessingOptions:
    """Reject invalid or reordered stage configurations."""
    if options.mti_mode not in MTI_MODES:
        raise ValueError(
            f"options: mti_mode must be one of {MTI_MODES}, got {options.mti_mode!r}"
        )
    order = tuple(options.stage_order)
    if order != STAGE_ORDER:
        if set(order) == set(STAGE_ORDER) and order.index("clutter") < order.index(
            "range_fft"
        ):
            raise ValueError(
                "options: clutter removal operates on the range spectrum and "
                "cannot precede the range FFT"
            )
        raise ValueError(
            f"options: stage_order must be {STAGE_ORDER}, got {order}"
        )
    return options


@dataclass(frozen=True)
class MtiState:
    """Ring of the most recent raw frames, oldest first.

    The state is a value object: ``mti_filter`` returns an updated copy
    rather than mutating, so a stream must be filtered in frame order
    by a single writer but states may be kept or replayed freely.
    """

    ring: tuple = ()

    @property
    def frames_seen(self) -> bool:
        return len(self.ring) > 0


def _window(n: int) -> np.ndarray:
    # Symmetric Hann without the zeroed end samples.
    return np.hanning(n + 2)[1:-1]


def _background(ring, alpha: float, mode: str) -> np.ndarray:
    if mode == "mean":
        return np.mean(ring, axis=0)
    # Exponential average folded across the retained history, seeded by
    # the oldest retained frame: b <- alpha * x + (1 - alpha) * b. The
    # weights sum to one, so a static scene cancels exactly.
    b = ring[0]
    for cube in ring[1:]:
        b = alpha * cube + (1.0 - alpha) * b
    return b


def mti_filter(
    frame: FrameCube,
    state: MtiState,
    config: RadarConfig,
    mode: str = "ema",
) -> tuple[FrameCube, MtiState]:
    """Subtract the moving-target-indication background from one frame.

    Output is ``frame - background`` where the background is either the
    exponential average (``mode="ema"``, default) or the plain mean
    (``mode="mean"``) of the last ``mti_history`` raw frames. The very
    first frame seeds the background and comes back all zero. The state
    is updated after subtraction, so the background never contains the
    current frame.
    """
    if mode not in MTI_MODES:
        raise ValueError(f"mti mode must be one of {MTI_MODES}, got {mode!r}")
    x = frame.samples.astype(np.complex128)
    if state.ring and state.ring[0].shape != x.shape:
        raise MtiStateError(
            f"frame shape {x.shape} does not match filter state "
            f"{state.ring[0].shape}"
        )
    if not state.ring:
        filtered = np.zeros_like(x)
    else:
        filtered = x - _background(state.ring, config.mti_alpha, mode)
    new_ring = (state.ring + (x,))[-config.mti_history :]
    out = FrameCube(
        samples=filtered.astype(np.complex64),
        view=frame.view,
        frame_index=frame.frame_index,
        local_timestamp_ns=frame.local_timestamp_ns,
        calibrated_timestamp_ns=frame.calibrated_timestamp_ns,
        aliased=frame.aliased,
    )
    return out, MtiState(ring=new_ring)


def range_fft(
    frame: FrameCube | np.ndarray,
    window: bool = True,
    keep_negative: bool = False,
) -> np.ndarray:
    """FFT over the sample axis; returns (rx, chirp, range bin).

    Only the positive-frequency half is kept (range is non-negative)
    unless ``keep_negative`` asks for the full spectrum, which is
    useful for checking conjugate symmetry and energy conservation.
    """
    x = frame.samples if isinstance(frame, FrameCube) else np.asarray(frame)
    x = x.astype(np.complex128)
    if window:
        x = x * _window(x.shape[2])[None, None, :]
    spec = np.fft.fft(x, axis=2)
    if keep_negative:
        return spec
    return spec[:, :, : x.shape[2] // 2]


def clutter_removal(spectrum: np.ndarray) -> np.ndarray:
    """Remove perfectly static returns from a range spectrum.

    Subtracts, per (rx, range bin), the complex mean over the chirp
    axis; anything with zero Doppler shift cancels exactly while moving
    energy is preserved up to its own chirp-mean.
    """
    spec = np.asarray(spectrum)
    return spec - spec.mean(axis=1, keepdims=True)


def doppler_fft(
    spectrum: np.ndarray,
    config: RadarConfig,
    window: bool = True,
    *,
    view: str = "",
    frame_index: int = 0,
    calibrated_timestamp_ns: int | None = None,
    mti_applied: bool = False,
    clutter_removed: bool = False,
) -> RangeDopplerMap:
    """FFT over the chirp axis, shifted so the centre bin is zero velocity.

    Input is a range spectrum indexed (rx, chirp, range bin); the
    resulting map is indexed (range bin, Doppler bin, rx) with receding
    targets above the centre bin.
    """
    spec = np.asarray(spectrum).astype(np.complex128)
    if window:
        spec = spec * _window(spec.shape[1])[None, :, None]
    cells = np.fft.fftshift(np.fft.fft(spec, axis=1), axes=1)
    cells = np.transpose(cells, (2, 1, 0))
    return RangeDopplerMap(
        cells=cells,
        range_bin_width_m=config.range_resolution_m,
        velocity_bin_width_mps=config.velocity_resolution_mps,
        view=view,
        frame_index=frame_index,
        calibrated_timestamp_ns=calibrated_timestamp_ns,
        mti_applied=mti_applied,
        clutter_removed=clutter_removed,
    )


def process_frame(
    frame: FrameCube,
    state: MtiState,
    config: RadarConfig,
    options: ProcessingOptions = ProcessingOptions(),
) -> tuple[RangeDopplerMap, MtiState]:
    """Run one frame through the fixed stage order.

    Returns the range-Doppler map with provenance flags recording which
    stages ran, plus the updated MTI state (unchanged when MTI is
    disabled). Deterministic: identical inputs give identical outputs.
    """
    validate_options(options)
    if not frame.matches(config):
        raise ValueError(
            f"frame shape {frame.samples.shape} does not match config "
            f"({config.rx_count}, {config.chirps_per_frame}, "
            f"{config.samples_per_chirp})"
        )
    if options.apply_mti:
        filtered, state = mti_filter(frame, state, config, mode=options.mti_mode)
    else:
        filtered = frame
    spectrum = range_fft(filtered, window=options.apply_window)
    if options.apply_clutter_removal:
        spectrum = clutter_removal(spectrum)
    rd = doppler_fft(
        spectrum,
        config,
        window=options.apply_window,
        view=frame.view,
        frame_index=frame.frame_index,
        calibrated_timestamp_ns=frame.calibrated_timestamp_ns,
        mti_applied=options.apply_mti,
        clutter_removed=options.apply_clutter_removal,
    )
    return rd, state


# ---------------------------------------------------------------------------
# debug tensor dump: shape header + little-endian complex values
# ---------------------------------------------------------------------------


def dump_tensor(path, array: np.ndarray) -> None:
    """Write any intermediate array as ndim, dims (uint32 LE), then
    complex128 little-endian values in C order."""
    arr = np.ascontiguousarray(array, dtype=np.complex128)
    with open(path, "wb") as fh:
        header = np.array([arr.ndim, *arr.shape], dtype="<u4")
        fh.write(header.tobytes())
        fh.write(arr.astype("<c16").tobytes())


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        ndim = int(np.frombuffer(fh.read(4), dtype="<u4")[0])
        shape = tuple(np.frombuffer(fh.read(4 * ndim), dtype="<u4"))
        data = np.frombuffer(fh.read(), dtype="<c16")
    return data.reshape(shape).astype(np.complex128)
