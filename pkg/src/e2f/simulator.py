"""Contrast-threshold event simulator and the event-to-residual oracle.

Each pixel tracks a reference level; whenever the linearly-interpolated
intensity moves a full threshold away from it, one event fires and the
reference advances by one threshold. Sub-threshold changes carry over, so
the signed event count times the threshold tracks the true inter-frame
intensity difference to within one threshold at every pixel.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from . import io, kernels
from .events import EventGroup, EventStream, EventVolume, FrameTimeline, stack_events

__all__ = [
    "SimConfig",
    "FrameSequence",
    "ResidualField",
    "simulate_events",
    "residual_from_events",
    "luminance",
    "load_frames",
    "save_frames",
    "save_pgm",
    "save_ppm",
    "load_pnm",
]

_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class SimConfig:
    """contrast_threshold is the intensity change per event (must be > 0)."""

    contrast_threshold: float
    per_channel: bool = False

    def __post_init__(self):
        if self.contrast_threshold <= 0:
            raise ValueError("contrast threshold must be positive")


@dataclass(frozen=True)
class FrameSequence:
    """(F, C, H, W) intensity frames with their timeline."""

    data: np.ndarray
    timeline: FrameTimeline

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        if data.ndim != 4:
            raise ValueError("frames must have shape (F, C, H, W)")
        if data.shape[0] != self.timeline.frames:
            raise ValueError("frame count does not match the timeline")

    def validate(self) -> None:
        """Full input validation: channel count, finiteness, [0, 1] range."""
        if self.data.shape[1] not in (1, 3):
            raise ValueError("channel count must be 1 or 3")
        if not np.isfinite(self.data).all():
            raise ValueError("frames contain non-finite values")
        if self.data.min() < 0.0 or self.data.max() > 1.0:
            raise ValueError("intensities must lie in [0, 1]")

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[2]

    @property
    def width(self) -> int:
        return self.data.shape[3]


@dataclass(frozen=True)
class ResidualField:
    """(F-1, C, H, W) predicted intensity differences between frames."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        if data.ndim != 4:
            raise ValueError("residuals must have shape (F-1, C, H, W)")

    @property
    def gaps(self) -> int:
        return self.data.shape[0]


def luminance(data: np.ndarray) -> np.ndarray:
    """Collapse (F, 3, H, W) to (F, H, W); single-channel input passes through."""
    if data.shape[1] == 1:
        return data[:, 0]
    return np.tensordot(_LUMA, data, axes=([0], [1]))


def simulate_events(frames: FrameSequence, config: SimConfig) -> EventStream:
    """Run the threshold model over a frame sequence.

    Multi-channel input is collapsed to luminance; per_channel simulation is
    only defined for single-channel sequences because an event record has no
    channel field.
    """
    frames.validate()
    if frames.frames < 2:
        raise ValueError("need at least two frames to emit events")
    if config.per_channel and frames.channels != 1:
        raise ValueError("per-channel simulation requires single-channel frames")
    intens = luminance(frames.data)
    flat = np.ascontiguousarray(intens.reshape(frames.frames, -1))
    ts, pix, pol = kernels.simulate(flat, frames.timeline.timestamps,
                                    config.contrast_threshold)
    order = np.argsort(ts, kind="stable")
    width = frames.width
    return EventStream.from_arrays(
        ts[order], pix[order] % width, pix[order] // width,
        pol[order].astype(np.int64), width, frames.height,
        float(frames.timeline.timestamps[-1]), sort=False)


def residual_from_events(source: Union[EventVolume, Sequence[EventGroup]],
                         config: SimConfig, *, width: int | None = None,
                         height: int | None = None) -> ResidualField:
    """Scale signed event sums by the threshold to estimate frame differences.

    Gap k (between frames k and k+1) corresponds to volume slice k+1, since
    slice 0 covers the span before the first frame.
    """
    if isinstance(source, EventVolume):
        volume = source
    else:
        if width is None or height is None:
            raise ValueError("width and height are required when passing groups")
        volume = stack_events(source, width, height)
    if volume.frames < 2:
        raise ValueError("volume needs at least two frame slices")
    signed = volume.data[1:, 0:1]
    return ResidualField(config.contrast_threshold * signed)


# -- frame files ------------------------------------------------------------

def save_frames(path, frames: FrameSequence) -> None:
    io.write_raw(path, frames.data)


def load_frames(path, duration: float = 1.0) -> FrameSequence:
    """Load raw frames; the timeline is rebuilt uniformly over ``duration``."""
    data = io.read_raw(path)
    if data.ndim != 4:
        raise ValueError(f"{path}: frame shape {data.shape} is not (F,C,H,W)")
    return FrameSequence(data, FrameTimeline.uniform(data.shape[0], duration))


def _to_u8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


def save_pgm(path, image: np.ndarray) -> None:
    """Write one grayscale (H, W) image in [0, 1] as binary PGM."""
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(_to_u8(image).tobytes())


def save_ppm(path, image: np.ndarray) -> None:
    """Write one color (3, H, W) image in [0, 1] as binary PPM."""
    _, h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(_to_u8(np.moveaxis(image, 0, -1)).tobytes())


def load_pnm(path) -> np.ndarray:
    """Read a binary PGM/PPM back as (H, W) or (3, H, W) floats in [0, 1]."""
    blob = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            pos = blob.index(b"\n", pos) + 1
            continue
        end = pos
        while end < len(blob) and not blob[end:end + 1].isspace():
            end += 1
        fields.append(blob[pos:end])
        pos = end
    pos += 1  # single whitespace after maxval
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic not in (b"P5", b"P6") or maxval != 255:
        raise ValueError(f"{path}: unsupported PNM variant")
    raw = np.frombuffer(blob, dtype=np.uint8, offset=pos)
    if magic == b"P5":
        return raw.reshape(h, w).astype(np.float64) / 255.0
    return np.moveaxis(raw.reshape(h, w, 3), -1, 0).astype(np.float64) / 255.0
