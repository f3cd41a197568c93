"""Shared builders for the test suite: toy sequences, volumes, oracles."""

from __future__ import annotations

import numpy as np

from e2f.events import FrameTimeline, group_events, stack_events
from e2f.simulator import FrameSequence, SimConfig, simulate_events

TOY_CONTRAST = 0.1


def blob_sequence(seed: int, frames: int = 6, size: int = 12) -> FrameSequence:
    """A Gaussian blob drifting over a flat background, clipped to [0, 1]."""
    rng = np.random.default_rng(seed)
    cx, cy = rng.uniform(3, size - 3, 2)
    vx, vy = rng.uniform(-1.5, 1.5, 2)
    amp = rng.uniform(0.4, 0.7)
    width = rng.uniform(1.2, 2.2)
    base = rng.uniform(0.15, 0.3)
    yy, xx = np.mgrid[0:size, 0:size]
    data = np.zeros((frames, 1, size, size))
    for f in range(frames):
        g = amp * np.exp(-(((xx - cx - vx * f) ** 2)
                           + ((yy - cy - vy * f) ** 2)) / (2 * width ** 2))
        data[f, 0] = base + g
    return FrameSequence(np.clip(data, 0.0, 1.0),
                         FrameTimeline.uniform(frames, 1.0))


def smooth_sequence(seed: int, frames: int = 12, size: int = 32,
                    step: float = 0.03) -> FrameSequence:
    """Random smooth per-pixel drifts, clipped to [0, 1]."""
    rng = np.random.default_rng(seed)
    base = rng.uniform(0.3, 0.7, (1, 1, size, size))
    drift = rng.uniform(-step, step, (frames, 1, size, size)).cumsum(axis=0)
    return FrameSequence(np.clip(base + drift, 0.0, 1.0),
                         FrameTimeline.uniform(frames, 1.0))


def volume_for(frames: FrameSequence, contrast: float = TOY_CONTRAST):
    stream = simulate_events(frames, SimConfig(contrast))
    groups = group_events(stream, frames.timeline)
    return stack_events(groups, frames.width, frames.height)


def kink_distance(latents: np.ndarray, residual_data: np.ndarray,
                  decoder, coord: tuple[int, ...]) -> float:
    """How far the given latent coordinate can move before a residual-loss
    sign flips. The loss is piecewise linear, so central differences are
    exact strictly inside a piece."""
    unit = np.zeros_like(latents)
    unit[coord] = 1.0
    effect = np.diff(decoder(unit), axis=0)
    margins = np.abs(np.diff(decoder(latents), axis=0) - residual_data)
    rates = np.abs(effect)
    mask = rates > 0
    if not mask.any():
        return np.inf
    return float((margins[mask] / rates[mask]).min())


def pick_smooth_coord(rng: np.random.Generator, latents: np.ndarray,
                      residual_data: np.ndarray, decoder,
                      h: float) -> tuple[int, ...]:
    """Random latent coordinate at least 10*h away from the nearest kink."""
    for _ in range(100):
        coord = tuple(int(rng.integers(s)) for s in latents.shape)
        if kink_distance(latents, residual_data, decoder, coord) > 10 * h:
            return coord
    raise AssertionError("could not find a kink-free coordinate")
