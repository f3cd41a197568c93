"""Deterministic reverse-diffusion sampling with per-step hooks.

Each step estimates the clean latent, lets the configured hooks adjust that
estimate (reference modulation first, then residual guidance), and contracts
the state toward it by the ratio of consecutive noise levels.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import io
from .diffusion import NoiseSchedule
from .events import EventVolume, FrameTimeline
from .simulator import FrameSequence

__all__ = [
    "Decoder",
    "Latent",
    "StepInfo",
    "SamplerConfig",
    "SamplingError",
    "reverse_step",
    "sample",
    "decode",
]

Hook = Callable[[np.ndarray, "StepInfo"], np.ndarray]


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class Latent:
    """Sampler state: (F, C, H, W) values at schedule position sigma_index."""

    data: np.ndarray
    sigma_index: int = 0


@dataclass(frozen=True)
class StepInfo:
    """Per-step context passed to hooks; index counts from 0 to total-1."""

    index: int
    total: int
    sigma: float
    sigma_prev: float


class Decoder:
    """Identity or fixed per-frame linear map from latent to pixel space.

    The linear kind applies a full-column-rank matrix A to each flattened
    frame, so its Jacobian is A itself; ``adjoint`` applies A^T and
    ``encode`` the pseudo-inverse.
    """

    def __init__(self, kind: str, matrix: Optional[np.ndarray] = None,
                 latent_shape: Optional[tuple[int, int, int]] = None,
                 frame_shape: Optional[tuple[int, int, int]] = None):
        if kind not in ("identity", "linear"):
            raise ValueError(f"unknown decoder kind {kind!r}")
        self.kind = kind
        self.matrix = None
        self.latent_shape = latent_shape
        self.frame_shape = frame_shape
        self._pinv = None
        if kind == "linear":
            a = np.asarray(matrix, dtype=np.float64)
            if a.ndim != 2:
                raise ValueError("decoder matrix must be 2-D")
            m, n = a.shape
            if m < n or np.linalg.matrix_rank(a) < n:
                raise ValueError("decoder matrix must have full column rank")
            if latent_shape is None or int(np.prod(latent_shape)) != n:
                raise ValueError("latent_shape must multiply out to the column count")
            if frame_shape is None or int(np.prod(frame_shape)) != m:
                raise ValueError("frame_shape must multiply out to the row count")
            self.matrix = a
            self._pinv = np.linalg.pinv(a)

    @classmethod
    def identity(cls) -> "Decoder":
        return cls("identity")

    @classmethod
    def linear(cls, matrix, latent_shape, frame_shape) -> "Decoder":
        return cls("linear", matrix, tuple(latent_shape), tuple(frame_shape))

    def __call__(self, latent: np.ndarray) -> np.ndarray:
        latent = np.asarray(latent, dtype=np.float64)
        if self.kind == "identity":
            return latent
        frames = latent.shape[0]
        flat = latent.reshape(frames, -1)
        if flat.shape[1] != self.matrix.shape[1]:
            raise ValueError("latent size does not match the decoder matrix")
        return (flat @ self.matrix.T).reshape((frames, *self.frame_shape))

    def adjoint(self, pixel_grad: np.ndarray) -> np.ndarray:
        """Pull a pixel-space gradient back through the Jacobian transpose."""
        pixel_grad = np.asarray(pixel_grad, dtype=np.float64)
        if self.kind == "identity":
            return pixel_grad
        frames = pixel_grad.shape[0]
        flat = pixel_grad.reshape(frames, -1)
        return (flat @ self.matrix).reshape((frames, *self.latent_shape))

    def encode(self, frames_data: np.ndarray) -> np.ndarray:
        """Map pixel frames into latent space (pseudo-inverse for linear)."""
        frames_data = np.asarray(frames_data, dtype=np.float64)
        if self.kind == "identity":
            return frames_data
        frames = frames_data.shape[0]
        flat = frames_data.reshape(frames, -1)
        return (flat @ self._pinv.T).reshape((frames, *self.latent_shape))


@dataclass(frozen=True)
class SamplerConfig:
    schedule: NoiseSchedule
    hooks: tuple[Hook, ...] = ()
    seed: int = 0
    latent_channels: int = 1
    dump_every: int = 0
    dump_dir: Optional[str] = None


def reverse_step(x_t: np.ndarray, u_t: np.ndarray, sigma_t: float,
                 sigma_prev: float) -> np.ndarray:
    """One contraction x - (x - u)/sigma_t * (sigma_t - sigma_prev).

    The endpoints are returned exactly: sigma_prev = sigma_t leaves x
    untouched and sigma_prev = 0 collapses onto the estimate.
    """
    if sigma_t <= 0:
        raise ValueError("sigma_t must be positive")
    if not 0 <= sigma_prev <= sigma_t:
        raise ValueError("sigma_prev must lie in [0, sigma_t]")
    x_t = np.asarray(x_t, dtype=np.float64)
    u_t = np.asarray(u_t, dtype=np.float64)
    if sigma_prev == 0.0:
        return u_t.copy()
    if sigma_prev == sigma_t:
        return x_t.copy()
    return x_t - (x_t - u_t) / sigma_t * (sigma_t - sigma_prev)


def sample(denoiser, condition: EventVolume, config: SamplerConfig,
           refs=None) -> Latent:
    """Run the full reverse pass and return the clean latent.

    ``refs`` (a zeroshot.ReferenceSet) prepends the reference-modulation hook
    in front of ``config.hooks`` with the default weight schedule; pass an
    explicit modulation hook through ``config.hooks`` for other schedules.
    The run is bit-reproducible for a fixed seed.
    """
    sig = config.schedule.sigmas
    total = config.schedule.steps
    shape = (condition.frames, config.latent_channels,
             condition.height, condition.width)
    hooks: tuple[Hook, ...] = config.hooks
    if refs is not None:
        from .zeroshot import WeightSchedule, make_modulation_hook

        hooks = (make_modulation_hook(refs, WeightSchedule("nonlinear")),) + hooks

    rng = np.random.default_rng(config.seed)
    x = sig[0] * rng.standard_normal(shape)
    for i in range(total):
        info = StepInfo(i, total, float(sig[i]), float(sig[i + 1]))
        u = denoiser(x, condition, info.sigma)
        for hook in hooks:
            u = hook(u, info)
        x = reverse_step(x, u, info.sigma, info.sigma_prev)
        if not np.isfinite(x).all():
            raise SamplingError(f"non-finite latent after step {i}")
        if config.dump_every and (i + 1) % config.dump_every == 0:
            if config.dump_dir is None:
                raise ValueError("dump_every requires dump_dir")
            Path(config.dump_dir).mkdir(parents=True, exist_ok=True)
            io.write_raw(Path(config.dump_dir) / f"latent_step{i:04d}.f32", x)
    return Latent(x, sigma_index=total)


def decode(latent, decoder: Decoder,
           timeline: Optional[FrameTimeline] = None) -> FrameSequence:
    """Turn a latent into a frame sequence via the decoder."""
    data = latent.data if isinstance(latent, Latent) else np.asarray(latent)
    frames = decoder(data)
    if timeline is None:
        timeline = FrameTimeline.uniform(frames.shape[0], 1.0)
    return FrameSequence(frames, timeline)
