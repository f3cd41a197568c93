"""Inter-frame residual guidance: L1 loss, its subgradient, and strengths.

The loss measures how far decoded consecutive-frame differences sit from the
event-predicted residuals; its exact subgradient (with sign(0) := 0) is
pushed back through the frame-difference adjoint and the decoder transpose,
and a single explicit step of configurable strength is applied per sampling
step inside the guidance window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .events import EventVolume
from .sampler import Decoder, Hook, StepInfo
from .simulator import ResidualField, SimConfig, residual_from_events

__all__ = [
    "GuidanceSchedule",
    "OracleResidualPredictor",
    "LearnedResidualPredictor",
    "residual_loss",
    "residual_grad",
    "guide",
    "schedule_strength",
    "make_guidance_hook",
]


@dataclass(frozen=True)
class GuidanceSchedule:
    """mode is one of off|constant|linear|exponential; window is the number
    of final sampling steps during which guidance acts."""

    mode: str = "linear"
    s_max: float = 0.1
    window: int = 10

    def __post_init__(self):
        if self.mode not in ("off", "constant", "linear", "exponential"):
            raise ValueError(f"unknown guidance mode {self.mode!r}")
        if self.s_max < 0 or self.window < 0:
            raise ValueError("s_max and window must be >= 0")


class OracleResidualPredictor:
    """Threshold-scaled signed event sums as the residual prediction."""

    def __init__(self, contrast_threshold: float):
        self.config = SimConfig(contrast_threshold)

    def __call__(self, volume: EventVolume) -> ResidualField:
        return residual_from_events(volume, self.config)


class LearnedResidualPredictor:
    """Per-pixel affine map from the three event channels to residuals."""

    def __init__(self):
        self.weights = np.zeros(3)
        self.bias = 0.0

    def fit(self, volumes, frame_sequences) -> float:
        """Least squares over matched (volume, frames) pairs; returns the RMS
        residual of the fit."""
        rows = []
        targets = []
        for vol, frames in zip(volumes, frame_sequences):
            e = vol.data[1:]  # slice k+1 pairs with the gap k
            dv = np.diff(frames.data, axis=0)
            if dv.shape[1] != 1:
                raise ValueError("learned predictor expects single-channel frames")
            rows.append(e.transpose(0, 2, 3, 1).reshape(-1, 3))
            targets.append(dv.reshape(-1))
        a = np.concatenate(rows)
        a = np.hstack([a, np.ones((a.shape[0], 1))])
        b = np.concatenate(targets)
        coef, *_ = np.linalg.lstsq(a, b, rcond=None)
        self.weights = coef[:3]
        self.bias = float(coef[3])
        return float(np.sqrt(np.mean((a @ coef - b) ** 2)))

    def __call__(self, volume: EventVolume) -> ResidualField:
        e = volume.data[1:]
        pred = np.tensordot(self.weights, e, axes=([0], [1])) + self.bias
        return ResidualField(pred[:, None])


def _frame_differences(u_t: np.ndarray, decoder: Decoder) -> np.ndarray:
    frames = decoder(u_t)
    return frames[1:] - frames[:-1]


def residual_loss(u_t: np.ndarray, r: ResidualField, decoder: Decoder) -> float:
    """Sum of absolute deviations between decoded differences and residuals.

    A single-channel residual broadcasts across multi-channel frames.
    """
    diff = _frame_differences(np.asarray(u_t, dtype=np.float64), decoder)
    return float(np.sum(np.abs(diff - r.data)))


def residual_grad(u_t: np.ndarray, r: ResidualField, decoder: Decoder) -> np.ndarray:
    """Exact subgradient of residual_loss with respect to the latent.

    The pixel-space sign field feeds the frame-difference adjoint (frame f
    collects +sign from gap f-1 and -sign from gap f) and is then pulled back
    through the decoder transpose.
    """
    u_t = np.asarray(u_t, dtype=np.float64)
    diff = _frame_differences(u_t, decoder)
    sgn = np.sign(diff - r.data)  # sign(0) = 0 keeps the subgradient unique
    grad_frames = np.zeros_like(decoder(u_t))
    grad_frames[1:] += sgn
    grad_frames[:-1] -= sgn
    return decoder.adjoint(grad_frames)


def guide(u_t: np.ndarray, r: ResidualField, s: float, decoder: Decoder) -> np.ndarray:
    """One explicit subgradient step of strength s on the clean estimate."""
    if s < 0:
        raise ValueError("guidance strength must be >= 0")
    u_t = np.asarray(u_t, dtype=np.float64)
    if s == 0.0:
        return u_t.copy()
    return u_t - s * residual_grad(u_t, r, decoder)


def schedule_strength(schedule: GuidanceSchedule, k: int) -> float:
    """Strength at position k of the window, k = 0 .. window-1."""
    tau = schedule.window
    if not 0 <= k < tau:
        raise ValueError(f"window index {k} outside [0, {tau})")
    if schedule.mode == "off":
        return 0.0
    if schedule.mode == "constant" or tau == 1:
        return schedule.s_max
    frac = k / (tau - 1)
    if schedule.mode == "linear":
        return schedule.s_max * (1.0 - frac)
    return schedule.s_max * math.exp(-5.0 * frac)  # < 1% of s_max at the end


def make_guidance_hook(residual: ResidualField, schedule: GuidanceSchedule,
                       decoder: Decoder) -> Hook:
    """Hook applying the scheduled step during the last ``window`` steps."""

    def hook(u: np.ndarray, info: StepInfo) -> np.ndarray:
        start = info.total - schedule.window
        if schedule.mode == "off" or info.index < start:
            return u
        s = schedule_strength(schedule, info.index - start)
        return guide(u, residual, s, decoder)

    return hook
