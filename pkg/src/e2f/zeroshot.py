"""Zero-shot frame interpolation and prediction by estimate modulation.

Known reference latents are blended into the per-step clean estimate: the
deviation between each reference and its current estimate is added to every
frame, weighted by a coefficient that starts near 1 at high noise and decays
toward 0, so early steps pin the trajectory to the references and late steps
let the model refine details.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .diffusion import alpha_weight
from .sampler import Hook, StepInfo

__all__ = [
    "ReferenceSet",
    "WeightSchedule",
    "deviations",
    "modulate_interp",
    "modulate_predict",
    "weight",
    "vfi_layout",
    "make_modulation_hook",
    "make_segmented_hook",
]


@dataclass(frozen=True)
class ReferenceSet:
    """Clean reference latents: the first frame, and the last one for
    interpolation. mode is 'interpolation' or 'prediction'."""

    first: np.ndarray
    last: Optional[np.ndarray] = None
    mode: str = "interpolation"

    def __post_init__(self):
        object.__setattr__(self, "first", np.asarray(self.first, dtype=np.float64))
        if self.last is not None:
            object.__setattr__(self, "last", np.asarray(self.last, dtype=np.float64))
        if self.mode == "interpolation":
            if self.last is None:
                raise ValueError("interpolation needs both endpoint references")
        elif self.mode == "prediction":
            if self.last is not None:
                raise ValueError("prediction takes the first reference only")
        else:
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class WeightSchedule:
    """Modulation weight over the sampling run.

    nonlinear follows 1 - exp(-sigma * sigma_scale); the linear modes ramp
    1 -> 0 or 0 -> 1 over the steps and constant stays at 0.5. sigma_scale
    exists because 1 - exp(-sigma) saturates for sigma above ~5, making the
    weight effectively flat under wide noise ranges.
    """

    mode: str = "nonlinear"
    sigma_scale: float = 1.0

    def __post_init__(self):
        if self.mode not in ("nonlinear", "linear-descending",
                             "linear-ascending", "constant"):
            raise ValueError(f"unknown weight mode {self.mode!r}")
        if self.sigma_scale <= 0:
            raise ValueError("sigma_scale must be positive")


def deviations(u_t: np.ndarray, refs: ReferenceSet
               ) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Reference-minus-estimate gaps at the anchored frame indices."""
    u_t = np.asarray(u_t, dtype=np.float64)
    d0 = refs.first - u_t[0]
    df = refs.last - u_t[-1] if refs.mode == "interpolation" else None
    return d0, df


def modulate_interp(u_i: np.ndarray, d0: np.ndarray, df: np.ndarray,
                    alpha: float) -> np.ndarray:
    """Blend both endpoint deviations into a frame estimate.

    Algebraically u_i + alpha * (d0 + df) / 2, computed in the averaged form.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    u_i = np.asarray(u_i, dtype=np.float64)
    return alpha * (((d0 + u_i) + (df + u_i)) / 2.0) + (1.0 - alpha) * u_i


def modulate_predict(u_i: np.ndarray, d0: np.ndarray, alpha: float) -> np.ndarray:
    """Blend the first-frame deviation into a frame estimate: u_i + alpha*d0."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    u_i = np.asarray(u_i, dtype=np.float64)
    return alpha * (d0 + u_i) + (1.0 - alpha) * u_i


def weight(schedule: WeightSchedule, sigma_t: float, k: int, total: int) -> float:
    """Modulation weight at step k of ``total`` for noise level sigma_t."""
    if not 0 <= k < total:
        raise ValueError(f"step index {k} outside [0, {total})")
    if schedule.mode == "nonlinear":
        return float(alpha_weight(sigma_t * schedule.sigma_scale))
    if schedule.mode == "constant":
        return 0.5
    frac = 1.0 if total == 1 else k / (total - 1)
    if schedule.mode == "linear-descending":
        return 1.0 - frac if total > 1 else 1.0
    return frac  # linear-ascending


def vfi_layout(task: str, frames: int = 12
               ) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Reference and target frame indices for the evaluation tasks.

    With the canonical 12-frame sequence: vfi4 anchors {0,4,8} and targets
    the six frames between them, vfi11 anchors the endpoints {0,11}, and vfp
    anchors {0} and targets everything after it.
    """
    if frames < 2:
        raise ValueError("layouts need at least two frames")
    if task == "vfi4":
        if frames % 4 != 0:
            raise ValueError("vfi4 needs a frame count divisible by 4")
        refs = tuple(range(0, frames - 3, 4))
        targets = tuple(i for i in range(refs[-1] + 1)
                        if i % 4 != 0)
        return refs, targets
    if task == "vfi11":
        return (0, frames - 1), tuple(range(1, frames - 1))
    if task == "vfp":
        return (0,), tuple(range(1, frames))
    raise ValueError(f"unknown task {task!r}")


def make_modulation_hook(refs: ReferenceSet, schedule: WeightSchedule) -> Hook:
    """Single-segment hook: one shared correction for every frame index."""

    def hook(u: np.ndarray, info: StepInfo) -> np.ndarray:
        alpha = weight(schedule, info.sigma, info.index, info.total)
        d0, df = deviations(u, refs)
        if refs.mode == "interpolation":
            return modulate_interp(u, d0, df, alpha)
        return modulate_predict(u, d0, alpha)

    return hook


def make_segmented_hook(anchors: Sequence[tuple[int, np.ndarray]],
                        schedule: WeightSchedule) -> Hook:
    """Hook for several reference frames (e.g. the vfi4 layout).

    Frames between two anchors are interpolated from that pair's deviations;
    frames after the last anchor fall back to prediction from it.
    """
    anchors = sorted(((int(i), np.asarray(ref, dtype=np.float64))
                      for i, ref in anchors), key=lambda item: item[0])
    if not anchors:
        raise ValueError("need at least one anchor")
    if anchors[0][0] != 0:
        raise ValueError("the first anchor must sit at frame 0")

    def hook(u: np.ndarray, info: StepInfo) -> np.ndarray:
        alpha = weight(schedule, info.sigma, info.index, info.total)
        devs = [(idx, ref - u[idx]) for idx, ref in anchors]
        out = u.copy()
        for (lo, dlo), (hi, dhi) in zip(devs, devs[1:]):
            out[lo:hi + 1] = modulate_interp(u[lo:hi + 1], dlo, dhi, alpha)
        last_idx, dlast = devs[-1]
        if last_idx < u.shape[0] - 1 or len(devs) == 1:
            out[last_idx:] = modulate_predict(u[last_idx:], dlast, alpha)
        return out

    return hook
