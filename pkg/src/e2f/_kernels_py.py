"""Pure-numpy implementations of the hot kernels.

These are the fallback twins of the Cython module ``e2f._kernels``. Both
backends must produce bit-identical outputs: the accumulation sums are exact
integer-valued float64 adds, and the simulation applies the same sequence of
float64 operations in the same per-interval, pixel-major, crossing-ascending
order.
"""

from __future__ import annotations

import numpy as np


def accumulate(gidx, xs, ys, ps, frames: int, height: int, width: int):
    """Sum event polarities into an (frames, 3, H, W) volume.

    Channel 0 holds the signed sum of all polarities, channel 1 the sum over
    positive events and channel 2 the (non-positive) sum over negative events.
    Coordinates and group indices must already be validated by the caller.
    """
    size = frames * 3 * height * width
    base = (gidx.astype(np.int64) * 3 * height + ys) * width + xs
    plane = height * width
    out = np.bincount(base, weights=ps, minlength=size).astype(np.float64)
    pos = ps > 0
    if pos.any():
        out += np.bincount(base[pos] + plane, weights=ps[pos], minlength=size)
    neg = ps < 0
    if neg.any():
        out += np.bincount(base[neg] + 2 * plane, weights=ps[neg], minlength=size)
    return out.reshape(frames, 3, height, width)


def simulate(intensities, times, contrast: float):
    """Emit threshold-crossing events for per-pixel intensity tracks.

    ``intensities`` is (F, N) float64 with one row per frame and one column
    per pixel; ``times`` the F frame timestamps. Each pixel keeps a reference
    level (initialised to the first frame) that advances by ``contrast`` per
    emitted event, so sub-threshold changes carry over between intervals.
    Crossing times are linearly interpolated and nudged below the interval
    end so every event sorts into the interval that produced it.

    Returns (t, pixel, polarity) arrays, ordered interval-major then
    pixel-major then crossing-ascending (not globally time-sorted).
    """
    n_frames, n_pixels = intensities.shape
    ref = intensities[0].copy()
    ts_parts: list[np.ndarray] = []
    pix_parts: list[np.ndarray] = []
    pol_parts: list[np.ndarray] = []

    for k in range(n_frames - 1):
        cur = intensities[k]
        nxt = intensities[k + 1]
        t0 = times[k]
        t1 = times[k + 1]
        steps = np.trunc((nxt - ref) / contrast)  # signed crossing count
        nz = np.nonzero(steps)[0]
        if nz.size:
            counts = np.abs(steps[nz]).astype(np.int64)
            sgn = np.sign(steps[nz])
            total = int(counts.sum())
            pix = np.repeat(nz, counts)
            sgn_r = np.repeat(sgn, counts)
            offsets = np.repeat(np.cumsum(counts) - counts, counts)
            j = (np.arange(total, dtype=np.int64) - offsets + 1).astype(np.float64)
            target = ref[pix] + j * contrast * sgn_r
            frac = (target - cur[pix]) / (nxt[pix] - cur[pix])
            t = t0 + frac * (t1 - t0)
            t = np.where(t >= t1, np.nextafter(t1, t0), t)
            ts_parts.append(t)
            pix_parts.append(pix)
            pol_parts.append(sgn_r.astype(np.int8))
        ref = ref + steps * contrast

    if not ts_parts:
        return (np.empty(0, dtype=np.float64),
                np.empty(0, dtype=np.int64),
                np.empty(0, dtype=np.int8))
    return (np.concatenate(ts_parts),
            np.concatenate(pix_parts),
            np.concatenate(pol_parts))
