"""Numerical check of the reconstruction-error bound on linear-decoder instances.

For a full-column-rank linear decoder with largest singular value L and
condition number kappa, threshold C, residuals R with per-gap model error
||R_k - C*dV_k||_1 <= eps, the worst-frame error of the threshold-normalized
reconstruction (anchored at frame 0) is bounded by

    lhs = max_k || (F_k - F_0)/C - (V_k - V_0) ||_1
        <= (L*kappa/C) * residual_loss + frames * eps / C = rhs.

The derivation telescopes frame differences from a shared origin, which is
why frame 0 is aligned before accumulating; the normalization by C puts the
decoded differences on the residual scale the guidance loss works in. eps is
always measured from its definition, never assumed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .events import FrameTimeline
from .guidance import residual_grad, residual_loss
from .sampler import Decoder
from .simulator import FrameSequence, ResidualField, SimConfig, simulate_events
from .events import group_events, stack_events
from .simulator import residual_from_events

__all__ = [
    "BoundInstance",
    "BoundReport",
    "lipschitz_and_condition",
    "decoder_constants",
    "check_bound",
    "guided_rhs",
    "random_instance",
]

ANCHORING_NOTE = ("lhs anchors reconstruction frame 0 to the ground truth and "
                  "measures the worst frame's L1 error of the 1/C-scaled decode")


@dataclass(frozen=True)
class BoundInstance:
    decoder: Decoder
    latents: np.ndarray          # (F, Cl, Hl, Wl)
    truth: FrameSequence         # (F, C, H, W)
    residuals: ResidualField     # (F-1, C, H, W)
    contrast: float

    def __post_init__(self):
        if self.contrast <= 0:
            raise ValueError("contrast threshold must be positive")
        if self.residuals.data.shape[0] != self.truth.frames - 1:
            raise ValueError("residual gap count must be frame count minus one")


@dataclass(frozen=True)
class BoundReport:
    lhs: float
    loss: float
    rhs: float
    lipschitz: float
    kappa: float
    epsilon: float
    contrast: float
    frames: int
    holds: bool
    anchoring: str = ANCHORING_NOTE


def _power_iteration(matvec, dim: int, tol: float, max_iter: int) -> float:
    """Largest eigenvalue of a symmetric positive map via power iteration."""
    v = np.full(dim, 1.0 / np.sqrt(dim))
    lam = 0.0
    for _ in range(max_iter):
        w = matvec(v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        new_lam = float(v @ matvec(v))
        if abs(new_lam - lam) <= tol * max(1.0, abs(new_lam)):
            return new_lam
        lam = new_lam
    return lam


def lipschitz_and_condition(a: np.ndarray, tol: float = 1e-8,
                            max_iter: int = 10000) -> tuple[float, float]:
    """Largest singular value and condition number of a tall full-rank matrix.

    Both extremes come from power iteration on A^T A: directly for the top
    eigenvalue, and through the inverse action (Cholesky solve) for the
    bottom one.
    """
    a = np.asarray(a, dtype=np.float64)
    gram = a.T @ a
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        raise ValueError("matrix is rank deficient") from None
    lam_max = _power_iteration(lambda v: gram @ v, gram.shape[0], tol, max_iter)
    inv_lam = _power_iteration(
        lambda v: np.linalg.solve(chol.T, np.linalg.solve(chol, v)),
        gram.shape[0], tol, max_iter)
    if inv_lam <= 0:
        raise ValueError("matrix is rank deficient")
    lam_min = 1.0 / inv_lam
    lip = float(np.sqrt(lam_max))
    return lip, float(lip / np.sqrt(lam_min))


def decoder_constants(decoder: Decoder) -> tuple[float, float]:
    if decoder.kind == "identity":
        return 1.0, 1.0
    return lipschitz_and_condition(decoder.matrix)


def check_bound(instance: BoundInstance) -> BoundReport:
    """Evaluate both sides of the bound on one instance."""
    c = instance.contrast
    decoded = instance.decoder(instance.latents)
    loss = residual_loss(instance.latents, instance.residuals, instance.decoder)

    dv = np.diff(instance.truth.data, axis=0)
    gap_errors = np.abs(instance.residuals.data - c * dv)
    eps = float(gap_errors.reshape(gap_errors.shape[0], -1).sum(axis=1).max()) \
        if gap_errors.shape[0] else 0.0

    lip, kappa = decoder_constants(instance.decoder)

    rec = (decoded - decoded[0]) / c
    ref = instance.truth.data - instance.truth.data[0]
    per_frame = np.abs(rec - ref).reshape(instance.truth.frames, -1).sum(axis=1)
    lhs = float(per_frame.max())

    rhs = (lip * kappa / c) * loss + instance.truth.frames * eps / c
    return BoundReport(lhs=lhs, loss=loss, rhs=rhs, lipschitz=lip, kappa=kappa,
                       epsilon=eps, contrast=c, frames=instance.truth.frames,
                       holds=bool(lhs <= rhs))


def _kink_safe_strength(instance: BoundInstance, cap: float = 1e-6) -> float:
    """Largest step (capped) that provably cannot flip any residual sign.

    The loss is piecewise linear in the latents, so any step smaller than
    half the nearest kink distance along the subgradient direction is a
    guaranteed non-increase.
    """
    grad = residual_grad(instance.latents, instance.residuals, instance.decoder)
    if not grad.any():
        return cap
    delta = np.diff(instance.decoder(grad), axis=0)
    margins = np.abs(np.diff(instance.decoder(instance.latents), axis=0)
                     - instance.residuals.data)
    rates = np.abs(delta)
    mask = rates > 0
    if not mask.any():
        return cap
    safe = float((margins[mask] / rates[mask]).min())
    return min(cap, 0.5 * safe)


def guided_rhs(instance: BoundInstance, strength: float | None = None
               ) -> tuple[BoundReport, BoundReport]:
    """Reports before and after one guidance step of a descent-valid strength."""
    from .guidance import guide

    before = check_bound(instance)
    s = _kink_safe_strength(instance) if strength is None else strength
    updated = guide(instance.latents, instance.residuals, s, instance.decoder)
    after = check_bound(BoundInstance(instance.decoder, updated, instance.truth,
                                      instance.residuals, instance.contrast))
    return before, after


def random_instance(seed: int) -> BoundInstance:
    """Seeded random instance satisfying the bound's assumptions.

    Half the instances derive residuals from a simulated event stream (model
    error = quantization only), the other half add explicit noise to the
    ideal residuals. Decoders are scaled so the smallest singular value is
    at least 1, keeping L*kappa >= 1.
    """
    rng = np.random.default_rng(seed)
    frames = int(rng.integers(2, 7))
    h = int(rng.integers(2, 5))
    w = int(rng.integers(2, 5))
    n_pix = h * w
    c = float(rng.uniform(0.02, 0.3))

    base = rng.uniform(0.25, 0.75, size=(1, 1, h, w))
    drift = rng.uniform(-0.02, 0.02, size=(frames, 1, h, w)).cumsum(axis=0)
    truth = FrameSequence(np.clip(base + drift, 0.0, 1.0),
                          FrameTimeline.uniform(frames, 1.0))
    dv = np.diff(truth.data, axis=0)

    if rng.random() < 0.5:
        stream = simulate_events(truth, SimConfig(c))
        groups = group_events(stream, truth.timeline)
        sim_r = residual_from_events(stack_events(groups, w, h), SimConfig(c))
        residuals = ResidualField(c * sim_r.data)  # model scale: ~ C * dV
    else:
        noise = rng.normal(0.0, 0.1 * c, size=dv.shape)
        residuals = ResidualField(c * dv + noise)

    if rng.random() < 0.3:
        decoder = Decoder.identity()
        latent_shape = (1, h, w)
    else:
        n_lat = n_pix
        a = rng.standard_normal((n_pix, n_lat))
        a += 2.0 * np.eye(n_pix, n_lat)  # keep it comfortably full rank
        smin = np.linalg.svd(a, compute_uv=False).min()
        a *= max(1.0, 1.0 / smin) * rng.uniform(1.0, 1.5)
        decoder = Decoder.linear(a, (1, h, w), (1, h, w))

    ideal = decoder.encode(c * truth.data)
    latents = ideal + rng.normal(0.0, rng.uniform(0.0, 0.2) * c,
                                 size=ideal.shape)
    return BoundInstance(decoder, latents, truth, residuals, c)
