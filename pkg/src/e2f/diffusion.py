"""Variance-exploding noise schedules, scalar weights and toy denoisers.

The trainable denoisers are deliberately small (per-pixel affine map or a
one-hidden-layer MLP over the noisy value, the three event channels and a
noise-level feature), with hand-written gradients that are checked against
central finite differences at the start of every training run.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .events import EventVolume

__all__ = [
    "NoiseSchedule",
    "make_schedule",
    "lambda_weight",
    "alpha_weight",
    "forward_noise",
    "posterior_mean_gaussian",
    "GaussianPosteriorDenoiser",
    "ConstantDenoiser",
    "AffineDenoiser",
    "MlpDenoiser",
    "TrainConfig",
    "TrainReport",
    "TrainingError",
    "train_denoiser",
    "check_gradients",
    "save_arrays",
    "load_arrays",
    "save_model",
    "load_model",
]


class TrainingError(RuntimeError):
    """Raised when training hits a non-finite loss or a bad gradient."""


@dataclass(frozen=True)
class NoiseSchedule:
    """Decreasing noise levels sigma_T > ... > sigma_1 > sigma_0 = 0."""

    sigmas: np.ndarray
    sigma_data: float = 0.5

    def __post_init__(self):
        sig = np.asarray(self.sigmas, dtype=np.float64)
        object.__setattr__(self, "sigmas", sig)
        if sig.ndim != 1 or sig.size < 2:
            raise ValueError("schedule needs at least one step plus the zero entry")
        if sig[-1] != 0.0:
            raise ValueError("schedule must end exactly at zero")
        if np.any(np.diff(sig) >= 0) or sig.min() < 0:
            raise ValueError("sigmas must be strictly decreasing and non-negative")
        if self.sigma_data <= 0:
            raise ValueError("sigma_data must be positive")

    @property
    def steps(self) -> int:
        return self.sigmas.size - 1

    @property
    def sigma_max(self) -> float:
        return float(self.sigmas[0])


def make_schedule(sigma_min: float = 0.002, sigma_max: float = 80.0,
                  steps: int = 30, rho: float = 7.0,
                  sigma_data: float = 0.5) -> NoiseSchedule:
    """Power-interpolated schedule from sigma_max down to sigma_min, then 0."""
    if not 0 < sigma_min < sigma_max:
        raise ValueError("need 0 < sigma_min < sigma_max")
    if steps < 1 or rho <= 0:
        raise ValueError("need steps >= 1 and rho > 0")
    if steps == 1:
        sig = np.array([sigma_max])
    else:
        i = np.arange(steps, dtype=np.float64)
        sig = (sigma_max ** (1 / rho)
               + i / (steps - 1) * (sigma_min ** (1 / rho) - sigma_max ** (1 / rho))
               ) ** rho
    return NoiseSchedule(np.append(sig, 0.0), sigma_data)


def lambda_weight(sigma, sigma_data: float):
    """Loss weight (sigma^2 + sigma_data^2) / (sigma + sigma_data)^2."""
    if sigma_data <= 0:
        raise ValueError("sigma_data must be positive")
    sigma = np.asarray(sigma, dtype=np.float64)
    out = (sigma ** 2 + sigma_data ** 2) / (sigma + sigma_data) ** 2
    return float(out) if out.ndim == 0 else out


def alpha_weight(sigma):
    """Deviation-correction weight 1 - exp(-sigma), in [0, 1)."""
    sigma = np.asarray(sigma, dtype=np.float64)
    out = 1.0 - np.exp(-sigma)
    return float(out) if out.ndim == 0 else out


def forward_noise(x0: np.ndarray, sigma: float, seed: int) -> np.ndarray:
    """Sample x0 + sigma * n with n standard normal; deterministic per seed."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    x0 = np.asarray(x0, dtype=np.float64)
    if sigma == 0.0:
        return x0.copy()
    rng = np.random.default_rng(seed)
    return x0 + sigma * rng.standard_normal(x0.shape)


def posterior_mean_gaussian(x, sigma: float, mu, s0: float):
    """Exact clean-value posterior mean for N(mu, s0^2) data under VE noise."""
    if s0 <= 0:
        raise ValueError("s0 must be positive")
    x = np.asarray(x, dtype=np.float64)
    return (s0 ** 2 * x + sigma ** 2 * mu) / (s0 ** 2 + sigma ** 2)


# -- denoisers ---------------------------------------------------------------
#
# A denoiser is any callable (x, condition, sigma) -> clean estimate of x's
# shape, deterministic in its inputs. x is (F, C, H, W); condition is an
# EventVolume (or None for the analytic oracles, which ignore it).


class GaussianPosteriorDenoiser:
    """Analytic oracle: elementwise posterior mean for Gaussian data."""

    def __init__(self, mu: float, s0: float):
        self.mu = mu
        self.s0 = s0

    def __call__(self, x, condition, sigma):
        return posterior_mean_gaussian(x, sigma, self.mu, self.s0)


class ConstantDenoiser:
    """Always predicts a constant clean latent (default zero)."""

    def __init__(self, value: float = 0.0):
        self.value = value

    def __call__(self, x, condition, sigma):
        return np.full_like(np.asarray(x, dtype=np.float64), self.value)


def _event_features(condition: EventVolume | None, shape):
    """Split the three condition channels into broadcastable (F,1,H,W) maps."""
    if condition is None:
        zero = np.zeros((shape[0], 1, shape[2], shape[3]))
        return zero, zero, zero
    d = condition.data
    return d[:, 0:1], d[:, 1:2], d[:, 2:3]


class AffineDenoiser:
    """Per-pixel affine map u = w.[x, e0, e1, e2, g(sigma)] + b.

    Linear in its parameters, so the weighted training objective is an exact
    least-squares problem (handy as a training oracle).
    """

    kind = "affine"

    def __init__(self, seed: int = 0, init_scale: float = 0.01):
        rng = np.random.default_rng(seed)
        self.params = {
            "w": init_scale * rng.standard_normal(5),
            "b": np.zeros(1),
        }

    @staticmethod
    def features(x, condition, sigma):
        e0, e1, e2 = _event_features(condition, x.shape)
        g = np.full_like(x, 1.0 / (1.0 + sigma))
        return [x, e0, e1, e2, g]

    def __call__(self, x, condition, sigma):
        x = np.asarray(x, dtype=np.float64)
        w = self.params["w"]
        feats = self.features(x, condition, sigma)
        u = np.full_like(x, self.params["b"][0])
        for wi, f in zip(w, feats):
            u = u + wi * f
        return u

    def loss_and_grads(self, x0, x_t, condition, sigma, sigma_data):
        lam = lambda_weight(sigma, sigma_data)
        u = self(x_t, condition, sigma)
        diff = u - x0
        loss = lam * float(np.mean(diff ** 2))
        dldu = (2.0 * lam / diff.size) * diff
        feats = self.features(np.asarray(x_t, dtype=np.float64), condition, sigma)
        gw = np.array([float(np.sum(dldu * f)) for f in feats])
        gb = np.array([float(np.sum(dldu))])
        return loss, {"w": gw, "b": gb}


class MlpDenoiser:
    """One-hidden-layer conditional denoiser with noise-level preconditioning.

    The network sees [c_in*x, e0, e1, e2, log(sigma)/4] per pixel and its
    output is blended back as u = c_skip*x + c_out*net(.), which keeps one
    set of weights usable across the whole noise range.
    """

    kind = "mlp"
    n_inputs = 5

    def __init__(self, hidden: int = 16, sigma_data: float = 0.5, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.hidden = hidden
        self.sigma_data = sigma_data
        scale = 1.0 / np.sqrt(self.n_inputs)
        self.params = {
            "w1": scale * rng.standard_normal((hidden, self.n_inputs)),
            "b1": np.zeros(hidden),
            "w2": rng.standard_normal(hidden) / np.sqrt(hidden),
            "b2": np.zeros(1),
        }

    def _coeffs(self, sigma: float):
        sd = self.sigma_data
        denom = sigma ** 2 + sd ** 2
        c_skip = sd ** 2 / denom
        c_out = sigma * sd / np.sqrt(denom)
        c_in = 1.0 / np.sqrt(denom)
        return c_skip, c_out, c_in

    def _features(self, x, condition, sigma):
        c_skip, c_out, c_in = self._coeffs(sigma)
        e0, e1, e2 = _event_features(condition, x.shape)
        sfeat = np.full_like(x, 0.25 * np.log(max(sigma, 1e-12)))
        f = np.stack(np.broadcast_arrays(c_in * x, e0, e1, e2, sfeat), axis=-1)
        return f, c_skip, c_out

    def __call__(self, x, condition, sigma):
        x = np.asarray(x, dtype=np.float64)
        f, c_skip, c_out = self._features(x, condition, sigma)
        z = f @ self.params["w1"].T + self.params["b1"]
        a = np.tanh(z)
        net = a @ self.params["w2"] + self.params["b2"][0]
        return c_skip * x + c_out * net

    def loss_and_grads(self, x0, x_t, condition, sigma, sigma_data):
        x_t = np.asarray(x_t, dtype=np.float64)
        f, c_skip, c_out = self._features(x_t, condition, sigma)
        z = f @ self.params["w1"].T + self.params["b1"]
        a = np.tanh(z)
        net = a @ self.params["w2"] + self.params["b2"][0]
        u = c_skip * x_t + c_out * net

        lam = lambda_weight(sigma, sigma_data)
        diff = u - x0
        loss = lam * float(np.mean(diff ** 2))
        dldu = (2.0 * lam / diff.size) * diff
        dnet = c_out * dldu
        gw2 = np.tensordot(dnet, a, axes=(range(dnet.ndim), range(dnet.ndim)))
        gb2 = np.array([float(np.sum(dnet))])
        da = dnet[..., None] * self.params["w2"]
        dz = da * (1.0 - a ** 2)
        gw1 = np.tensordot(dz, f, axes=(range(dz.ndim - 1), range(dz.ndim - 1)))
        gb1 = dz.reshape(-1, self.hidden).sum(axis=0)
        return loss, {"w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2}


# -- training -----------------------------------------------------------------

@dataclass
class TrainConfig:
    iterations: int = 2000
    learning_rate: float = 1e-2
    sigma_min: float = 0.002
    sigma_max: float = 80.0
    sigma_data: float = 0.5
    seed: int = 0
    log_every: int = 100
    grad_check: bool = True


@dataclass
class TrainReport:
    losses: list[float] = field(default_factory=list)
    moving_averages: list[float] = field(default_factory=list)

    @property
    def initial_average(self) -> float:
        return self.moving_averages[0] if self.moving_averages else float("nan")

    @property
    def final_average(self) -> float:
        return self.moving_averages[-1] if self.moving_averages else float("nan")


def check_gradients(model, x0, x_t, condition, sigma: float, sigma_data: float,
                    n_coords: int = 10, h: float = 1e-6, seed: int = 0,
                    tol: float = 1e-4) -> float:
    """Compare analytic parameter gradients with central finite differences.

    Returns the worst relative error over ``n_coords`` randomly chosen
    coordinates and raises TrainingError when it exceeds ``tol``.
    """
    _, grads = model.loss_and_grads(x0, x_t, condition, sigma, sigma_data)
    rng = np.random.default_rng(seed)
    names = sorted(model.params)
    worst = 0.0
    for _ in range(n_coords):
        name = names[rng.integers(len(names))]
        arr = model.params[name]
        idx = tuple(rng.integers(s) for s in arr.shape)
        orig = arr[idx]
        arr[idx] = orig + h
        lo_plus, _ = model.loss_and_grads(x0, x_t, condition, sigma, sigma_data)
        arr[idx] = orig - h
        lo_minus, _ = model.loss_and_grads(x0, x_t, condition, sigma, sigma_data)
        arr[idx] = orig
        fd = (lo_plus - lo_minus) / (2 * h)
        an = grads[name][idx]
        rel = abs(fd - an) / max(abs(fd), abs(an), 1e-10)
        worst = max(worst, rel)
    if worst > tol:
        raise TrainingError(
            f"analytic gradient disagrees with finite differences "
            f"(relative error {worst:.3e} > {tol:.0e})")
    return worst


def train_denoiser(dataset: Sequence[tuple[np.ndarray, EventVolume | None]],
                   model, config: TrainConfig) -> TrainReport:
    """Adam on the noise-level-weighted squared error over (latent, events) pairs.

    Each iteration draws one pair, a log-uniform noise level and fresh noise.
    The model is updated in place; the report carries per-iteration losses and
    the moving average over ``log_every`` iterations.
    """
    if not dataset:
        raise ValueError("dataset must not be empty")
    if config.iterations < 0 or config.learning_rate < 0:
        raise ValueError("iterations and learning rate must be non-negative")
    rng = np.random.default_rng(config.seed)

    if config.grad_check and config.iterations > 0:
        x0, cond = dataset[0]
        sigma = float(np.exp(rng.uniform(np.log(config.sigma_min),
                                         np.log(config.sigma_max))))
        x_t = x0 + sigma * rng.standard_normal(np.asarray(x0).shape)
        check_gradients(model, x0, x_t, cond, sigma, config.sigma_data)

    m = {k: np.zeros_like(v) for k, v in model.params.items()}
    v = {k: np.zeros_like(p) for k, p in model.params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    report = TrainReport()
    window: list[float] = []

    for it in range(config.iterations):
        x0, cond = dataset[rng.integers(len(dataset))]
        x0 = np.asarray(x0, dtype=np.float64)
        sigma = float(np.exp(rng.uniform(np.log(config.sigma_min),
                                         np.log(config.sigma_max))))
        x_t = x0 + sigma * rng.standard_normal(x0.shape)
        loss, grads = model.loss_and_grads(x0, x_t, cond, sigma, config.sigma_data)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss {loss!r} at iteration {it}")
        report.losses.append(loss)
        window.append(loss)
        if len(window) == config.log_every:
            report.moving_averages.append(float(np.mean(window)))
            window.clear()
        t = it + 1
        for k, g in grads.items():
            m[k] = beta1 * m[k] + (1 - beta1) * g
            v[k] = beta2 * v[k] + (1 - beta2) * g ** 2
            m_hat = m[k] / (1 - beta1 ** t)
            v_hat = v[k] / (1 - beta2 ** t)
            model.params[k] -= config.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    if window:
        report.moving_averages.append(float(np.mean(window)))
    return report


# -- model container ----------------------------------------------------------

MODEL_MAGIC = b"E2FM"


def save_arrays(path, arrays: dict[str, np.ndarray]) -> None:
    """Write named float64 arrays: magic, then per array the name length,
    name, rank, dims and raw little-endian data."""
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            raw_name = name.encode()
            fh.write(struct.pack("<I", len(raw_name)))
            fh.write(raw_name)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())


def load_arrays(path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    if blob[:4] != MODEL_MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:4]!r}")
    pos = 4
    out: dict[str, np.ndarray] = {}
    while pos < len(blob):
        (name_len,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos:pos + name_len].decode()
        pos += name_len
        (rank,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}Q", blob, pos)
        pos += 8 * rank
        count = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=pos)
        pos += 8 * count
        out[name] = arr.reshape(dims).astype(np.float64)
    return out


_KIND_CODES = {"affine": 0.0, "mlp": 1.0}


def save_model(path, model) -> None:
    arrays = {"meta.kind": np.array([_KIND_CODES[model.kind]])}
    if model.kind == "mlp":
        arrays["meta.hidden"] = np.array([float(model.hidden)])
        arrays["meta.sigma_data"] = np.array([model.sigma_data])
    for k, p in model.params.items():
        arrays[f"param.{k}"] = p
    save_arrays(path, arrays)


def load_model(path):
    arrays = load_arrays(path)
    code = float(arrays["meta.kind"][0])
    if code == _KIND_CODES["affine"]:
        model = AffineDenoiser()
    elif code == _KIND_CODES["mlp"]:
        model = MlpDenoiser(hidden=int(arrays["meta.hidden"][0]),
                            sigma_data=float(arrays["meta.sigma_data"][0]))
    else:
        raise ValueError(f"{path}: unknown model kind code {code}")
    for k in model.params:
        model.params[k] = arrays[f"param.{k}"].copy()
    return model
