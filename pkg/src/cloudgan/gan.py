"""Conditional 3D-convolutional generator/discriminator and their losses.

The generator maps ``[noise..., Ep_norm, theta]`` to a non-negative energy
grid. The discriminator's last dense layer has three outputs per sample:
a real/fake logit (passed through a sigmoid), an energy regression (in
normalised units, Ep / max_energy) and an angle regression (radians).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import (
    BatchNorm, Conv3D, Dense, Flatten, LeakyReLU, Network, ReLU, Reshape, evaluate, gradients,
)

CLAMP = 1e-7
MAPE_FLOOR = 1e-7


class ConfigError(ValueError):
    pass


@dataclass
class LossWeights:
    w_bce: float = 1.0
    w_ep: float = 0.1
    w_ang: float = 0.1
    w_ecal: float = 0.1

    def __post_init__(self):
        for name in ("w_bce", "w_ep", "w_ang", "w_ecal"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss weight {name} must be >= 0")


@dataclass
class GanConfig:
    latent_dim: int = 64
    grid_shape: tuple = (8, 8, 8)
    gen_dense_channels: int = 1
    gen_channels: tuple = (8, 8)
    disc_channels: tuple = (8, 8, 8)
    disc_strides: tuple = (1, 2, 2)
    kernel: int = 3
    weights: LossWeights = field(default_factory=LossWeights)
    max_energy: float = 100.0
    # network-space grid = deposited energy * energy_scale
    energy_scale: float = 100.0
    real_label: float = 1.0
    fake_label: float = 0.0

    def __post_init__(self):
        self.grid_shape = tuple(int(g) for g in self.grid_shape)
        self.gen_channels = tuple(int(c) for c in self.gen_channels)
        self.disc_channels = tuple(int(c) for c in self.disc_channels)
        self.disc_strides = tuple(int(s) for s in self.disc_strides)
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)

    def validate(self) -> None:
        if self.latent_dim < 1:
            raise ConfigError("latent_dim must be >= 1")
        if len(self.grid_shape) != 3 or min(self.grid_shape) < 2:
            raise ConfigError(f"grid_shape needs three dims >= 2, got {self.grid_shape}")
        if len(self.disc_channels) != len(self.disc_strides):
            raise ConfigError("disc_channels and disc_strides must have equal length")
        if self.max_energy <= 0 or self.energy_scale <= 0:
            raise ConfigError("max_energy and energy_scale must be positive")
        if self.gen_dense_channels < 1 or min(self.gen_channels + self.disc_channels, default=1) < 1:
            raise ConfigError("channel widths must be >= 1")

    @property
    def input_width(self) -> int:
        return self.latent_dim + 2


@dataclass
class LabelBatch:
    """Per-sample conditioning labels: primary energy, angle, deposited energy."""

    ep: np.ndarray
    theta: np.ndarray
    ecal: np.ndarray

    def __post_init__(self):
        self.ep = np.asarray(self.ep, dtype=np.float64)
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.ecal = np.asarray(self.ecal, dtype=np.float64)
        if not (self.ep.shape == self.theta.shape == self.ecal.shape) or self.ep.ndim != 1:
            raise ValueError("Ep, theta and Ecal must be 1-d arrays of equal length")
        if np.any(self.ep <= 0) or np.any(self.ecal < 0):
            raise ValueError("labels need Ep > 0 and Ecal >= 0")

    def __len__(self):
        return len(self.ep)

    def take(self, idx) -> "LabelBatch":
        return LabelBatch(self.ep[idx], self.theta[idx], self.ecal[idx])


@dataclass
class DiscOutputs:
    p: np.ndarray
    ep_hat: np.ndarray
    theta_hat: np.ndarray

    @classmethod
    def from_raw(cls, raw: np.ndarray) -> "DiscOutputs":
        p = 0.5 * (1.0 + np.tanh(0.5 * raw[:, 0]))
        return cls(p, raw[:, 1].copy(), raw[:, 2].copy())


@dataclass
class LossResult:
    total: float
    terms: dict
    # d total / d (p, ep_hat, theta_hat), and d total / d fake_ecal
    grad_p: np.ndarray
    grad_ep: np.ndarray
    grad_theta: np.ndarray
    grad_ecal: np.ndarray | None = None

    def raw_grad(self, out: DiscOutputs) -> np.ndarray:
        """Chain the output gradients back to the discriminator's raw outputs."""
        return np.stack([self.grad_p * out.p * (1.0 - out.p), self.grad_ep, self.grad_theta], axis=1)


def build_generator(cfg: GanConfig, seed: int = 0) -> Network:
    cfg.validate()
    c0 = cfg.gen_dense_channels
    layers = [Dense(c0 * int(np.prod(cfg.grid_shape))), Reshape((c0, *cfg.grid_shape))]
    for ch in cfg.gen_channels:
        layers += [Conv3D(ch, cfg.kernel, 1, "same"), BatchNorm(), ReLU()]
    layers += [Conv3D(1, cfg.kernel, 1, "same"), ReLU()]
    return Network((cfg.input_width,), layers, seed=seed, name="generator")


def build_discriminator(cfg: GanConfig, seed: int = 0) -> Network:
    cfg.validate()
    layers = []
    for ch, stride in zip(cfg.disc_channels, cfg.disc_strides):
        layers += [Conv3D(ch, cfg.kernel, stride, "same"), LeakyReLU()]
    layers += [Flatten(), Dense(3)]
    return Network((1, *cfg.grid_shape), layers, seed=seed, name="discriminator")


def make_generator_input(noise, ep_norm, theta) -> np.ndarray:
    noise = np.asarray(noise, dtype=np.float64)
    ep_norm = np.asarray(ep_norm, dtype=np.float64).reshape(-1)
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    if noise.ndim != 2:
        raise ValueError(f"noise must be [B, latent_dim], got shape {noise.shape}")
    if not (noise.shape[0] == len(ep_norm) == len(theta)):
        raise ValueError(f"batch length mismatch: noise {noise.shape[0]}, Ep {len(ep_norm)}, theta {len(theta)}")
    return np.concatenate([noise, ep_norm[:, None], theta[:, None]], axis=1)


def compute_ecal(grid_batch) -> np.ndarray:
    g = np.asarray(grid_batch, dtype=np.float64)
    return g.reshape(g.shape[0], -1).sum(axis=1)


def _bce(p, target):
    n = len(p)
    pc = np.clip(p, CLAMP, 1.0 - CLAMP)
    value = -np.mean(target * np.log(pc) + (1.0 - target) * np.log(1.0 - pc))
    inside = (p > CLAMP) & (p < 1.0 - CLAMP)
    grad = np.where(inside, -(target / pc - (1.0 - target) / (1.0 - pc)) / n, 0.0)
    return float(value), grad


def _mape(pred, ref):
    denom = np.maximum(np.abs(ref), MAPE_FLOOR)
    diff = pred - ref
    return float(np.mean(np.abs(diff) / denom)), np.sign(diff) / denom / len(pred)


def _mae(pred, ref):
    diff = pred - ref
    return float(np.mean(np.abs(diff))), np.sign(diff) / len(pred)


def discriminator_loss(out: DiscOutputs, labels: LabelBatch, is_real: bool, weights: LossWeights,
                       ep_scale: float = 1.0, real_label: float = 1.0, fake_label: float = 0.0) -> LossResult:
    """w_bce*BCE + w_ep*MAPE(Ep) + w_ang*MAE(theta), MAPE as a fraction.

    ``ep_hat`` is compared with ``labels.ep / ep_scale``.
    """
    target = real_label if is_real else fake_label
    bce, g_p = _bce(out.p, target)
    ep, g_ep = _mape(out.ep_hat, labels.ep / ep_scale)
    ang, g_th = _mae(out.theta_hat, labels.theta)
    terms = {"bce": weights.w_bce * bce, "ep": weights.w_ep * ep, "theta": weights.w_ang * ang}
    return LossResult(
        total=sum(terms.values()), terms=terms,
        grad_p=weights.w_bce * g_p, grad_ep=weights.w_ep * g_ep, grad_theta=weights.w_ang * g_th,
    )


def generator_loss(out_on_fake: DiscOutputs, labels: LabelBatch, fake_ecal, weights: LossWeights,
                   ep_scale: float = 1.0, real_label: float = 1.0) -> LossResult:
    """Discriminator loss with the real target plus w_ecal*MAPE(fake Ecal, Ecal label)."""
    res = discriminator_loss(out_on_fake, labels, True, weights, ep_scale, real_label=real_label)
    ecal, g_ecal = _mape(np.asarray(fake_ecal, dtype=np.float64), labels.ecal)
    res.terms["ecal"] = weights.w_ecal * ecal
    res.total = sum(res.terms.values())
    res.grad_ecal = weights.w_ecal * g_ecal
    return res


# -- composite forward/backward used by the training loop --------------------

def discriminator_pass(disc: Network, grids, labels: LabelBatch, is_real: bool, cfg: GanConfig,
                       precision: str = "full"):
    """Loss and parameter gradients of the discriminator on one batch."""
    trace = evaluate(disc, grids, "train", precision)
    out = DiscOutputs.from_raw(trace.output)
    res = discriminator_loss(out, labels, is_real, cfg.weights, cfg.max_energy, cfg.real_label, cfg.fake_label)
    grads, _ = gradients(disc, trace, res.raw_grad(out))
    return res, grads


def generator_pass(gen: Network, disc: Network, gen_input, labels: LabelBatch, cfg: GanConfig,
                   precision: str = "full", reduce=None):
    """Generator loss through a frozen discriminator and the generator's gradients.

    The Ecal term is computed in physical units (grid / energy_scale).
    ``reduce`` is forwarded to batchnorm for cross-replica statistics.
    """
    g_trace = evaluate(gen, gen_input, "train", precision, reduce=reduce)
    fake = g_trace.output
    d_trace = evaluate(disc, fake, "train", precision)
    out = DiscOutputs.from_raw(d_trace.output)
    fake_ecal = compute_ecal(fake) / cfg.energy_scale
    res = generator_loss(out, labels, fake_ecal, cfg.weights, cfg.max_energy, cfg.real_label)
    _, d_fake = gradients(disc, d_trace, res.raw_grad(out))
    d_fake = d_fake + (res.grad_ecal / cfg.energy_scale)[:, None, None, None, None]
    grads, _ = gradients(gen, g_trace, d_fake)
    return res, grads, fake


def generate(gen: Network, gen_input, precision: str = "full") -> np.ndarray:
    """Inference-mode generation (batchnorm running statistics, no mutation)."""
    return evaluate(gen, gen_input, "eval", precision).output


def generate_batch_stats(gen: Network, gen_input, precision: str = "full", reduce=None) -> np.ndarray:
    """Generation with batch statistics, leaving the running statistics untouched.

    Used for the discriminator's fake batch so the generator sees the same
    normalisation it trains with, while staying bitwise unchanged.
    """
    saved = [dict(layer.state) for layer in gen.layers]
    try:
        return evaluate(gen, gen_input, "train", precision, reduce=reduce).output
    finally:
        for layer, state in zip(gen.layers, saved):
            layer.state.update(state)
