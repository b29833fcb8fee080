"""Adversarial training loop, optimizers and per-batch timing reports.

Each global batch triggers two discriminator updates (real, then fake) and
``generator_steps_per_batch`` generator updates. Generator-input
preparation (noise, label resampling, concatenation) runs either on the
coordinator, serially for every shard (``builtin``), or inside each
replica's step (``custom``). Random draws are keyed by the sample's global
index in the batch, so both variants and every replica count consume
exactly the same numbers.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from .gan import (
    GanConfig, LabelBatch, build_discriminator, build_generator, discriminator_pass,
    generate_batch_stats, generator_pass, make_generator_input,
)
from .parallel import ReplicaGroup, run_sync_step, shard_slices
from .rng import derive_seed, stream
from .tensor import Network, NonFiniteError


@dataclass
class TrainConfig:
    n_epochs: int = 1
    batches_per_epoch: int = 16
    global_batch_size: int = 32
    generator_steps_per_batch: int = 2
    lr: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    loop_variant: str = "custom"
    precision: str = "full"

    def validate(self) -> None:
        if self.global_batch_size < 1:
            raise ValueError("global_batch_size must be >= 1")
        if self.n_epochs < 1 or self.batches_per_epoch < 1 or self.generator_steps_per_batch < 1:
            raise ValueError("n_epochs, batches_per_epoch and generator_steps_per_batch must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if self.loop_variant not in ("builtin", "custom"):
            raise ValueError(f"loop_variant must be 'builtin' or 'custom', got {self.loop_variant!r}")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")


# -- optimizer ------------------------------------------------------------------

@dataclass
class OptimizerState:
    m: list
    v: list
    step: int = 0

    @classmethod
    def zeros_like(cls, params) -> "OptimizerState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def optimizer_step(params, grads, state: OptimizerState, cfg: TrainConfig, names=None):
    """Update ``params`` in place; returns ``(params, state)``."""
    names = names or [f"param[{i}]" for i in range(len(params))]
    if len(grads) != len(params):
        raise ValueError(f"{len(grads)} gradients for {len(params)} parameters")
    for name, p, g in zip(names, params, grads):
        if np.shape(g) != p.shape:
            raise ValueError(f"gradient for {name} has shape {np.shape(g)}, parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {name}")
    state.step += 1
    if cfg.optimizer == "sgd":
        for p, g in zip(params, grads):
            p -= cfg.lr * g
        return params, state
    b1, b2 = cfg.beta1, cfg.beta2
    c1, c2 = 1.0 - b1 ** state.step, 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        p -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
    return params, state


# -- models -------------------------------------------------------------------------

@dataclass
class GanModels:
    gen: Network
    disc: Network
    gen_opt: OptimizerState
    disc_opt: OptimizerState

    @classmethod
    def create(cls, gan_cfg: GanConfig, seed: int) -> "GanModels":
        gen = build_generator(gan_cfg, derive_seed(seed, "init", 0))
        disc = build_discriminator(gan_cfg, derive_seed(seed, "init", 1))
        return cls(gen, disc, OptimizerState.zeros_like(gen.parameters()),
                   OptimizerState.zeros_like(disc.parameters()))

    def copy(self) -> "GanModels":
        import copy
        return copy.deepcopy(self)

    def apply_gen(self, grads, cfg: TrainConfig):
        optimizer_step(self.gen.parameters(), grads, self.gen_opt, cfg,
                       [f"generator.{n}" for n, _ in self.gen.named_parameters()])

    def apply_disc(self, grads, cfg: TrainConfig):
        optimizer_step(self.disc.parameters(), grads, self.disc_opt, cfg,
                       [f"discriminator.{n}" for n, _ in self.disc.named_parameters()])


def replicate(models: GanModels, R: int) -> list[GanModels]:
    return [models.copy() for _ in range(R)]


@dataclass
class GlobalBatch:
    """Real grids in deposited-energy units plus their labels."""

    grids: np.ndarray
    labels: LabelBatch

    def __len__(self):
        return len(self.labels)


# -- generator-input preparation ------------------------------------------------------

def draw_noise(seed: int, purpose: str, key: tuple, indices, latent_dim: int) -> np.ndarray:
    rows = [stream(seed, purpose, *key, i).uniform(-1.0, 1.0, latent_dim) for i in indices]
    return np.array(rows).reshape(len(rows), latent_dim)


def resample_labels(seed: int, key: tuple, indices, pool: LabelBatch) -> LabelBatch:
    """Draw each sample's labels (with replacement) from the batch's real labels."""
    idx = [int(stream(seed, "gen_labels", *key, i).integers(len(pool))) for i in indices]
    return pool.take(np.array(idx, dtype=np.int64))


@dataclass
class ShardInputs:
    fake_input: np.ndarray
    gen_inputs: list
    gen_labels: list


def prepare_shard(indices, labels: LabelBatch, pool: LabelBatch, key: tuple, gan_cfg: GanConfig,
                  cfg: TrainConfig) -> ShardInputs:
    """Noise, resampled labels and concatenated generator inputs for one shard.

    ``labels`` are the shard's real labels (used for the fake discriminator
    batch); ``pool`` is the whole batch's label set for resampling.
    """
    scale = gan_cfg.max_energy
    z = draw_noise(cfg.seed, "disc_noise", key, indices, gan_cfg.latent_dim)
    fake_input = make_generator_input(z, labels.ep / scale, labels.theta)
    gen_inputs, gen_labels = [], []
    for s in range(cfg.generator_steps_per_batch):
        lab = resample_labels(cfg.seed, key + (s,), indices, pool)
        z = draw_noise(cfg.seed, "gen_noise", key + (s,), indices, gan_cfg.latent_dim)
        gen_inputs.append(make_generator_input(z, lab.ep / scale, lab.theta))
        gen_labels.append(lab)
    return ShardInputs(fake_input, gen_inputs, gen_labels)


# -- single-replica steps --------------------------------------------------------------

def _check_finite(res, what):
    if not np.isfinite(res.total):
        raise NonFiniteError(f"non-finite {what} loss: {res.terms}")


def discriminator_step(real_grids, labels: LabelBatch, models: GanModels, gan_cfg: GanConfig,
                       cfg: TrainConfig):
    """Two discriminator updates, on real then generated grids.

    The fake batch reuses the real labels with fresh noise keyed by the
    discriminator's update counter. Returns both loss results.
    """
    real = np.asarray(real_grids) * gan_cfg.energy_scale
    idx = range(len(labels))
    z = draw_noise(cfg.seed, "disc_noise", (models.disc_opt.step,), idx, gan_cfg.latent_dim)
    fake_input = make_generator_input(z, labels.ep / gan_cfg.max_energy, labels.theta)
    res_real, grads = discriminator_pass(models.disc, real, labels, True, gan_cfg, cfg.precision)
    _check_finite(res_real, "discriminator real")
    models.apply_disc(grads, cfg)
    fake = generate_batch_stats(models.gen, fake_input, cfg.precision)
    res_fake, grads = discriminator_pass(models.disc, fake, labels, False, gan_cfg, cfg.precision)
    _check_finite(res_fake, "discriminator fake")
    models.apply_disc(grads, cfg)
    return res_real, res_fake


def generator_step(labels: LabelBatch, models: GanModels, gan_cfg: GanConfig, cfg: TrainConfig):
    """One generator update through the frozen discriminator.

    Noise and labels (resampled from ``labels``) are drawn fresh, keyed by
    the generator's update counter.
    """
    key = (models.gen_opt.step,)
    idx = range(len(labels))
    lab = resample_labels(cfg.seed, key, idx, labels)
    z = draw_noise(cfg.seed, "gen_noise", key, idx, gan_cfg.latent_dim)
    gen_input = make_generator_input(z, lab.ep / gan_cfg.max_energy, lab.theta)
    res, grads, _ = generator_pass(models.gen, models.disc, gen_input, lab, gan_cfg, cfg.precision)
    _check_finite(res, "generator")
    models.apply_gen(grads, cfg)
    return res


# -- epoch driver ------------------------------------------------------------------------

LOSS_COLUMNS = (
    "d_real_bce", "d_real_ep", "d_real_theta", "d_real_total",
    "d_fake_bce", "d_fake_ep", "d_fake_theta", "d_fake_total",
    "g_bce", "g_ep", "g_theta", "g_ecal", "g_total",
)
TIME_COLUMNS = ("t_prep_s", "t_disc_real_s", "t_disc_fake_s", "t_gen_s")


@dataclass
class BatchRecord:
    epoch: int
    batch: int
    t_prep_s: float
    t_disc_real_s: float
    t_disc_fake_s: float
    t_gen_s: float
    losses: dict
    dropped: int = 0


@dataclass
class EpochReport:
    epoch: int
    variant: str
    replicas: int
    batches: list = field(default_factory=list)
    wall_s: float = 0.0

    def totals(self) -> dict:
        out = {c: float(sum(getattr(b, c) for b in self.batches)) for c in TIME_COLUMNS}
        out["wall_s"] = self.wall_s
        return out

    def mean_losses(self) -> dict:
        return {c: float(np.mean([b.losses[c] for b in self.batches])) for c in LOSS_COLUMNS}

    def to_csv(self, timings: bool = True) -> str:
        cols = ["epoch", "batch"] + (list(TIME_COLUMNS) if timings else []) + list(LOSS_COLUMNS)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for b in self.batches:
            row = [b.epoch, b.batch]
            if timings:
                row += [f"{getattr(b, c):.6f}" for c in TIME_COLUMNS]
            row += [repr(float(b.losses[c])) for c in LOSS_COLUMNS]
            w.writerow(row)
        return buf.getvalue()


def _terms(prefix, res, keys):
    out = {f"{prefix}_{k}": res.terms[k] for k in keys}
    out[f"{prefix}_total"] = res.total
    return out


def _mean_dicts(dicts):
    return {k: float(np.mean([d[k] for d in dicts])) for k in dicts[0]}


def train_batch(variant: str, group: ReplicaGroup, batch: GlobalBatch, replicas: list[GanModels],
                gan_cfg: GanConfig, cfg: TrainConfig, epoch: int, index: int) -> BatchRecord:
    R = group.replicas
    slices, dropped = shard_slices(len(batch), R)
    n_used = len(batch) - dropped
    pool = batch.labels.take(np.arange(n_used))
    real = batch.grids[:n_used] * gan_cfg.energy_scale
    key = (epoch, index)
    shard_idx = [range(s.start, s.stop) for s in slices]
    shard_labels = [pool.take(np.arange(s.start, s.stop)) for s in slices]

    t_prep_coord = 0.0
    inputs = [None] * R
    if variant == "builtin":
        t0 = time.thread_time()
        for r in range(R):
            inputs[r] = prepare_shard(shard_idx[r], shard_labels[r], pool, key, gan_cfg, cfg)
        t_prep_coord = time.thread_time() - t0

    prep_times = [0.0] * R

    def disc_real(coll, r):
        if variant == "custom":
            t0 = time.thread_time()
            inputs[r] = prepare_shard(shard_idx[r], shard_labels[r], pool, key, gan_cfg, cfg)
            prep_times[r] = time.thread_time() - t0
            coll.barrier()
        res, grads = discriminator_pass(replicas[r].disc, real[slices[r]], shard_labels[r], True,
                                        gan_cfg, cfg.precision)
        _check_finite(res, "discriminator real")
        return res, grads

    def disc_fake(coll, r):
        fake = generate_batch_stats(replicas[r].gen, inputs[r].fake_input, cfg.precision, coll.reducer(r))
        res, grads = discriminator_pass(replicas[r].disc, fake, shard_labels[r], False, gan_cfg, cfg.precision)
        _check_finite(res, "discriminator fake")
        return res, grads

    def gen_phase(s):
        def run(coll, r):
            res, grads, _ = generator_pass(replicas[r].gen, replicas[r].disc, inputs[r].gen_inputs[s],
                                           inputs[r].gen_labels[s], gan_cfg, cfg.precision, coll.reducer(r))
            _check_finite(res, "generator")
            return res, grads
        return run

    apply_disc = [lambda g, m=m: m.apply_disc(g, cfg) for m in replicas]
    apply_gen = [lambda g, m=m: m.apply_gen(g, cfg) for m in replicas]

    step = run_sync_step(group, [disc_real] * R, apply_disc)
    t_prep = t_prep_coord + max(prep_times)
    t_real = max(t - p for t, p in zip(step.thread_times, prep_times))
    d_real = _mean_dicts([_terms("d_real", res, ("bce", "ep", "theta")) for res in step.results])

    step = run_sync_step(group, [disc_fake] * R, apply_disc)
    t_fake = max(step.thread_times)
    d_fake = _mean_dicts([_terms("d_fake", res, ("bce", "ep", "theta")) for res in step.results])

    t_gen, g_terms = 0.0, []
    for s in range(cfg.generator_steps_per_batch):
        step = run_sync_step(group, [gen_phase(s)] * R, apply_gen)
        t_gen += max(step.thread_times)
        g_terms.append(_mean_dicts([_terms("g", res, ("bce", "ep", "theta", "ecal")) for res in step.results]))

    losses = {**d_real, **d_fake, **_mean_dicts(g_terms)}
    return BatchRecord(epoch, index, t_prep, t_real, t_fake, t_gen, losses, dropped)


def train_epoch(variant: str, group: ReplicaGroup, dataset_iter, replicas: list[GanModels],
                gan_cfg: GanConfig, cfg: TrainConfig, epoch: int = 0) -> EpochReport:
    """One epoch of ``cfg.batches_per_epoch`` global batches.

    ``replicas`` holds one model copy per replica; all copies stay identical.
    """
    cfg.validate()
    if variant not in ("builtin", "custom"):
        raise ValueError(f"unknown loop variant {variant!r}")
    if len(replicas) != group.replicas:
        raise ValueError(f"{len(replicas)} model copies for {group.replicas} replicas")
    report = EpochReport(epoch, variant, group.replicas)
    t0 = time.perf_counter()
    it = iter(dataset_iter)
    for k in range(cfg.batches_per_epoch):
        try:
            batch = next(it)
        except StopIteration:
            raise RuntimeError(f"dataset exhausted after {k} of {cfg.batches_per_epoch} batches") from None
        report.batches.append(train_batch(variant, group, batch, replicas, gan_cfg, cfg, epoch, k))
    report.wall_s = time.perf_counter() - t0
    return report
