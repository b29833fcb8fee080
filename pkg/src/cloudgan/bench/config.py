"""Experiment configuration: TOML with flat dotted keys.

Every accepted key is listed in ``KEYS`` with its type and default;
anything else is rejected with an error naming the key.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

from ..gan import ConfigError, GanConfig, LossWeights
from ..training import TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

# key: (type, default, description)
KEYS = {
    "scenario": (str, None, "scenario name from the catalog"),
    "seed": (int, 0, "master seed"),
    "out": (str, "out", "output directory"),
    "measure": (bool, False, "also record measured wall-clock timings (non-deterministic)"),
    "gan.latent_dim": (int, 64, "generator noise width"),
    "gan.grid": (list, [8, 8, 8], "calorimeter grid Nx, Ny, Nz"),
    "gan.gen_channels": (list, [8, 8], "generator conv widths"),
    "gan.disc_channels": (list, [8, 8, 8], "discriminator conv widths"),
    "gan.disc_strides": (list, [1, 2, 2], "discriminator conv strides"),
    "gan.w_bce": (float, 1.0, "adversarial loss weight"),
    "gan.w_ep": (float, 0.1, "Ep regression loss weight"),
    "gan.w_ang": (float, 0.1, "angle regression loss weight"),
    "gan.w_ecal": (float, 0.1, "Ecal loss weight"),
    "gan.energy_scale": (float, 100.0, "network-space grid = deposits x scale"),
    "gan.max_energy": (float, 100.0, "Ep normalisation"),
    "train.epochs": (int, 5, "training epochs"),
    "train.batch_size": (int, 32, "global batch size"),
    "train.batches_per_epoch": (int, 0, "0 = events // batch_size"),
    "train.lr": (float, 1e-3, "learning rate"),
    "train.optimizer": (str, "adam", "sgd or adam"),
    "train.loop_variant": (str, "custom", "builtin or custom"),
    "train.precision": (str, "full", "full or bfloat16"),
    "train.replicas": (int, 1, "data-parallel replicas"),
    "data.n_events": (int, 512, "synthetic training events"),
    "data.n_validation": (int, 128, "synthetic validation events"),
    "data.ep_range": (list, [10.0, 100.0], "primary energy range"),
    "data.theta_range": (list, [1.0471975511965976, 2.0943951023931953], "angle range, radians"),
    "data.noise_level": (float, 0.05, "total-energy fluctuation"),
    "data.shuffle_buffer": (int, 64, "shuffle buffer size"),
    "data.prefetch_depth": (int, 0, "prefetch queue depth, 0 = off"),
    "topology.nodes": (int, 4, "nodes"),
    "topology.gpus_per_node": (int, 8, "devices per node"),
    "topology.workers": (int, 4, "workers"),
    "topology.gpus_per_worker": (int, 8, "devices per worker"),
    "perf.t_prep": (float, -1.0, "override generator-input prep time per replica-batch, s (-1 = preset)"),
    "perf.alpha": (float, -1.0, "override all-reduce latency, s (-1 = preset)"),
    "perf.beta": (float, -1.0, "override all-reduce per-element cost, s (-1 = preset)"),
    "perf.jitter_sigma0": (float, 0.02, "per-batch lognormal jitter at one worker"),
    "perf.n_batches": (int, 200, "simulated batches for jitter statistics"),
    "sweep.replicas": (list, [], "replica counts (scenario default when empty)"),
    "sweep.batch_sizes": (list, [], "per-replica batch sizes (scenario default when empty)"),
    "prices": (str, "", "price table path (built-in ratio-faithful table when empty)"),
    "cost.objective": (str, "cheapest", "cheapest, fastest or cheapest_under_deadline"),
    "cost.deadline_s": (float, 0.0, "deadline for cheapest_under_deadline"),
}


def _flatten(doc: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in doc.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _coerce(key: str, value):
    typ = KEYS[key][0]
    if typ is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if typ is bool and not isinstance(value, bool):
        raise ConfigError(f"config key {key!r} must be true or false, got {value!r}")
    if typ is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(f"config key {key!r} must be an integer, got {value!r}")
    if not isinstance(value, typ):
        raise ConfigError(f"config key {key!r} must be of type {typ.__name__}, got {value!r}")
    return value


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)
    base_dir: Path = field(default_factory=Path.cwd)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def scenario(self) -> str:
        return self.values["scenario"]

    @property
    def seed(self) -> int:
        return self.values["seed"]

    @property
    def out_dir(self) -> Path:
        p = Path(self.values["out"])
        return p if p.is_absolute() else self.base_dir / p

    def path(self, key: str) -> Path | None:
        v = self.values[key]
        if not v:
            return None
        p = Path(v)
        return p if p.is_absolute() else self.base_dir / p

    def gan(self) -> GanConfig:
        v = self.values
        return GanConfig(
            latent_dim=v["gan.latent_dim"], grid_shape=tuple(v["gan.grid"]),
            gen_channels=tuple(v["gan.gen_channels"]), disc_channels=tuple(v["gan.disc_channels"]),
            disc_strides=tuple(v["gan.disc_strides"]),
            weights=LossWeights(v["gan.w_bce"], v["gan.w_ep"], v["gan.w_ang"], v["gan.w_ecal"]),
            max_energy=v["gan.max_energy"], energy_scale=v["gan.energy_scale"],
        )

    def train(self) -> TrainConfig:
        v = self.values
        bpe = v["train.batches_per_epoch"] or max(1, v["data.n_events"] // v["train.batch_size"])
        return TrainConfig(
            n_epochs=v["train.epochs"], batches_per_epoch=bpe, global_batch_size=v["train.batch_size"],
            lr=v["train.lr"], optimizer=v["train.optimizer"], seed=v["seed"],
            loop_variant=v["train.loop_variant"], precision=v["train.precision"],
        )


def from_dict(doc: dict, base_dir=None) -> ExperimentConfig:
    flat = _flatten(doc)
    unknown = sorted(set(flat) - set(KEYS))
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r}" + (f" (and {len(unknown) - 1} more)" if len(unknown) > 1 else ""))
    values = {k: entry[1] for k, entry in KEYS.items()}
    for k, v in flat.items():
        values[k] = _coerce(k, v)
    if not values["scenario"]:
        raise ConfigError("config key 'scenario' is required")
    cfg = ExperimentConfig(values, Path(base_dir) if base_dir else Path.cwd())
    try:
        cfg.gan().validate()
        cfg.train().validate()
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from e
    for key in ("gan.grid", "gan.gen_channels", "gan.disc_channels", "gan.disc_strides", "sweep.replicas",
                "sweep.batch_sizes"):
        if not all(isinstance(x, int) and not isinstance(x, bool) and x >= 1 for x in values[key]):
            raise ConfigError(f"config key {key!r} must be a list of positive integers")
    for key in ("data.ep_range", "data.theta_range"):
        r = values[key]
        if len(r) != 2 or not all(isinstance(x, (int, float)) for x in r) or not r[0] < r[1]:
            raise ConfigError(f"config key {key!r} must be [low, high] with low < high")
    if values["data.n_events"] < values["train.batch_size"]:
        raise ConfigError("config key 'data.n_events' must be at least one batch")
    return cfg


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as f:
            doc = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    doc.update(overrides or {})
    cfg = from_dict(doc, base_dir=path.parent)
    prices = cfg.path("prices")
    if prices is not None and not prices.exists():
        raise ConfigError(f"config key 'prices' points to missing file {prices}")
    return cfg
