"""Analytic step/epoch timing of synchronous data-parallel training.

One step on R replicas with per-replica batch b = floor(BS_global / R)::

    compute   = q(b) * (t_fwd + t_bwd) * device.time_factor
                q(b) = lane * ceil(b / lane) on TPU kinds, b otherwise
    prep      = R * t_prep (builtin: serial on the coordinator) or t_prep (custom)
    allreduce = 2 (R-1)/R * N * beta  +  2 (R-1) * alpha        (ring)
    idle      = idle_ratio * 2 (R-1)/R * N * beta

Idle is compute time lost while the bandwidth-bound part of the reduction
drains, so it vanishes with beta. A per-batch event simulation adds
lognormal jitter (sigma = sigma0 * sqrt(workers)) per worker, with the
step waiting on the slowest worker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from ..rng import stream

DEVICE_KINDS = ("gpu-v100", "tpu-v2-core", "tpu-v3-core")
VARIANTS = ("builtin", "custom")


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class DeviceSpec:
    kind: str
    lane_width: int | None = None     # MXU width; TPU kinds only
    time_factor: float = 1.0          # multiplies per-sample compute time

    def __post_init__(self):
        if self.kind not in DEVICE_KINDS:
            raise ValueError(f"unknown device kind {self.kind!r}; expected one of {DEVICE_KINDS}")
        if self.kind.startswith("tpu") != (self.lane_width is not None):
            raise ValueError("lane_width applies to TPU kinds only, and they require it")
        if self.time_factor <= 0:
            raise ValueError("time_factor must be positive")

    def quantize(self, per_replica_batch: int) -> int:
        if self.lane_width is None:
            return per_replica_batch
        return self.lane_width * math.ceil(per_replica_batch / self.lane_width)


DEVICES = {
    "gpu-v100": DeviceSpec("gpu-v100"),
    "tpu-v2-core": DeviceSpec("tpu-v2-core", 128, 2.0),
    "tpu-v3-core": DeviceSpec("tpu-v3-core", 128, 1.0),
}


@dataclass(frozen=True)
class ClusterTopology:
    nodes: int = 1
    devices_per_node: int = 1
    workers: int | None = None
    devices_per_worker: int | None = None
    alpha: float = 0.0     # per-hop latency, s
    beta: float = 0.0      # per-element transfer cost, s

    def __post_init__(self):
        if self.workers is None:
            object.__setattr__(self, "workers", self.nodes)
        if self.devices_per_worker is None:
            object.__setattr__(self, "devices_per_worker", self.R // self.workers if self.workers else 0)
        if min(self.nodes, self.devices_per_node, self.workers, self.devices_per_worker) < 1:
            raise TopologyError("all layout counts must be >= 1")
        if self.workers * self.devices_per_worker != self.R:
            raise TopologyError(
                f"{self.workers} workers x {self.devices_per_worker} devices != "
                f"{self.nodes} nodes x {self.devices_per_node} devices")
        if self.alpha < 0 or self.beta < 0:
            raise TopologyError("alpha and beta must be >= 0")

    @property
    def R(self) -> int:
        return self.nodes * self.devices_per_node

    @classmethod
    def for_replicas(cls, R: int, devices_per_node: int = 8, alpha: float = 0.0, beta: float = 0.0,
                     one_worker_per_node: bool = True) -> "ClusterTopology":
        per_node = min(R, devices_per_node)
        if R % per_node:
            raise TopologyError(f"{R} replicas do not fill nodes of {devices_per_node}")
        nodes = R // per_node
        if one_worker_per_node:
            return cls(nodes, per_node, nodes, per_node, alpha, beta)
        return cls(nodes, per_node, R, 1, alpha, beta)


@dataclass(frozen=True)
class PerfParams:
    t_fwd: float = 0.0            # s per sample per forward pass
    t_bwd: float = 0.0            # s per sample per backward pass
    t_prep: float = 0.0           # s per replica-batch of generator-input preparation
    warmup_first_batch: float = 0.0
    jitter_sigma0: float = 0.02
    model_elements: int = 1_000_000
    idle_ratio: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be >= 0")

    def replace(self, **kw) -> "PerfParams":
        return PerfParams(**{**self.__dict__, **kw})


@dataclass(frozen=True)
class TimeBreakdown:
    prep_s: float
    forward_s: float
    backward_s: float
    allreduce_s: float
    idle_s: float

    @property
    def total(self) -> float:
        return self.prep_s + self.forward_s + self.backward_s + self.allreduce_s + self.idle_s

    @property
    def compute_s(self) -> float:
        return self.forward_s + self.backward_s

    def fractions(self) -> dict:
        t = self.total
        parts = {"prep": self.prep_s, "forward": self.forward_s, "backward": self.backward_s,
                 "allreduce": self.allreduce_s, "idle": self.idle_s}
        if t == 0:
            return {k: 0.0 for k in parts}
        return {k: v / t for k, v in parts.items()}

    def scaled(self, c: float) -> "TimeBreakdown":
        return TimeBreakdown(*(c * getattr(self, f.name) for f in fields(self)))


def ring_allreduce_time(R: int, elements: int, alpha: float, beta: float) -> tuple[float, float]:
    """(bandwidth part, latency part) of a ring all-reduce."""
    if R <= 1:
        return 0.0, 0.0
    return 2.0 * (R - 1) / R * elements * beta, 2.0 * (R - 1) * alpha


def step_time(variant: str, topology: ClusterTopology, device: DeviceSpec, batch_global: int,
              params: PerfParams) -> TimeBreakdown:
    if variant not in VARIANTS:
        raise ValueError(f"unknown loop variant {variant!r}")
    R = topology.R
    if batch_global < R:
        raise TopologyError(f"global batch {batch_global} smaller than replica count {R}")
    q = device.quantize(batch_global // R)
    prep = params.t_prep * (R if variant == "builtin" else 1)
    bw, lat = ring_allreduce_time(R, params.model_elements, topology.alpha, topology.beta)
    return TimeBreakdown(
        prep_s=prep,
        forward_s=q * params.t_fwd * device.time_factor,
        backward_s=q * params.t_bwd * device.time_factor,
        allreduce_s=bw + lat,
        idle_s=params.idle_ratio * bw,
    )


def steps_per_epoch(dataset_size: int, batch_global: int) -> int:
    if dataset_size < batch_global:
        raise ValueError(f"dataset of {dataset_size} is smaller than one batch of {batch_global}")
    return dataset_size // batch_global


def epoch_time(variant: str, topology: ClusterTopology, device: DeviceSpec, batch_global: int,
               dataset_size: int, params: PerfParams, include_warmup: bool = False) -> float:
    """Steps x step time; with ``include_warmup`` batch 1 also pays the warmup."""
    t = steps_per_epoch(dataset_size, batch_global) * step_time(variant, topology, device, batch_global,
                                                                params).total
    return t + (params.warmup_first_batch if include_warmup else 0.0)


@dataclass
class ScalingPoint:
    R: int
    batch_global: int
    epoch_s: float
    speedup: float
    breakdown: TimeBreakdown


def scaling_curve(variant: str, R_list, device: DeviceSpec, params: PerfParams, dataset_size: int,
                  per_replica_batch: int | None = None, batch_global: int | None = None,
                  devices_per_node: int = 8, alpha: float = 0.0, beta: float = 0.0) -> list[ScalingPoint]:
    """Epoch time over replica counts; speedup is relative to the first entry.

    Give ``per_replica_batch`` for weak scaling or ``batch_global`` for a
    fixed global batch.
    """
    R_list = list(R_list)
    if not R_list:
        raise ValueError("R_list must not be empty")
    if (per_replica_batch is None) == (batch_global is None):
        raise ValueError("give exactly one of per_replica_batch and batch_global")
    out = []
    for R in R_list:
        topo = ClusterTopology.for_replicas(R, devices_per_node, alpha, beta)
        bs = per_replica_batch * R if per_replica_batch is not None else batch_global
        bd = step_time(variant, topo, device, bs, params)
        t = steps_per_epoch(dataset_size, bs) * bd.total
        out.append(ScalingPoint(R, bs, t, out[0].epoch_s / t if out else 1.0, bd))
    return out


def profile_breakdown(variant: str, topology: ClusterTopology, device: DeviceSpec, batch_global: int,
                      params: PerfParams) -> dict:
    return step_time(variant, topology, device, batch_global, params).fractions()


def simulate_batches(variant: str, topology: ClusterTopology, device: DeviceSpec, batch_global: int,
                     params: PerfParams, n_batches: int, seed: int = 0) -> np.ndarray:
    """Per-batch wall times with warmup on batch 0 and per-worker jitter.

    Each worker's compute is scaled by a mean-one lognormal factor with
    sigma = sigma0 * sqrt(workers); the step waits for the slowest worker.
    """
    bd = step_time(variant, topology, device, batch_global, params)
    sigma = params.jitter_sigma0 * math.sqrt(topology.workers)
    rng = stream(seed, "jitter", topology.workers, topology.R)
    factors = rng.lognormal(-0.5 * sigma ** 2, sigma, size=(n_batches, topology.workers)).max(axis=1)
    times = bd.compute_s * factors + (bd.total - bd.compute_s)
    if n_batches:
        times[0] += params.warmup_first_batch
    return times
