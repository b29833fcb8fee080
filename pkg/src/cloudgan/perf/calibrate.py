"""Least-squares calibration of timing-model constants.

Fits use a plain Nelder-Mead simplex (reflection 1, expansion 2,
contraction 0.5, shrink 0.5), stopping when the largest vertex distance
from the best vertex drops below ``tol`` or after ``max_iter`` iterations.
"""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import (
    DEVICES, ClusterTopology, DeviceSpec, PerfParams, epoch_time, scaling_curve, step_time,
)

DATASET_SIZE = 196_608          # 1536 batches of 128


@dataclass
class NMResult:
    x: np.ndarray
    fun: float
    iterations: int
    converged: bool


def nelder_mead(f, x0, step=None, tol: float = 1e-10, max_iter: int = 10_000) -> NMResult:
    x0 = np.asarray(x0, dtype=np.float64)
    n = len(x0)
    if step is None:
        step = np.where(x0 != 0, 0.05 * np.abs(x0), 0.00025)
    simplex = [x0] + [x0 + np.eye(n)[i] * np.broadcast_to(step, (n,))[i] for i in range(n)]
    values = [f(x) for x in simplex]
    it = 0
    converged = False
    while it < max_iter:
        order = np.argsort(values, kind="stable")
        simplex = [simplex[i] for i in order]
        values = [values[i] for i in order]
        if max(np.linalg.norm(x - simplex[0]) for x in simplex[1:]) < tol:
            converged = True
            break
        it += 1
        centroid = np.mean(simplex[:-1], axis=0)
        worst = simplex[-1]
        xr = centroid + (centroid - worst)
        fr = f(xr)
        if fr < values[0]:
            xe = centroid + 2.0 * (centroid - worst)
            fe = f(xe)
            simplex[-1], values[-1] = (xe, fe) if fe < fr else (xr, fr)
            continue
        if fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-1]:
            xc = centroid + 0.5 * (xr - centroid)
            fc = f(xc)
            accept = fc <= fr
        else:
            xc = centroid + 0.5 * (worst - centroid)
            fc = f(xc)
            accept = fc < values[-1]
        if accept:
            simplex[-1], values[-1] = xc, fc
            continue
        best = simplex[0]
        simplex = [best] + [best + 0.5 * (x - best) for x in simplex[1:]]
        values = [values[0]] + [f(x) for x in simplex[1:]]
    i = int(np.argmin(values))
    return NMResult(simplex[i], float(values[i]), it, converged)


# -- curve families ---------------------------------------------------------------

def _linear(p, x, ctx):
    return p[0] * x + p[1]


def _inverse(p, x, ctx):
    return p[0] / x + p[1]


def _ring(p, x, ctx):
    base, alpha, beta = p
    frac = 2.0 * (x - 1.0) / x
    return base + (1.0 + ctx.get("idle_ratio", 0.0)) * frac * ctx.get("elements", 1) * beta + 2.0 * (x - 1.0) * alpha


FAMILIES = {
    "linear": (("slope", "intercept"), _linear),
    "inverse": (("scale", "offset"), _inverse),
    # step time vs replica count: constant part plus ring all-reduce (and idle)
    "ring": (("base_s", "alpha", "beta"), _ring),
}


class CalibrationError(ValueError):
    pass


@dataclass
class CalibrationResult:
    family: str
    params: dict
    residual_norm: float
    iterations: int
    converged: bool
    residuals: list = field(default_factory=list)

    def to_toml(self) -> str:
        lines = [f'family = "{self.family}"']
        lines += [f"params.{k} = {v!r}" for k, v in self.params.items()]
        lines += [f"residual_norm = {self.residual_norm!r}", f"iterations = {self.iterations}",
                  f"converged = {'true' if self.converged else 'false'}"]
        return "\n".join(lines) + "\n"


def calibrate(measured, model_family: str, init=None, context=None, tol: float = 1e-10,
              max_iter: int = 10_000) -> CalibrationResult:
    """Least-squares fit of a curve family to ``(x, seconds)`` points.

    Parameters are optimised as multiples of their initial values so the
    simplex tolerance is relative; zero initial values get unit scale.
    """
    if model_family not in FAMILIES:
        raise CalibrationError(f"unknown model family {model_family!r}; expected one of {sorted(FAMILIES)}")
    names, fn = FAMILIES[model_family]
    pts = np.asarray(measured, dtype=np.float64).reshape(-1, 2)
    x, y = pts[:, 0], pts[:, 1]
    if len(pts) < len(names):
        raise CalibrationError(f"{len(pts)} points cannot determine {len(names)} parameters")
    if np.all(x == x[0]):
        raise CalibrationError("degenerate input: all x values are equal")
    if model_family == "inverse" and np.any(x == 0):
        raise CalibrationError("inverse family needs x != 0")
    ctx = dict(context or {})
    if init is None:
        init = _default_init(model_family, x, y)
    init = np.asarray([init[k] for k in names] if isinstance(init, dict) else init, dtype=np.float64)
    scale = np.where(init != 0, np.abs(init), 1.0)
    yscale = max(float(np.mean(np.abs(y))), 1e-300)

    def loss(u):
        r = (fn(u * scale, x, ctx) - y) / yscale
        return float(r @ r)

    res = nelder_mead(loss, init / scale, step=np.full(len(names), 0.1), tol=tol, max_iter=max_iter)
    p = res.x * scale
    resid = fn(p, x, ctx) - y
    return CalibrationResult(model_family, dict(zip(names, map(float, p))), float(np.linalg.norm(resid)),
                             res.iterations, res.converged, [float(r) for r in resid])


def _default_init(family, x, y):
    if family == "linear":
        slope = (y[-1] - y[0]) / (x[-1] - x[0]) if x[-1] != x[0] else 1.0
        return [slope, y[0] - slope * x[0]]
    if family == "inverse":
        return [float(np.mean(y * x)), 0.0]
    return [float(np.min(y)), 1e-3, 1e-6]


def read_measured_csv(path) -> list[tuple[float, float]]:
    """Rows of ``x,seconds`` with a header line."""
    with open(Path(path), newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise CalibrationError(f"{path}: empty file")
    out = []
    for i, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            out.append((float(row[0]), float(row[1])))
        except (ValueError, IndexError):
            raise CalibrationError(f"{path}:{i}: expected 'x,seconds', got {row}") from None
    return out


# -- calibrated presets --------------------------------------------------------------

@dataclass(frozen=True)
class Preset:
    name: str
    device: DeviceSpec
    params: PerfParams
    alpha: float
    beta: float
    per_replica_batch: int
    dataset_size: int
    devices_per_node: int
    variant: str = "custom"

    def topology(self, R: int, one_worker_per_node: bool = True) -> ClusterTopology:
        return ClusterTopology.for_replicas(R, self.devices_per_node, self.alpha, self.beta, one_worker_per_node)

    def step(self, R: int, per_replica_batch: int | None = None, device: DeviceSpec | None = None):
        b = per_replica_batch or self.per_replica_batch
        return step_time(self.variant, self.topology(R), device or self.device, b * R, self.params)

    def epoch(self, R: int, per_replica_batch: int | None = None, device: DeviceSpec | None = None) -> float:
        b = per_replica_batch or self.per_replica_batch
        return epoch_time(self.variant, self.topology(R), device or self.device, b * R, self.dataset_size,
                          self.params)

    def curve(self, R_list, variant: str | None = None):
        return scaling_curve(variant or self.variant, R_list, self.device, self.params, self.dataset_size,
                             per_replica_batch=self.per_replica_batch, devices_per_node=self.devices_per_node,
                             alpha=self.alpha, beta=self.beta)


# published anchors the presets are fitted to
TPU_TARGETS = {"idle": 0.007, "forward": 0.38, "backward": 0.61, "allreduce": 0.002, "prep": 0.001,
               "epoch_128_s": 30.0}
GPU_TARGETS = {"speedup_128": 52.0, "idle_64": 0.029, "idle_128": 0.029, "epoch_128_s": 60.0}
FWD_SHARE = TPU_TARGETS["forward"] / (TPU_TARGETS["forward"] + TPU_TARGETS["backward"])
TPU_ALPHA = 1e-6
GPU_T_PREP = 0.1
GPU_IDLE_RATIO = 1.0
ELEMENTS = 1_000_000


def _fit(objective, x0):
    res = nelder_mead(objective, x0, step=np.full(len(x0), 0.5), tol=1e-10, max_iter=10_000)
    # one restart from the optimum guards against simplex collapse
    res = nelder_mead(objective, res.x, step=np.full(len(x0), 0.05), tol=1e-10, max_iter=10_000)
    return res


@functools.lru_cache(maxsize=None)
def tpu_preset() -> Preset:
    """TPU v3 cores, 128 samples per core, fitted to the 8-core profile and 30 s at 128 cores."""
    device = DEVICES["tpu-v3-core"]

    def build(u):
        t_fwd, t_bwd, t_prep, bw, idle = map(float, np.exp(u))
        params = PerfParams(t_fwd, t_bwd, t_prep, warmup_first_batch=20.0, model_elements=ELEMENTS,
                            idle_ratio=idle)
        return Preset("tpu-v3", device, params, TPU_ALPHA, bw / ELEMENTS, 128, DATASET_SIZE, 8)

    def objective(u):
        p = build(u)
        fr = p.step(8).fractions()
        r = [(fr[k] - TPU_TARGETS[k]) * 100 for k in ("idle", "forward", "backward", "allreduce", "prep")]
        r.append((p.epoch(128) / TPU_TARGETS["epoch_128_s"] - 1.0) * 100)
        return float(np.dot(r, r))

    return build(_fit(objective, np.log([0.01, 0.01, 0.001, 0.001, 1.0])).x)


@functools.lru_cache(maxsize=None)
def gpu_preset() -> Preset:
    """V100 GPUs, 96 samples per GPU, 8 per node, fitted to the 2-128 GPU scaling anchors."""
    device = DEVICES["gpu-v100"]

    def build(u):
        t_comp, alpha, bw = map(float, np.exp(u))
        params = PerfParams(t_comp * FWD_SHARE, t_comp * (1 - FWD_SHARE), GPU_T_PREP, warmup_first_batch=5.0,
                            model_elements=ELEMENTS, idle_ratio=GPU_IDLE_RATIO)
        return Preset("gpu-v100", device, params, alpha, bw / ELEMENTS, 96, DATASET_SIZE, 8)

    def objective(u):
        p = build(u)
        e2, e128 = p.epoch(2), p.epoch(128)
        r = [
            (e2 / e128 / GPU_TARGETS["speedup_128"] - 1.0) * 100,
            (e128 / GPU_TARGETS["epoch_128_s"] - 1.0) * 100,
            (p.step(64).fractions()["idle"] - GPU_TARGETS["idle_64"]) * 100,
            (p.step(128).fractions()["idle"] - GPU_TARGETS["idle_128"]) * 100,
        ]
        return float(np.dot(r, r))

    return build(_fit(objective, np.log([0.03, 1e-3, 0.05])).x)


def preset(name: str) -> Preset:
    presets = {"tpu-v3": tpu_preset, "gpu-v100": gpu_preset}
    if name not in presets:
        raise KeyError(f"unknown preset {name!r}; expected one of {sorted(presets)}")
    return presets[name]()


def weak_scaling_points(epoch_at_max: float = 30.0, cores=(8, 16, 32, 64, 128)):
    """Linear weak-scaling series through ``epoch_at_max`` at the largest core count."""
    top = max(cores)
    return [(float(c), epoch_at_max * top / c) for c in cores]


def per_core_epoch_seconds(points) -> float:
    """Core-seconds per epoch from an inverse fit of epoch time vs cores."""
    return calibrate(points, "inverse").params["scale"]


__all__ = [
    "CalibrationError", "CalibrationResult", "DATASET_SIZE", "FAMILIES", "GPU_TARGETS", "NMResult", "Preset",
    "TPU_TARGETS", "calibrate", "gpu_preset", "nelder_mead", "per_core_epoch_seconds", "preset",
    "read_measured_csv", "tpu_preset", "weak_scaling_points",
]
