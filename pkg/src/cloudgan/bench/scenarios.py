"""Scenario catalog: each entry emits CSV tables and SVG plots and derives
its summary claims by reading those CSVs back."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..cost import PriceTable, reference_options, rank_options, ratio_faithful_prices
from ..data import ShowerDataset, ShowerParams, events_to_arrays, synth_dataset, write_records
from ..gan import DiscOutputs, GanConfig, compute_ecal, generate_batch_stats, make_generator_input
from ..parallel import ReplicaGroup
from ..perf import DEVICES, ClusterTopology, Preset, gpu_preset, simulate_batches, step_time, tpu_preset
from ..rng import stream
from ..tensor import evaluate
from ..training import GanModels, TrainConfig, replicate, train_epoch
from ..validation import aux_regression_error, centroid_theta, energy_profile, profile_deviation
from .config import ExperimentConfig
from .plot import PlotStyle, Series, emit_plot


class UnknownScenarioError(KeyError):
    def __str__(self):
        return self.args[0]


@dataclass
class RunContext:
    cfg: ExperimentConfig
    out_dir: Path
    files: list = field(default_factory=list)

    def write_csv(self, name: str, header, rows) -> Path:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
        path = self.out_dir / name
        path.write_text(buf.getvalue(), encoding="utf-8", newline="\n")
        self.files.append(path)
        return path

    def read_csv(self, name: str) -> list[dict]:
        with open(self.out_dir / name, newline="") as f:
            return [{k: _parse(v) for k, v in row.items()} for row in csv.DictReader(f)]

    def plot(self, name: str, series, style: PlotStyle) -> Path:
        path = emit_plot(series, style, self.out_dir / name)
        self.files.append(path)
        return path


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def _parse(v: str):
    for conv in (int, float):
        try:
            return conv(v)
        except ValueError:
            pass
    return v


def _col(rows, key, where=None):
    return [r[key] for r in rows if where is None or all(r[k] == v for k, v in where.items())]


def _overrides(cfg: ExperimentConfig, p: Preset) -> Preset:
    params = p.params.replace(jitter_sigma0=cfg["perf.jitter_sigma0"])
    if cfg["perf.t_prep"] >= 0:
        params = params.replace(t_prep=cfg["perf.t_prep"])
    alpha = cfg["perf.alpha"] if cfg["perf.alpha"] >= 0 else p.alpha
    beta = cfg["perf.beta"] if cfg["perf.beta"] >= 0 else p.beta
    return dataclasses.replace(p, params=params, alpha=alpha, beta=beta)


def _r_squared(x, y) -> tuple[float, float, float]:
    x, y = np.asarray(x, float), np.asarray(y, float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return float(slope), float(intercept), 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0


# -- loop bottleneck -------------------------------------------------------------------

def measure_loop_split(R_list=(1, 2, 4), per_replica_batch: int = 8, n_batches: int = 3,
                       gan_cfg: GanConfig | None = None, seed: int = 0) -> list[dict]:
    """Measured per-batch prep and step thread-CPU time of both loop variants
    under weak scaling (global batch = per-replica batch x R)."""
    gan_cfg = gan_cfg or GanConfig()
    rows = []
    for R in R_list:
        bs = per_replica_batch * R
        events = synth_dataset(bs * n_batches, gan_cfg.grid_shape, seed=seed)
        for variant in ("builtin", "custom"):
            cfg = TrainConfig(batches_per_epoch=n_batches, global_batch_size=bs, seed=seed, loop_variant=variant)
            ds = ShowerDataset(events, bs, shuffle_buffer=1, seed=seed)
            models = replicate(GanModels.create(gan_cfg, seed), R)
            with ReplicaGroup(R) as group:
                rep = train_epoch(variant, group, ds.epoch(0), models, gan_cfg, cfg)
            tot = rep.totals()
            step = tot["t_prep_s"] + tot["t_disc_real_s"] + tot["t_disc_fake_s"] + tot["t_gen_s"]
            rows.append({"variant": variant, "R": R, "t_prep_s": tot["t_prep_s"] / n_batches,
                         "t_step_s": step / n_batches, "prep_share": tot["t_prep_s"] / step})
    return rows


def loop_bottleneck(run: RunContext) -> dict:
    cfg = run.cfg
    p = _overrides(cfg, gpu_preset())
    Rs = cfg["sweep.replicas"] or list(range(1, 9))
    b = (cfg["sweep.batch_sizes"] or [p.per_replica_batch])[0]
    rows = []
    for variant in ("builtin", "custom"):
        for R in Rs:
            bd = step_time(variant, ClusterTopology.for_replicas(R, 8, p.alpha, p.beta), p.device, b * R, p.params)
            rows.append([variant, R, bd.prep_s, bd.compute_s, bd.allreduce_s, bd.idle_s, bd.total,
                         bd.prep_s / bd.total])
    run.write_csv("loop_bottleneck_model.csv",
                  ["variant", "R", "prep_s", "compute_s", "allreduce_s", "idle_s", "step_s", "prep_share"], rows)
    if cfg["measure"]:
        m = measure_loop_split(seed=cfg.seed)
        run.write_csv("loop_bottleneck_measured.csv", ["variant", "R", "t_prep_s", "t_step_s", "prep_share"],
                      [[r["variant"], r["R"], r["t_prep_s"], r["t_step_s"], r["prep_share"]] for r in m])

    data = run.read_csv("loop_bottleneck_model.csv")
    R_b = _col(data, "R", {"variant": "builtin"})
    prep_b = _col(data, "prep_s", {"variant": "builtin"})
    prep_c = _col(data, "prep_s", {"variant": "custom"})
    run.plot("loop_bottleneck_prep.svg",
             [Series("builtin", R_b, prep_b), Series("custom", _col(data, "R", {"variant": "custom"}), prep_c)],
             PlotStyle("Generator-input prep time per batch", "replicas (GPUs)", "prep time per batch (s)"))
    slope, _, r2 = _r_squared(R_b, prep_b)
    claims = {"builtin_prep_slope_s": slope, "builtin_prep_r2": r2,
              "custom_prep_spread": max(prep_c) / min(prep_c) - 1.0 if min(prep_c) > 0 else 0.0}
    if cfg["measure"]:
        meas = run.read_csv("loop_bottleneck_measured.csv")
        shares = _col(meas, "prep_share", {"variant": "builtin"})
        claims["measured_builtin_prep_share"] = shares
        claims["measured_builtin_share_increasing"] = all(a < b for a, b in zip(shares, shares[1:]))
    return claims


# -- TPU scenarios ---------------------------------------------------------------------

CORES = [8, 16, 32, 64, 128]


def tpu_v2_v3(run: RunContext) -> dict:
    p = _overrides(run.cfg, tpu_preset())
    cores = run.cfg["sweep.replicas"] or CORES
    rows = []
    for kind in ("tpu-v2-core", "tpu-v3-core"):
        for c in cores:
            rows.append([kind, c, p.epoch(c, device=DEVICES[kind])])
    run.write_csv("tpu_v2_v3.csv", ["device", "cores", "epoch_s"], rows)
    data = run.read_csv("tpu_v2_v3.csv")
    v2 = _col(data, "epoch_s", {"device": "tpu-v2-core"})
    v3 = _col(data, "epoch_s", {"device": "tpu-v3-core"})
    run.plot("tpu_v2_v3.svg", [Series("v2", cores, v2), Series("v3", cores, v3)],
             PlotStyle("Epoch time, TPU v2 vs v3 (128 per core)", "cores", "epoch time (s)"))
    return {"v2_v3_ratio_8_cores": v2[0] / v3[0], "v2_v3_ratios": [a / b for a, b in zip(v2, v3)]}


def tpu_batch_quantization(run: RunContext) -> dict:
    p = _overrides(run.cfg, tpu_preset())
    sizes = run.cfg["sweep.batch_sizes"] or [32, 64, 96, 128, 192, 256]
    rows = []
    for b in sizes:
        bd = p.step(8, per_replica_batch=b)
        rows.append([b, bd.compute_s, bd.total, p.epoch(8, per_replica_batch=b)])
    run.write_csv("tpu_batch_quantization.csv", ["per_core_batch", "compute_s", "step_s", "epoch_s"], rows)
    data = run.read_csv("tpu_batch_quantization.csv")
    by = {r["per_core_batch"]: r for r in data}
    run.plot("tpu_batch_quantization.svg",
             [Series("step time", _col(data, "per_core_batch"), _col(data, "step_s"))],
             PlotStyle("Step time vs per-core batch, 8-core TPU v3", "per-core batch size", "step time (s)"))
    claims = {}
    if 64 in by and 128 in by:
        claims["compute_64_over_128"] = by[64]["compute_s"] / by[128]["compute_s"]
    if 256 in by and 128 in by:
        claims["compute_256_over_128"] = by[256]["compute_s"] / by[128]["compute_s"]
        claims["step_256_over_128"] = by[256]["step_s"] / by[128]["step_s"]
    return claims


def tpu_weak_scaling(run: RunContext) -> dict:
    p = _overrides(run.cfg, tpu_preset())
    cores = run.cfg["sweep.replicas"] or CORES
    e0 = p.epoch(cores[0])
    rows = [[c, p.epoch(c), e0 * cores[0] / c, e0 / p.epoch(c), c / cores[0]] for c in cores]
    run.write_csv("tpu_weak_scaling.csv", ["cores", "epoch_s", "linear_epoch_s", "speedup", "ideal_speedup"], rows)
    data = run.read_csv("tpu_weak_scaling.csv")
    run.plot("tpu_weak_scaling.svg",
             [Series("measured model", _col(data, "cores"), _col(data, "speedup")),
              Series("linear", _col(data, "cores"), _col(data, "ideal_speedup"))],
             PlotStyle("Weak scaling on TPU v3 (128 per core)", "cores", "speedup vs 8 cores"))
    dev = [abs(r["epoch_s"] / r["linear_epoch_s"] - 1.0) for r in data]
    return {"epoch_s_at_max_cores": data[-1]["epoch_s"], "max_deviation_from_linear": max(dev)}


# -- GPU scenarios ---------------------------------------------------------------------

def gpu_batch_sweep(run: RunContext) -> dict:
    cfg = run.cfg
    p = _overrides(cfg, gpu_preset())
    topo = ClusterTopology(cfg["topology.nodes"], cfg["topology.gpus_per_node"], cfg["topology.workers"],
                           cfg["topology.gpus_per_worker"], p.alpha, p.beta)
    sizes = cfg["sweep.batch_sizes"] or [16, 32, 48, 64, 80, 96]
    rows = []
    for b in sizes:
        bd = step_time(p.variant, topo, p.device, b * topo.R, p.params)
        steps = p.dataset_size // (b * topo.R)
        rows.append([b, topo.R, steps, bd.total, steps * bd.total])
    run.write_csv("gpu_batch_sweep.csv", ["per_gpu_batch", "gpus", "steps", "step_s", "epoch_s"], rows)
    data = run.read_csv("gpu_batch_sweep.csv")
    run.plot("gpu_batch_sweep.svg", [Series("epoch time", _col(data, "per_gpu_batch"), _col(data, "epoch_s"))],
             PlotStyle(f"Epoch time vs batch size, {topo.R} GPUs", "per-GPU batch size", "epoch time (s)"))
    by = {r["per_gpu_batch"]: r["epoch_s"] for r in data}
    claims = {}
    if 16 in by and 32 in by:
        claims["gain_16_to_32"] = 1.0 - by[32] / by[16]
    if 64 in by and 80 in by:
        claims["gain_64_to_80"] = 1.0 - by[80] / by[64]
    return claims


FIXED_LAYOUTS = [(4, 8, 32, 1), (4, 8, 16, 2), (4, 8, 8, 4), (4, 8, 4, 8)]
MATCHED_LAYOUTS = [(32, 1, 32, 1), (16, 2, 16, 2), (8, 4, 8, 4), (4, 8, 4, 8)]


def worker_layout(run: RunContext) -> dict:
    cfg = run.cfg
    p = _overrides(cfg, gpu_preset())
    n = cfg["perf.n_batches"]
    rows, series = [], {}
    for group, layouts in (("fixed-hardware", FIXED_LAYOUTS), ("matched", MATCHED_LAYOUTS)):
        for nodes, gpn, workers, gpw in layouts:
            topo = ClusterTopology(nodes, gpn, workers, gpw, p.alpha, p.beta)
            bs = p.per_replica_batch * topo.R
            t = simulate_batches(p.variant, topo, p.device, bs, p.params, n, seed=cfg.seed)
            steps = p.dataset_size // bs
            # timing averages exclude the warmup batch
            rows.append([group, nodes, gpn, workers, gpw, steps * float(np.mean(t[1:])), float(np.mean(t[1:])),
                         float(np.std(t[1:]))])
            if group == "fixed-hardware" and workers in (32, 4):
                series[f"{workers}x{gpw}"] = t[1:]
    run.write_csv("worker_layout.csv", ["layout", "nodes", "gpus_per_node", "workers", "gpus_per_worker",
                                        "epoch_s", "batch_mean_s", "batch_std_s"], rows)
    run.write_csv("worker_layout_batches.csv", ["batch", "t_32x1_s", "t_4x8_s"],
                  [[i + 1, a, b] for i, (a, b) in enumerate(zip(series["32x1"], series["4x8"]))])
    data = run.read_csv("worker_layout.csv")
    bt = run.read_csv("worker_layout_batches.csv")
    run.plot("worker_layout_batches.svg",
             [Series("32 workers x 1 GPU", _col(bt, "batch"), _col(bt, "t_32x1_s")),
              Series("4 workers x 8 GPUs", _col(bt, "batch"), _col(bt, "t_4x8_s"))],
             PlotStyle("Batch time, 4 nodes x 8 GPUs", "batch", "batch time (s)"))
    std = {(r["layout"], r["workers"]): r["batch_std_s"] for r in data}
    return {"layouts": len(data), "std_32_workers_s": std[("fixed-hardware", 32)],
            "std_4_workers_s": std[("fixed-hardware", 4)]}


def gpu_scaling_cost(run: RunContext) -> dict:
    cfg = run.cfg
    p = _overrides(cfg, gpu_preset())
    prices_path = cfg.path("prices")
    prices = PriceTable.load(prices_path) if prices_path else ratio_faithful_prices()
    Rs = cfg["sweep.replicas"] or [2, 4, 8, 16, 32, 64, 128]
    curve = p.curve(Rs)
    rows = []
    for pt in curve:
        res = pt.epoch_s / 3600 * pt.R * (1 + prices.vm_overhead)
        rows.append([pt.R, pt.epoch_s, pt.speedup, res * prices.rate("gpu-v100", "reserved"),
                     res * prices.rate("gpu-v100", "preemptible")])
    run.write_csv("gpu_scaling_cost.csv", ["gpus", "epoch_s", "speedup", "cost_reserved", "cost_preemptible"], rows)
    ranked = rank_options(reference_options(), cfg["cost.objective"], prices,
                          cfg["cost.deadline_s"] or None)
    run.write_csv("cost_ranking.csv", ["rank", "option", "device", "devices", "mode", "epoch_s", "cost_per_epoch"],
                  [[i + 1, r.name, r.device_kind, r.devices, r.mode, r.epoch_time_s, r.cost_per_epoch]
                   for i, r in enumerate(ranked)])
    data = run.read_csv("gpu_scaling_cost.csv")
    rank = run.read_csv("cost_ranking.csv")
    gpus = _col(data, "gpus")
    run.plot("gpu_scaling_speedup.svg",
             [Series("model", gpus, _col(data, "speedup")), Series("linear", gpus, [g / gpus[0] for g in gpus])],
             PlotStyle("Epoch-time speedup vs GPU count", "GPUs", f"speedup vs {gpus[0]} GPUs"))
    run.plot("gpu_scaling_cost.svg",
             [Series("reserved", gpus, _col(data, "cost_reserved")),
              Series("preemptible", gpus, _col(data, "cost_preemptible"))],
             PlotStyle("Cost per epoch (illustrative rates)", "GPUs", "cost per epoch (currency)"))
    cost = {r["option"]: r["cost_per_epoch"] for r in rank}
    res = _col(data, "cost_reserved")
    by = {r["gpus"]: r for r in data}
    claims = {
        "speedup_max": data[-1]["speedup"],
        "cost_variation": max(res) / min(res) - 1.0,
        "preemptible_ratio": data[0]["cost_reserved"] / data[0]["cost_preemptible"],
        "first_ranked": rank[0]["option"],
    }
    if 64 in by:
        claims["speedup_64"] = by[64]["speedup"]
    if "gpu-8-preemptible" in cost and "tpu-v3-8-preemptible" in cost:
        claims["tpu_margin"] = cost["gpu-8-preemptible"] / cost["tpu-v3-8-preemptible"]
    return claims


def azure_scaling(run: RunContext) -> dict:
    p = _overrides(run.cfg, dataclasses.replace(gpu_preset(), devices_per_node=4, per_replica_batch=64))
    nodes = run.cfg["sweep.replicas"] or [1, 2, 4, 8, 16]
    Rs = [4 * n for n in nodes]
    curve = p.curve(Rs)
    run.write_csv("azure_scaling.csv", ["nodes", "gpus", "epoch_s", "speedup", "efficiency"],
                  [[n, pt.R, pt.epoch_s, pt.speedup, pt.speedup / (pt.R / Rs[0])] for n, pt in zip(nodes, curve)])
    data = run.read_csv("azure_scaling.csv")
    run.plot("azure_scaling.svg",
             [Series("model", _col(data, "gpus"), _col(data, "epoch_s"))],
             PlotStyle("Epoch time, 4-GPU nodes, 64 per GPU", "GPUs", "epoch time (s)"))
    return {"efficiency_at_max": data[-1]["efficiency"], "speedup_at_max": data[-1]["speedup"]}


# -- data pipeline ---------------------------------------------------------------------

def prefetch_sweep(run: RunContext) -> dict:
    """Pipeline model: per-batch read cost (file vs memory cache) against a
    fixed consumer step; prefetching overlaps the two."""
    cfg = run.cfg
    n_batches = max(1, cfg["data.n_events"] // cfg["train.batch_size"])
    read_file_s, read_cache_s, step_s = 0.012, 0.002, 0.010
    depths = cfg["sweep.batch_sizes"] or [1, 2, 4, 8]
    rows = []
    for cache, read_s in (("file", read_file_s), ("cache", read_cache_s)):
        rows.append([cache, 0, n_batches * (read_s + step_s)])
        for d in depths:
            rows.append([cache, d, read_s + n_batches * max(read_s, step_s) + (step_s if read_s > step_s else 0.0)])
    run.write_csv("prefetch_model.csv", ["source", "prefetch_depth", "epoch_s"], rows)
    if cfg["measure"]:
        run.write_csv("prefetch_measured.csv", ["source", "prefetch_depth", "epoch_s"],
                      measure_prefetch(cfg, n_batches, depths, step_s))
    data = run.read_csv("prefetch_model.csv")
    run.plot("prefetch_model.svg",
             [Series(src, _col(data, "prefetch_depth", {"source": src}), _col(data, "epoch_s", {"source": src}))
              for src in ("file", "cache")],
             PlotStyle("Input pipeline: cache and prefetch", "prefetch depth (0 = off)", "epoch time (s)"))
    base = _col(data, "epoch_s", {"source": "file", "prefetch_depth": 0})[0]
    best = min(_col(data, "epoch_s"))
    return {"best_speedup_over_serial_file": base / best}


def measure_prefetch(cfg: ExperimentConfig, n_batches: int, depths, step_s: float) -> list:
    events = synth_dataset(n_batches * cfg["train.batch_size"], tuple(cfg["gan.grid"]), seed=cfg.seed)
    rows = []
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "events.shwr"
        write_records(events, path)
        for cache in ("file", "cache"):
            for d in [0] + list(depths):
                ds = ShowerDataset(path, cfg["train.batch_size"], seed=cfg.seed, prefetch_depth=d,
                                   cache=cache == "cache")
                t0 = time.perf_counter()
                for _ in ds.epoch(0):
                    time.sleep(step_s)
                rows.append([cache, d, time.perf_counter() - t0])
    return rows


# -- desk-scale training -----------------------------------------------------------------

def validation_metrics(models: GanModels, gan_cfg: GanConfig, val_grids, val_labels, gen_input,
                       sampling_fraction: float, ref_profile) -> dict:
    fake = generate_batch_stats(models.gen, gen_input) / gan_cfg.energy_scale
    ecal = compute_ecal(fake)
    ep_est = ecal / sampling_fraction
    gen = aux_regression_error(val_labels.ep, ep_est, val_labels.theta, centroid_theta(fake),
                               val_labels.ecal, ecal)
    out = DiscOutputs.from_raw(evaluate(models.disc, val_grids * gan_cfg.energy_scale, "eval").output)
    disc = aux_regression_error(val_labels.ep, out.ep_hat * gan_cfg.max_energy, val_labels.theta, out.theta_hat,
                                val_labels.ecal, val_labels.ecal)
    return {
        "gen_ep_mae": gen.ep_mae, "gen_ecal_mape": gen.ecal_mape, "gen_theta_mae": gen.theta_mae,
        "disc_ep_mae": disc.ep_mae, "disc_theta_mae": disc.theta_mae,
        "core_dev_longitudinal": profile_deviation(energy_profile(fake, "longitudinal-z"), ref_profile, "core-bins"),
        "fake": fake,
    }


def train_smoke(run: RunContext) -> dict:
    cfg = run.cfg
    gan_cfg, tcfg = cfg.gan(), cfg.train()
    params = ShowerParams(noise_level=cfg["data.noise_level"], ep_range=tuple(cfg["data.ep_range"]),
                          theta_range=tuple(cfg["data.theta_range"]))
    events = synth_dataset(cfg["data.n_events"], gan_cfg.grid_shape, seed=cfg.seed, params=params)
    val = synth_dataset(cfg["data.n_validation"], gan_cfg.grid_shape, seed=cfg.seed + 1_000_003, params=params)
    val_grids, val_labels = events_to_arrays(val)
    z = stream(cfg.seed, "eval_noise").uniform(-1.0, 1.0, (len(val), gan_cfg.latent_dim))
    gen_input = make_generator_input(z, val_labels.ep / gan_cfg.max_energy, val_labels.theta)
    ref_long = energy_profile(val_grids, "longitudinal-z")
    ds = ShowerDataset(events, tcfg.global_batch_size, cfg["data.shuffle_buffer"], cfg.seed,
                       cfg["data.prefetch_depth"])
    R = cfg["train.replicas"]
    models = replicate(GanModels.create(gan_cfg, cfg.seed), R)
    metric_rows, batch_csv = [], []
    with ReplicaGroup(R) as group:
        for e in range(tcfg.n_epochs):
            rep = train_epoch(tcfg.loop_variant, group, ds.epoch(e), models, gan_cfg, tcfg, epoch=e)
            m = validation_metrics(models[0], gan_cfg, val_grids, val_labels, gen_input,
                                   params.sampling_fraction, ref_long)
            losses = rep.mean_losses()
            metric_rows.append([e + 1] + [m[k] for k in METRIC_COLUMNS] + [losses[k] for k in LOSS_SUMMARY])
            batch_csv.append(rep.to_csv(timings=cfg["measure"]))
            fake = m["fake"]
    run.write_csv("train_metrics.csv", ["epoch", *METRIC_COLUMNS, *LOSS_SUMMARY], metric_rows)
    lines = [batch_csv[0].splitlines()[0]] + [ln for text in batch_csv for ln in text.splitlines()[1:]]
    path = run.out_dir / "train_batches.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    run.files.append(path)
    for axis, log in (("longitudinal-z", False), ("transverse-x", False), ("transverse-x", True)):
        mc, gen = energy_profile(val_grids, axis), energy_profile(fake, axis)
        name = f"profile_{axis}{'_log' if log else ''}"
        run.write_csv(f"{name}.csv", ["slice_index", "mc_energy", "gan_energy"],
                      [[i, a, b] for i, (a, b) in enumerate(zip(mc.energy, gen.energy))])
        prof = run.read_csv(f"{name}.csv")
        idx = _col(prof, "slice_index")
        run.plot(f"{name}.svg", [Series("surrogate MC", idx, _col(prof, "mc_energy")),
                                 Series("GAN", idx, _col(prof, "gan_energy"))],
                 PlotStyle(f"Energy response, {axis}", "slice index", "summed energy (GeV)", log_y=log))
    data = run.read_csv("train_metrics.csv")
    first, last = data[0], data[-1]
    finite = all(np.isfinite(r[k]) for r in data for k in LOSS_SUMMARY)
    return {
        "epochs": len(data), "losses_finite": bool(finite),
        "ep_mae_first": first["gen_ep_mae"], "ep_mae_last": last["gen_ep_mae"],
        "ecal_mape_first": first["gen_ecal_mape"], "ecal_mape_last": last["gen_ecal_mape"],
        "ep_mae_improvement": 1.0 - last["gen_ep_mae"] / first["gen_ep_mae"],
        "ecal_mape_improvement": 1.0 - last["gen_ecal_mape"] / first["gen_ecal_mape"],
        "core_dev_first": first["core_dev_longitudinal"], "core_dev_last": last["core_dev_longitudinal"],
    }


METRIC_COLUMNS = ("gen_ep_mae", "gen_ecal_mape", "gen_theta_mae", "disc_ep_mae", "disc_theta_mae",
                  "core_dev_longitudinal")
LOSS_SUMMARY = ("d_real_total", "d_fake_total", "g_total", "g_ecal")


# -- catalog and runner -------------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    anchor: str
    run: object


CATALOG = {s.name: s for s in [
    Scenario("loop-bottleneck", "builtin vs custom loop: prep time vs replica count (model, optional measured)",
             "loop refactor: serial generator-input prep grows linearly with GPU count", loop_bottleneck),
    Scenario("tpu-v2-v3", "epoch time on TPU v2 vs v3 cores, 128 per core",
             "TPU generations: v3 halves epoch time", tpu_v2_v3),
    Scenario("tpu-batch-quantization", "step time vs per-core batch on an 8-core TPU v3",
             "TPU batch size: 64 costs as much as 128, 256 twice as much", tpu_batch_quantization),
    Scenario("tpu-weak-scaling", "epoch time and speedup for 8-128 TPU v3 cores",
             "TPU weak scaling: linear, about 30 s per epoch at 128 cores", tpu_weak_scaling),
    Scenario("gpu-batch-sweep", "epoch time vs per-GPU batch 16-96 on 4 nodes x 8 GPUs",
             "GPU batch-size sweep with diminishing returns above 64", gpu_batch_sweep),
    Scenario("worker-layout", "8 node/worker layouts with per-batch jitter",
             "GPU worker layouts: fixed 4x8 hardware vs matched worker grids", worker_layout),
    Scenario("gpu-scaling-cost", "2-128 GPU speedup and cost per epoch, TPU comparison and ranking",
             "GPU scaling and cloud cost: near-linear speedup, flat cost per epoch", gpu_scaling_cost),
    Scenario("azure-scaling", "4-GPU nodes from 1 to 16 nodes, 64 per GPU",
             "second cloud: linear scaling up to 64 GPUs", azure_scaling),
    Scenario("prefetch-sweep", "input pipeline with and without cache and prefetch",
             "second cloud: manual cache and prefetch vs automatic pipeline", prefetch_sweep),
    Scenario("train-smoke", "desk-scale GAN training with validation profiles",
             "energy-response validation against the Monte Carlo reference", train_smoke),
]}


def list_scenarios() -> list[tuple[str, str, str]]:
    return [(s.name, s.description, s.anchor) for s in CATALOG.values()]


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def run_scenario(cfg: ExperimentConfig, out_dir=None) -> dict:
    if cfg.scenario not in CATALOG:
        raise UnknownScenarioError(
            f"unknown scenario {cfg.scenario!r}; valid names: {', '.join(sorted(CATALOG))}")
    scenario = CATALOG[cfg.scenario]
    out = Path(out_dir) if out_dir is not None else cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    run = RunContext(cfg, out)
    claims = scenario.run(run)
    summary = {
        "scenario": scenario.name,
        "anchor": scenario.anchor,
        "seed": cfg.seed,
        "files": [{"name": p.name, "sha256": sha256_file(p)} for p in run.files],
        "claims": claims,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True, default=_json_default) + "\n",
                                      encoding="utf-8", newline="\n")
    return summary


def _json_default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(type(o).__name__)

