"""Cloud cost per epoch and ranking of cluster options.

Price tables are TOML with dotted ``device_kind.billing_mode = rate`` keys
(currency per device-hour; TPU kinds are priced per core) plus an optional
``vm_overhead`` fraction added on top of device cost.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

OBJECTIVES = ("cheapest", "fastest", "cheapest_under_deadline")
DEFAULT_VM_OVERHEAD = 0.05


class PriceError(ValueError):
    pass


@dataclass
class PriceTable:
    rates: dict = field(default_factory=dict)       # {(kind, mode): rate per hour}
    vm_overhead: float = DEFAULT_VM_OVERHEAD

    def __post_init__(self):
        if self.vm_overhead < 0:
            raise PriceError("vm_overhead must be >= 0")
        for (kind, mode), rate in self.rates.items():
            if not rate >= 0:
                raise PriceError(f"rate for {kind}.{mode} must be >= 0, got {rate}")
        for (kind, mode), rate in self.rates.items():
            if mode == "preemptible" and (kind, "reserved") in self.rates and rate > self.rates[(kind, "reserved")]:
                raise PriceError(f"{kind}: preemptible rate {rate} exceeds reserved {self.rates[(kind, 'reserved')]}")

    def rate(self, kind: str, mode: str) -> float:
        try:
            return self.rates[(kind, mode)]
        except KeyError:
            raise PriceError(f"no {mode} rate for device kind {kind!r}") from None

    @classmethod
    def from_dict(cls, doc: dict) -> "PriceTable":
        doc = dict(doc)
        overhead = float(doc.pop("vm_overhead", DEFAULT_VM_OVERHEAD))
        rates = {}
        for kind, modes in doc.items():
            if not isinstance(modes, dict):
                raise PriceError(f"expected '{kind}.<mode> = rate' entries, got {kind} = {modes!r}")
            for mode, rate in modes.items():
                if not isinstance(rate, (int, float)) or isinstance(rate, bool):
                    raise PriceError(f"rate {kind}.{mode} must be a number")
                rates[(kind, mode)] = float(rate)
        return cls(rates, overhead)

    @classmethod
    def load(cls, path) -> "PriceTable":
        with open(Path(path), "rb") as f:
            return cls.from_dict(tomllib.load(f))

    def to_toml(self) -> str:
        lines = [f"vm_overhead = {self.vm_overhead!r}"]
        lines += [f"{kind}.{mode} = {rate!r}" for (kind, mode), rate in sorted(self.rates.items())]
        return "\n".join(lines) + "\n"


def cost_per_epoch(epoch_time_s: float, devices: int, device_kind: str, prices: PriceTable, mode: str) -> float:
    if epoch_time_s < 0 or devices < 0:
        raise ValueError("epoch time and device count must be >= 0")
    return epoch_time_s / 3600.0 * devices * prices.rate(device_kind, mode) * (1.0 + prices.vm_overhead)


@dataclass(frozen=True)
class CostOption:
    name: str
    device_kind: str
    devices: int
    mode: str
    epoch_time_s: float
    n_epochs: int = 1


@dataclass(frozen=True)
class CostReport:
    name: str
    device_kind: str
    devices: int
    mode: str
    epoch_time_s: float
    cost_per_epoch: float
    cost_to_converge: float
    time_to_converge_s: float


def evaluate(option: CostOption, prices: PriceTable) -> CostReport:
    c = cost_per_epoch(option.epoch_time_s, option.devices, option.device_kind, prices, option.mode)
    return CostReport(option.name, option.device_kind, option.devices, option.mode, option.epoch_time_s,
                      c, c * option.n_epochs, option.epoch_time_s * option.n_epochs)


def rank_options(options, objective: str, prices: PriceTable | None = None,
                 deadline_s: float | None = None) -> list[CostReport]:
    """Order options by objective; ties fall back to the other axis, then the name."""
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}; expected one of {OBJECTIVES}")
    options = list(options)
    if not options:
        raise ValueError("no options to rank")
    reports = [o if isinstance(o, CostReport) else evaluate(o, prices) for o in options]
    if objective == "fastest":
        return sorted(reports, key=lambda r: (r.time_to_converge_s, r.cost_to_converge, r.name))
    if objective == "cheapest_under_deadline":
        if deadline_s is None:
            raise ValueError("cheapest_under_deadline needs a deadline")
        reports = [r for r in reports if r.time_to_converge_s <= deadline_s]
        if not reports:
            raise ValueError(f"no option finishes within {deadline_s} s")
    return sorted(reports, key=lambda r: (r.cost_to_converge, r.time_to_converge_s, r.name))


def savings_ratio(option: CostOption, mode_a: str, mode_b: str, prices: PriceTable) -> float:
    """Cost under ``mode_a`` divided by cost under ``mode_b``."""
    a = cost_per_epoch(option.epoch_time_s, option.devices, option.device_kind, prices, mode_a)
    b = cost_per_epoch(option.epoch_time_s, option.devices, option.device_kind, prices, mode_b)
    if b == 0:
        raise ZeroDivisionError(f"{mode_b} cost is zero")
    return a / b


# -- illustrative, ratio-faithful table ---------------------------------------------

PREEMPTIBLE_RATIO = 3.2         # reserved / preemptible for GPUs
TPU_MARGIN = 2.4                # GPU-equivalent / preemptible TPU v3-8, per epoch
GPU_EQUIVALENT = 8              # GPUs compared against the 8-core TPU
COMMITTED_DISCOUNT = 0.3        # illustrative sustained-use discount


def ratio_faithful_prices(gpu_reserved: float = 2.48, vm_overhead: float = DEFAULT_VM_OVERHEAD) -> PriceTable:
    """Illustrative rates chosen so that the calibrated models reproduce the
    published price relations: GPU preemptible = reserved / 3.2; 128 GPUs
    and a 32-core TPU v3 cost the same per epoch (reserved); a preemptible
    8-core TPU v3 is 2.4x cheaper per epoch than 8 preemptible GPUs.
    """
    from .perf import gpu_preset, tpu_preset

    gpu, tpu = gpu_preset(), tpu_preset()
    gpu_pre = gpu_reserved / PREEMPTIBLE_RATIO
    tpu_res = gpu.epoch(128) * 128 * gpu_reserved / (tpu.epoch(32) * 32)
    tpu_pre = gpu.epoch(GPU_EQUIVALENT) * GPU_EQUIVALENT * gpu_pre / (TPU_MARGIN * tpu.epoch(8) * 8)
    rates = {
        ("gpu-v100", "reserved"): gpu_reserved,
        ("gpu-v100", "preemptible"): gpu_pre,
        ("gpu-v100", "committed"): gpu_reserved * (1 - COMMITTED_DISCOUNT),
        ("tpu-v3-core", "reserved"): tpu_res,
        ("tpu-v3-core", "preemptible"): tpu_pre,
        ("tpu-v2-core", "reserved"): 0.5 * tpu_res,
        ("tpu-v2-core", "preemptible"): 0.5 * tpu_pre,
    }
    return PriceTable({k: round(v, 6) for k, v in rates.items()}, vm_overhead)


def reference_options(n_epochs: int = 1) -> list[CostOption]:
    """GPU counts 2-128 in both billing modes plus 8- and 32-core TPU v3."""
    from .perf import gpu_preset, tpu_preset

    gpu, tpu = gpu_preset(), tpu_preset()
    out = []
    for n in (2, 4, 8, 16, 32, 64, 128):
        for mode in ("reserved", "preemptible"):
            out.append(CostOption(f"gpu-{n}-{mode}", "gpu-v100", n, mode, gpu.epoch(n), n_epochs))
    out.append(CostOption("tpu-v3-8-reserved", "tpu-v3-core", 8, "reserved", tpu.epoch(8), n_epochs))
    out.append(CostOption("tpu-v3-8-preemptible", "tpu-v3-core", 8, "preemptible", tpu.epoch(8), n_epochs))
    out.append(CostOption("tpu-v3-32-reserved", "tpu-v3-core", 32, "reserved", tpu.epoch(32), n_epochs))
    return out
