"""Energy-response profiles and conditioning-fidelity metrics."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

AXES = {"transverse-x": 0, "transverse-y": 1, "longitudinal-z": 2}
PROFILE_EPS = 1e-7
CORE_MARGIN = 2


@dataclass
class EnergyProfile:
    axis: str
    energy: np.ndarray
    n_events: int
    scale: str = "linear"

    def __len__(self):
        return len(self.energy)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["slice_index", "energy"])
        for i, e in enumerate(self.energy):
            w.writerow([i, repr(float(e))])
        return buf.getvalue()


def _as_grids(events) -> np.ndarray:
    """Events, grids ``[1, Nx, Ny, Nz]`` or a stacked ``[B, 1, Nx, Ny, Nz]`` array."""
    if isinstance(events, np.ndarray):
        g = np.asarray(events, dtype=np.float64)
        if g.ndim == 4:
            g = g[None]
        if g.ndim != 5:
            raise ValueError(f"expected [B, 1, Nx, Ny, Nz] grids, got shape {g.shape}")
        return g
    grids = [np.asarray(getattr(e, "grid", e), dtype=np.float64) for e in events]
    if not grids:
        raise ValueError("energy profile needs at least one event")
    shapes = {g.shape for g in grids}
    if len(shapes) != 1:
        raise ValueError(f"events have mixed grid shapes {sorted(shapes)}")
    return np.stack(grids)


def energy_profile(events, axis: str = "longitudinal-z", scale: str = "linear") -> EnergyProfile:
    if axis not in AXES:
        raise ValueError(f"unknown axis {axis!r}; expected one of {sorted(AXES)}")
    g = _as_grids(events)
    if len(g) == 0:
        raise ValueError("energy profile needs at least one event")
    keep = 2 + AXES[axis]
    other = tuple(i for i in range(g.ndim) if i != keep)
    return EnergyProfile(axis, g.sum(axis=other), len(g), scale)


def profile_deviation(test: EnergyProfile, reference: EnergyProfile, mode: str = "all-bins",
                      margin: int = CORE_MARGIN) -> float:
    """Mean relative absolute deviation over the included bins.

    ``core-bins`` drops ``margin`` slices at each end.
    """
    a, b = np.asarray(test.energy, dtype=np.float64), np.asarray(reference.energy, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"bin-count mismatch: {a.shape} vs {b.shape}")
    if mode == "core-bins":
        if len(a) <= 2 * margin:
            raise ValueError(f"{len(a)} bins leave no core with a margin of {margin}")
        a, b = a[margin:len(a) - margin], b[margin:len(b) - margin]
    elif mode != "all-bins":
        raise ValueError(f"unknown mode {mode!r}")
    return float(np.mean(np.abs(a - b) / np.maximum(b, PROFILE_EPS)))


@dataclass
class AuxErrors:
    ep_mae: float
    theta_mae: float
    ecal_mape: float


def aux_regression_error(ep_true, ep_pred, theta_true, theta_pred, ecal_true, ecal_pred) -> AuxErrors:
    """MAE of Ep and theta, and MAPE (as a fraction) of Ecal."""
    arrays = [np.asarray(v, dtype=np.float64).reshape(-1)
              for v in (ep_true, ep_pred, theta_true, theta_pred, ecal_true, ecal_pred)]
    if len({len(v) for v in arrays}) != 1 or len(arrays[0]) == 0:
        raise ValueError("aux_regression_error needs equal-length, non-empty arrays")
    et, ep, tt, tp, ct, cp = arrays
    return AuxErrors(
        float(np.mean(np.abs(ep - et))),
        float(np.mean(np.abs(tp - tt))),
        float(np.mean(np.abs(cp - ct) / np.maximum(np.abs(ct), PROFILE_EPS))),
    )


def centroid_theta(grids) -> np.ndarray:
    """Incidence angle estimated from the slope of the per-slice x centroid."""
    g = _as_grids(grids)[:, 0]
    nz = g.shape[3]
    xz = g.sum(axis=2)                           # [B, Nx, Nz]
    w = xz.sum(axis=1)                           # [B, Nz]
    x = np.arange(g.shape[1])[None, :, None]
    cx = (xz * x).sum(axis=1) / np.maximum(w, PROFILE_EPS)
    z = np.arange(nz) - (nz - 1) / 2.0
    # energy-weighted least-squares slope dx/dz = cot(theta)
    zw = (w * z).sum(1) / np.maximum(w.sum(1), PROFILE_EPS)
    cw = (w * cx).sum(1) / np.maximum(w.sum(1), PROFILE_EPS)
    num = (w * (z - zw[:, None]) * (cx - cw[:, None])).sum(1)
    den = (w * (z - zw[:, None]) ** 2).sum(1)
    slope = num / np.maximum(den, PROFILE_EPS)
    return np.arctan2(1.0, slope)
