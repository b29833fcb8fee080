"""Parametrised electromagnetic-shower surrogate on a voxel grid.

Axis convention: grid is ``[1, Nx, Ny, Nz]`` with z the longitudinal
direction. The shower axis is tilted by ``theta`` in the x-z plane and
passes through the grid centre at mid-depth; ``theta = pi/2`` is
perpendicular incidence (no drift in x).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..gan import LabelBatch
from ..rng import stream


@dataclass
class ShowerParams:
    a: float = 2.0                  # longitudinal shape exponent
    b: float = 1.2                  # longitudinal decay per cell of depth
    sigma: float = 1.0              # transverse Gaussian width, cells
    sampling_fraction: float = 0.025
    noise_level: float = 0.05       # total-energy fluctuation, +- fraction
    ep_range: tuple = (10.0, 100.0)
    theta_range: tuple = (math.pi / 3, 2 * math.pi / 3)


@dataclass
class ShowerEvent:
    grid: np.ndarray
    ep: float
    theta: float

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.float64)
        if self.grid.ndim != 4 or self.grid.shape[0] != 1:
            raise ValueError(f"grid must be [1, Nx, Ny, Nz], got {self.grid.shape}")
        if np.any(self.grid < 0):
            raise ValueError("energy deposits must be non-negative")

    @property
    def ecal(self) -> float:
        return float(self.grid.sum())


def shower_axis_x(z, theta: float, nx: int, nz: int):
    return (nx - 1) / 2.0 + (np.asarray(z, dtype=np.float64) - (nz - 1) / 2.0) / math.tan(theta)


def synth_shower(ep: float, theta: float, grid_shape=(8, 8, 8), noise_level: float | None = None,
                 seed: int = 0, params: ShowerParams | None = None) -> ShowerEvent:
    params = params or ShowerParams()
    noise = params.noise_level if noise_level is None else noise_level
    lo, hi = params.theta_range
    if not (np.isfinite(ep) and ep > 0):
        raise ValueError(f"Ep must be a positive finite number, got {ep}")
    if not (lo <= theta <= hi):
        raise ValueError(f"theta {theta} outside the configured range [{lo}, {hi}]")
    if noise < 0:
        raise ValueError("noise_level must be >= 0")
    nx, ny, nz = (int(g) for g in grid_shape)

    depth = np.arange(nz) + 0.5
    longitudinal = depth ** params.a * np.exp(-params.b * depth)
    longitudinal /= longitudinal.sum()

    x = np.arange(nx)[:, None, None]
    y = np.arange(ny)[None, :, None]
    xc = shower_axis_x(np.arange(nz), theta, nx, nz)[None, None, :]
    yc = (ny - 1) / 2.0
    transverse = np.exp(-((x - xc) ** 2 + (y - yc) ** 2) / (2.0 * params.sigma ** 2))
    transverse /= transverse.sum(axis=(0, 1), keepdims=True)

    eps = stream(seed, "data", 0).uniform(-noise, noise) if noise > 0 else 0.0
    total = params.sampling_fraction * ep * (1.0 + eps)
    grid = total * transverse * longitudinal[None, None, :]
    # exact normalisation of the summed deposit
    grid *= total / grid.sum()
    return ShowerEvent(grid[None], float(ep), float(theta))


def synth_dataset(n: int, grid_shape=(8, 8, 8), seed: int = 0, params: ShowerParams | None = None,
                  ep_range=None, theta_range=None) -> list[ShowerEvent]:
    """``n`` events with Ep and theta uniform over their ranges."""
    params = params or ShowerParams()
    ep_lo, ep_hi = ep_range or params.ep_range
    th_lo, th_hi = theta_range or params.theta_range
    if theta_range is not None:
        params = ShowerParams(**{**params.__dict__, "theta_range": (th_lo, th_hi)})
    events = []
    for i in range(n):
        rng = stream(seed, "data", 1, i)
        ep = rng.uniform(ep_lo, ep_hi)
        theta = rng.uniform(th_lo, th_hi)
        events.append(synth_shower(ep, theta, grid_shape, seed=int(rng.integers(2**62)), params=params))
    return events


def events_to_arrays(events) -> tuple[np.ndarray, LabelBatch]:
    """Stack events into a ``[B, 1, Nx, Ny, Nz]`` array and their labels."""
    if len(events) == 0:
        raise ValueError("no events")
    shapes = {e.grid.shape for e in events}
    if len(shapes) != 1:
        raise ValueError(f"events have mixed grid shapes {sorted(shapes)}")
    grids = np.stack([e.grid for e in events])
    labels = LabelBatch([e.ep for e in events], [e.theta for e in events], grids.reshape(len(events), -1).sum(1))
    return grids, labels
