import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cloudgan.data import synth_dataset, synth_shower
from cloudgan.validation import (
    EnergyProfile, aux_regression_error, centroid_theta, energy_profile, profile_deviation,
)

from oracles import ecal_nested


def slice_sums_oracle(grids, axis):
    """Per-slice energy by explicit loops over voxels."""
    n = grids.shape[2 + axis]
    out = [0.0] * n
    for g in grids:
        nx, ny, nz = g.shape[1:]
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    out[(i, j, k)[axis]] += g[0, i, j, k]
    return np.array(out)


def test_profile_examples():
    p = energy_profile(np.ones((1, 1, 2, 2, 2)), "longitudinal-z")
    assert np.array_equal(p.energy, [4.0, 4.0])
    g = np.zeros((1, 1, 3, 3, 3))
    g[0, 0, 1, 2, 0] = 2.5
    p = energy_profile(g, "transverse-y")
    assert np.array_equal(p.energy, [0.0, 0.0, 2.5])


@pytest.mark.parametrize("axis,idx", [("transverse-x", 0), ("transverse-y", 1), ("longitudinal-z", 2)])
def test_profile_oracle_and_conservation(axis, idx):
    events = synth_dataset(6, grid_shape=(3, 4, 5), seed=2)
    grids = np.stack([e.grid for e in events])
    p = energy_profile(events, axis)
    np.testing.assert_allclose(p.energy, slice_sums_oracle(grids, idx), rtol=0, atol=1e-12)
    assert abs(p.energy.sum() - ecal_nested(grids).sum()) <= 1e-9
    assert p.n_events == 6 and (p.energy >= 0).all()


def test_profile_errors():
    with pytest.raises(ValueError):
        energy_profile([synth_shower(10, 1.5, (2, 2, 2)), synth_shower(10, 1.5, (3, 2, 2))])
    with pytest.raises(ValueError):
        energy_profile([], "longitudinal-z")
    with pytest.raises(ValueError):
        energy_profile(np.ones((1, 1, 2, 2, 2)), "radial")


def prof(v):
    return EnergyProfile("longitudinal-z", np.asarray(v, dtype=float), 1)


def test_deviation_examples():
    p = prof([1.0, 2.0, 3.0])
    assert profile_deviation(p, p) == 0.0
    assert profile_deviation(prof([1, 1]), prof([2, 2])) == pytest.approx(0.5, abs=1e-15)
    ref = np.random.default_rng(0).uniform(0.1, 5.0, 8)
    assert profile_deviation(prof(1.1 * ref), prof(ref)) == pytest.approx(0.10, abs=1e-9)
    with pytest.raises(ValueError):
        profile_deviation(prof([1, 2]), prof([1, 2, 3]))


def test_core_bins_skip_edges():
    ref = prof(np.ones(8))
    test = prof([9, 9, 1, 1, 1, 1, 9, 9])
    assert profile_deviation(test, ref, "core-bins") == 0.0
    assert profile_deviation(test, ref, "all-bins") == pytest.approx(4.0)


@settings(max_examples=50)
@given(st.lists(st.floats(0.01, 100), min_size=8, max_size=8), st.lists(st.floats(0.01, 100), min_size=8,
                                                                       max_size=8), st.floats(0.01, 100))
def test_deviation_properties(a, b, c):
    d = profile_deviation(prof(a), prof(b))
    assert d >= 0
    assert profile_deviation(prof(np.multiply(a, c)), prof(np.multiply(b, c))) == pytest.approx(d, rel=1e-9)


def test_aux_errors():
    ep = np.array([10.0, 40.0, 70.0, 90.0])
    th = np.array([1.1, 1.5, 1.8, 2.0])
    ec = 0.025 * ep
    perfect = aux_regression_error(ep, ep, th, th, ec, ec)
    assert (perfect.ep_mae, perfect.theta_mae, perfect.ecal_mape) == (0.0, 0.0, 0.0)
    const = aux_regression_error(ep, np.full(4, ep.mean()), th, th, ec, ec)
    mad = sum(abs(x - sum(ep) / 4) for x in ep) / 4
    assert const.ep_mae == pytest.approx(mad, abs=1e-12)
    one = aux_regression_error([5.0], [7.5], [1.0], [0.5], [2.0], [3.0])
    assert (one.ep_mae, one.theta_mae, one.ecal_mape) == (2.5, 0.5, 0.5)


def test_centroid_theta_recovers_angle():
    for theta in (math.pi / 3, math.pi / 2, 2 * math.pi / 3):
        g = synth_shower(50.0, theta, grid_shape=(16, 16, 16), noise_level=0.0).grid
        assert centroid_theta(g[None])[0] == pytest.approx(theta, abs=0.15)
