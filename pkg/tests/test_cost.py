import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cloudgan.cost import (
    CostOption, PriceError, PriceTable, cost_per_epoch, evaluate, reference_options, rank_options, ratio_faithful_prices,
    savings_ratio,
)

TABLE = PriceTable({("gpu-v100", "reserved"): 2.0, ("gpu-v100", "preemptible"): 0.625,
                    ("gpu-v100", "committed"): 1.4, ("tpu-v3-core", "reserved"): 1.0}, 0.05)


def test_cost_arithmetic():
    assert cost_per_epoch(3600.0, 8, "gpu-v100", TABLE, "reserved") == pytest.approx(16.8, abs=1e-12)
    zero = PriceTable({("gpu-v100", "reserved"): 0.0})
    assert cost_per_epoch(3600.0, 8, "gpu-v100", zero, "reserved") == 0.0


def test_linear_scaling_keeps_cost_constant():
    costs = [cost_per_epoch(1000.0 / R, R, "gpu-v100", TABLE, "reserved") for R in (1, 2, 4, 8, 16, 128)]
    assert max(costs) - min(costs) <= 1e-12


@given(st.floats(0, 1e5), st.floats(0.01, 100), st.integers(1, 256))
def test_cost_is_linear(t, k, n):
    c = cost_per_epoch(t, n, "gpu-v100", TABLE, "reserved")
    assert cost_per_epoch(k * t, n, "gpu-v100", TABLE, "reserved") == pytest.approx(k * c, rel=1e-12, abs=1e-300)
    scaled = PriceTable({key: k * v for key, v in TABLE.rates.items()}, TABLE.vm_overhead)
    assert cost_per_epoch(t, n, "gpu-v100", scaled, "reserved") == pytest.approx(k * c, rel=1e-12, abs=1e-300)


def test_rank_single_and_permutation():
    only = CostOption("a", "gpu-v100", 2, "reserved", 100.0)
    assert [r.name for r in rank_options([only], "cheapest", TABLE)] == ["a"]
    opts = [CostOption(f"o{i}", "gpu-v100", n, m, t) for i, (n, m, t) in
            enumerate(itertools.product((1, 4), ("reserved", "preemptible"), (50.0, 200.0)))]
    for objective in ("cheapest", "fastest"):
        ranked = rank_options(opts, objective, TABLE)
        assert sorted(r.name for r in ranked) == sorted(o.name for o in opts)
        assert ranked == rank_options(list(reversed(opts)), objective, TABLE)


def test_deadline_filter():
    opts = [CostOption("slow", "gpu-v100", 1, "reserved", 500.0), CostOption("fast", "gpu-v100", 8, "reserved", 50.0)]
    ranked = rank_options(opts, "cheapest_under_deadline", TABLE, deadline_s=100.0)
    assert [r.name for r in ranked] == ["fast"]
    with pytest.raises(ValueError):
        rank_options(opts, "cheapest_under_deadline", TABLE, deadline_s=10.0)
    with pytest.raises(ValueError):
        rank_options(opts, "nope", TABLE)


def test_savings_ratio():
    o = CostOption("x", "gpu-v100", 8, "reserved", 100.0)
    assert savings_ratio(o, "reserved", "reserved", TABLE) == 1.0
    assert savings_ratio(o, "reserved", "preemptible", TABLE) == pytest.approx(3.2, rel=1e-12)
    assert evaluate(CostOption("x", "gpu-v100", 8, "committed", 100.0), TABLE).cost_per_epoch < evaluate(o, TABLE).cost_per_epoch


def test_price_table_validation_and_toml(tmp_path):
    with pytest.raises(PriceError):
        PriceTable({("gpu-v100", "reserved"): -1.0})
    with pytest.raises(PriceError):
        PriceTable({("gpu-v100", "reserved"): 1.0, ("gpu-v100", "preemptible"): 2.0})
    with pytest.raises(PriceError):
        TABLE.rate("tpu-v2-core", "reserved")
    path = tmp_path / "p.toml"
    path.write_text(TABLE.to_toml())
    assert PriceTable.load(path) == TABLE


def test_ratio_faithful_relations():
    prices = ratio_faithful_prices()
    opts = {o.name: evaluate(o, prices) for o in reference_options()}
    assert savings_ratio(CostOption("g", "gpu-v100", 8, "reserved", 1.0), "reserved", "preemptible", prices) == \
        pytest.approx(3.2, rel=1e-6)
    assert opts["gpu-128-reserved"].cost_per_epoch == pytest.approx(opts["tpu-v3-32-reserved"].cost_per_epoch, rel=1e-5)
    margin = opts["gpu-8-preemptible"].cost_per_epoch / opts["tpu-v3-8-preemptible"].cost_per_epoch
    assert margin == pytest.approx(2.4, rel=1e-5)
    assert rank_options(opts.values(), "cheapest")[0].name == "tpu-v3-8-preemptible"
    pair = [opts["gpu-128-reserved"], opts["tpu-v3-32-reserved"]]
    assert rank_options(pair, "fastest")[0].name == "gpu-128-reserved"
    assert opts["gpu-128-reserved"].epoch_time_s == pytest.approx(opts["tpu-v3-32-reserved"].epoch_time_s / 2, rel=0.01)
