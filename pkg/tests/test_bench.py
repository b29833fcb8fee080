import json
import re
import sys
import xml.etree.ElementTree as ET

import pytest

from cloudgan.bench import (
    CATALOG, LOG_FLOOR, PlotStyle, Series, UnknownScenarioError, from_dict, list_scenarios, load_config, render_svg,
    run_scenario,
)
from cloudgan.bench.scenarios import sha256_file
from cloudgan.cli import main
from cloudgan.gan import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

MODEL_SCENARIOS = [n for n in CATALOG if n != "train-smoke"]


def test_catalog_contents():
    names = {n for n, _, _ in list_scenarios()}
    assert len(names) >= 10
    assert {"loop-bottleneck", "tpu-v2-v3", "tpu-batch-quantization", "tpu-weak-scaling", "gpu-batch-sweep",
            "worker-layout", "gpu-scaling-cost", "azure-scaling", "prefetch-sweep", "train-smoke"} <= names
    assert all(desc and anchor for _, desc, anchor in list_scenarios())


def test_unknown_scenario_lists_names(tmp_path):
    with pytest.raises(UnknownScenarioError) as info:
        run_scenario(from_dict({"scenario": "foo", "out": str(tmp_path)}))
    assert "tpu-weak-scaling" in str(info.value) and "foo" in str(info.value)


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="gan.bogus"):
        from_dict({"scenario": "tpu-v2-v3", "gan": {"bogus": 1}})
    with pytest.raises(ConfigError, match="train.lr"):
        from_dict({"scenario": "tpu-v2-v3", "train": {"lr": "fast"}})
    with pytest.raises(ConfigError, match="scenario"):
        from_dict({})
    with pytest.raises(ConfigError, match="prices"):
        (tmp_path / "c.toml").write_text('scenario = "gpu-scaling-cost"\nprices = "missing.toml"\n')
        load_config(tmp_path / "c.toml")


def test_tpu_weak_scaling_outputs(tmp_path):
    summary = run_scenario(from_dict({"scenario": "tpu-weak-scaling", "out": str(tmp_path)}))
    rows = (tmp_path / "tpu_weak_scaling.csv").read_text().splitlines()
    assert [int(r.split(",")[0]) for r in rows[1:]] == [8, 16, 32, 64, 128]
    assert (tmp_path / "tpu_weak_scaling.svg").exists()
    on_disk = json.loads((tmp_path / "summary.json").read_text())
    assert on_disk["files"] == summary["files"]
    for f in summary["files"]:
        assert f["sha256"] == sha256_file(tmp_path / f["name"])


@pytest.mark.parametrize("name", MODEL_SCENARIOS)
def test_model_scenarios_deterministic(tmp_path, name):
    a = run_scenario(from_dict({"scenario": name, "out": str(tmp_path / "a")}))
    b = run_scenario(from_dict({"scenario": name, "out": str(tmp_path / "b")}))
    assert a["files"] == b["files"] and a["claims"] == b["claims"]
    for f in a["files"]:
        assert (tmp_path / "a" / f["name"]).read_bytes() == (tmp_path / "b" / f["name"]).read_bytes()
        if f["name"].endswith(".csv"):
            assert b"\r" not in (tmp_path / "a" / f["name"]).read_bytes()


def test_worker_layouts(tmp_path):
    run_scenario(from_dict({"scenario": "worker-layout", "out": str(tmp_path)}))
    rows = (tmp_path / "worker_layout.csv").read_text().splitlines()[1:]
    layouts = [tuple(r.split(",")[:5]) for r in rows]
    assert len(layouts) == 8
    fixed = {(w, g) for kind, n, gpn, w, g in layouts if kind == "fixed-hardware"}
    assert fixed == {("32", "1"), ("16", "2"), ("8", "4"), ("4", "8")}


def test_claims_recomputed_from_csv(tmp_path):
    """Claims equal the values recomputed from the emitted CSV."""
    cfg = from_dict({"scenario": "tpu-v2-v3", "out": str(tmp_path)})
    summary = run_scenario(cfg)
    rows = list(map(lambda r: r.split(","), (tmp_path / "tpu_v2_v3.csv").read_text().splitlines()[1:]))
    v2 = float(rows[0][2])
    v3 = next(float(r[2]) for r in rows if r[0] == "tpu-v3-core" and r[1] == "8")
    assert summary["claims"]["v2_v3_ratio_8_cores"] == v2 / v3


def test_svg_two_points():
    svg = render_svg([Series("s", [0, 1], [2, 3])], PlotStyle("t", "x (s)", "y (s)"))
    root = ET.fromstring(svg)
    lines = [e for e in root.iter() if e.tag.endswith("polyline")]
    assert len(lines) == 1 and len(lines[0].get("points").split()) == 2
    assert svg == render_svg([Series("s", [0, 1], [2, 3])], PlotStyle("t", "x (s)", "y (s)"))


def test_svg_log_floor_annotated():
    svg = render_svg([Series("s", [0, 1, 2], [0.0, 1.0, 10.0])], PlotStyle(log_y=True))
    assert re.search(f"floored at {LOG_FLOOR:g}", svg)


def test_svg_requires_series():
    with pytest.raises(ValueError):
        render_svg([], PlotStyle())


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["bench", "list"]) == 0
    bad = tmp_path / "bad.toml"
    bad.write_text('scenario = "tpu-v2-v3"\nbogus = 1\n')
    assert main(["bench", "run", "--config", str(bad)]) == 2
    assert "bogus" in capsys.readouterr().err
    good = tmp_path / "good.toml"
    good.write_text('scenario = "azure-scaling"\n')
    assert main(["bench", "run", "--config", str(good), "--out", str(tmp_path / "o"), "--seed", "3"]) == 0
    assert json.loads((tmp_path / "o" / "summary.json").read_text())["seed"] == 3
    assert main(["data", "synth", "--n", "4", "--out", str(tmp_path / "e.shwr")]) == 0
    measured = tmp_path / "m.csv"
    measured.write_text("x,seconds\n1,4\n2,7\n3,10\n")
    capsys.readouterr()
    assert main(["perf", "calibrate", "--measured", str(measured)]) == 0
    fitted = tomllib.loads(capsys.readouterr().out)
    assert fitted["params"]["slope"] == pytest.approx(3.0, abs=1e-6)
    prices = tmp_path / "p.toml"
    prices.write_text('"gpu-v100".reserved = 2.0\n"gpu-v100".preemptible = 1.0\n"tpu-v3-core".reserved = 4.0\n'
                      '"tpu-v3-core".preemptible = 1.0\n')
    assert main(["cost", "rank", "--prices", str(prices), "--objective", "fastest"]) == 0
    assert main(["cost", "rank", "--prices", str(prices), "--objective", "slowest"]) == 2
    assert main(["nonsense"]) == 2


def test_cli_runtime_error_exit_code(tmp_path, monkeypatch):
    import cloudgan.bench.scenarios as sc

    def boom(run):
        raise RuntimeError("disk on fire")

    monkeypatch.setitem(sc.CATALOG, "tpu-v2-v3", sc.Scenario("tpu-v2-v3", "d", "a", boom))
    cfg = tmp_path / "c.toml"
    cfg.write_text('scenario = "tpu-v2-v3"\n')
    assert main(["bench", "run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
