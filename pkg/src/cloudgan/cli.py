"""Command-line entry point: ``cloudgan {bench,data,perf,cost} ...``.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LOW,HIGH, got {text!r}") from None
    if not lo < hi:
        raise argparse.ArgumentTypeError(f"expected LOW < HIGH, got {text!r}")
    return lo, hi


def _grid(text: str) -> tuple[int, int, int]:
    try:
        dims = tuple(int(v) for v in text.lower().replace("x", ",").split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NX,NY,NZ, got {text!r}") from None
    if len(dims) != 3 or min(dims) < 1:
        raise argparse.ArgumentTypeError(f"expected three positive sizes, got {text!r}")
    return dims


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cloudgan", description="Data-parallel 3D GAN benchmarks, timing model and cost tools")
    sub = p.add_subparsers(dest="group", required=True, parser_class=_Parser)

    bench = sub.add_parser("bench", help="run or list benchmark scenarios")
    bsub = bench.add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    run = bsub.add_parser("run", help="run one scenario from a config file")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", type=Path)
    bsub.add_parser("list", help="list the scenario catalog")

    data = sub.add_parser("data", help="synthetic data tools")
    dsub = data.add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    syn = dsub.add_parser("synth", help="write synthetic shower events to a record file")
    syn.add_argument("--n", type=int, required=True)
    syn.add_argument("--grid", type=_grid, default=(8, 8, 8))
    syn.add_argument("--ep-range", type=_range, default=(10.0, 100.0))
    syn.add_argument("--theta-range", type=_range, default=None)
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--out", type=Path, required=True)

    perf = sub.add_parser("perf", help="timing model tools")
    psub = perf.add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    cal = psub.add_parser("calibrate", help="fit a curve family to measured (x, seconds) points; prints TOML")
    cal.add_argument("--measured", type=Path, required=True)
    cal.add_argument("--family", default="linear")

    cost = sub.add_parser("cost", help="cost tools")
    csub = cost.add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    rank = csub.add_parser("rank", help="rank cluster options by cost or time")
    rank.add_argument("--prices", type=Path, required=True)
    rank.add_argument("--objective", default="cheapest")
    rank.add_argument("--deadline", type=float)
    rank.add_argument("--options", type=Path, help="CSV: name,device_kind,devices,mode,epoch_time_s[,n_epochs]")
    rank.add_argument("--epochs", type=int, default=1, help="epochs for the built-in option set")
    return p


def _bench(args) -> int:
    from .bench import list_scenarios, load_config, run_scenario

    if args.cmd == "list":
        for name, desc, anchor in list_scenarios():
            print(f"{name:24s} {desc}\n{'':24s} anchor: {anchor}")
        return EXIT_OK
    overrides = {} if args.seed is None else {"seed": args.seed}
    if args.out is not None:
        overrides["out"] = str(args.out.resolve())
    cfg = load_config(args.config, overrides)
    summary = run_scenario(cfg)
    print(json.dumps(summary["claims"], indent=1, sort_keys=True, default=str))
    print(f"wrote {len(summary['files'])} files and summary.json to {cfg.out_dir}")
    return EXIT_OK


def _data(args) -> int:
    from .data import synth_dataset, write_records

    if args.n < 1:
        raise UsageError("--n must be >= 1")
    events = synth_dataset(args.n, args.grid, seed=args.seed, ep_range=args.ep_range, theta_range=args.theta_range)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    n = write_records(events, args.out)
    print(f"wrote {n} events to {args.out}")
    return EXIT_OK


def _perf(args) -> int:
    from .perf import calibrate, read_measured_csv

    result = calibrate(read_measured_csv(args.measured), args.family)
    sys.stdout.write(result.to_toml())
    return EXIT_OK


def _read_options(path: Path):
    import csv

    from .cost import CostOption

    out = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            try:
                out.append(CostOption(row["name"], row["device_kind"], int(row["devices"]), row["mode"],
                                      float(row["epoch_time_s"]), int(row.get("n_epochs") or 1)))
            except (KeyError, ValueError) as e:
                raise UsageError(f"{path}: bad option row {row}: {e}") from None
    return out


def _cost(args) -> int:
    from .cost import PriceTable, reference_options, rank_options

    prices = PriceTable.load(args.prices)
    options = _read_options(args.options) if args.options else reference_options(args.epochs)
    ranked = rank_options(options, args.objective, prices, args.deadline)
    print("rank,option,device,devices,mode,time_s,cost")
    for i, r in enumerate(ranked, 1):
        print(f"{i},{r.name},{r.device_kind},{r.devices},{r.mode},{r.time_to_converge_s:.6g},{r.cost_to_converge:.6g}")
    return EXIT_OK


def main(argv=None) -> int:
    from .bench.scenarios import UnknownScenarioError
    from .cost import PriceError
    from .gan import ConfigError
    from .perf import CalibrationError

    try:
        args = build_parser().parse_args(argv)
        return {"bench": _bench, "data": _data, "perf": _perf, "cost": _cost}[args.group](args)
    except (UsageError, ConfigError, UnknownScenarioError, PriceError, CalibrationError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as e:
        # invalid objectives, unmet deadlines and similar user-supplied values
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
