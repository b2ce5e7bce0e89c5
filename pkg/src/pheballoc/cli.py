"""Command line interface: ``run``, ``gen-fleet`` and ``nmae``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .exceptions import ConfigError, DomainError, RouteFileError
from .forecast import load_forecast_csv, nmae
from .models import EnergyModel, synthetic_emission_model
from .routes import fleet_manifest, fleet_to_json, generate_fleet
from .scenario import compare, format_table, run


def _cmd_run(args) -> int:
    report = run(args.config, out_dir=args.out, solver=args.solver, seed=args.seed)
    out = report.config.output_dir
    print(f"wrote outputs to {out}")
    for name in report.traces:
        summary = report.solver_summary(name)
        gap = summary["oracle_gap"]
        gap_txt = "n/a" if gap is None else f"{100 * gap:.3f}%"
        print(f"{name:<7} savings {summary['savings_g'] / 1000:.3f} kg, oracle gap {gap_txt}, "
              f"runtime {summary['runtime_s']:.2f} s")
        for w in summary["warnings"]:
            print(f"  warning: {w}")
        if summary["over_wall_clock_budget"]:
            print(f"  warning: exceeded wall-clock budget of {report.config.wall_clock_budget_s} s")
    if len(report.traces) >= 2:
        table = compare(report)
        print(format_table(table))
        if "ordering" in table:
            for conv, ok in table["ordering"].items():
                print(f"aimd bits < admm bits at {100 * table['matched_gap']:g}% gap ({conv}): {ok}")
    return 0


def _cmd_gen_fleet(args) -> int:
    routes = generate_fleet(args.buses, args.seed)
    text = json.dumps(fleet_to_json(routes), separators=(",", ":")) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.manifest:
        manifest = fleet_manifest(routes, EnergyModel(), synthetic_emission_model())
        manifest.update({"generator": "generate_fleet", "seed": args.seed})
        Path(args.manifest).write_text(json.dumps(manifest, indent=1) + "\n")
    return 0


def _cmd_nmae(args) -> int:
    series = load_forecast_csv(args.forecast, capacity_norm=args.capacity_norm)
    rep = nmae(series, threshold=args.threshold, bin_width=args.bin_width)
    if args.json:
        print(json.dumps(rep.as_dict(), indent=1))
        return 0
    print(f"records: {len(series)}  capacity_norm: {series.capacity_norm:g} kWh")
    print(f"max NMAE: {rep.max:.3f}%  mean NMAE: {rep.per_record.mean():.3f}%")
    print(f"within {rep.threshold:g}%: {100 * rep.fraction_within:.1f}%")
    for lo, hi, c in zip(rep.bin_edges[:-1], rep.bin_edges[1:], rep.counts):
        print(f"  [{lo:5.1f}, {hi:5.1f}) {c:4d}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pheballoc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario config")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--solver", choices=["aimd", "admm", "oracle", "all"])
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("gen-fleet", help="generate a synthetic fleet route file")
    p.add_argument("--buses", type=int, default=15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="route file path (default: stdout)")
    p.add_argument("--manifest", help="also write a per-bus manifest JSON here")
    p.set_defaults(func=_cmd_gen_fleet)

    p = sub.add_parser("nmae", help="forecast error statistics of a day,predicted_kwh,actual_kwh CSV")
    p.add_argument("forecast")
    p.add_argument("--capacity-norm", type=float, help="normalisation base in kWh (default: capacity_kwh column, else max actual)")
    p.add_argument("--threshold", type=float, default=3.0)
    p.add_argument("--bin-width", type=float, default=1.0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_nmae)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, RouteFileError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
