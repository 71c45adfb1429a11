"""Command-line entry points.

Subcommands: simulate, sweep-delta-t, sweep-event-rate, compare-sampling,
active-pixels. Exit code 0 on success, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .events import make_event_frame
from .formats import format_cell, read_event_stream
from .harness import (
    COMPARE_CSV_HEADER,
    DWELL_CSV_HEADER,
    RATE_CSV_HEADER,
    ConfigError,
    compare_sampling,
    load_scenario,
    run_scenario,
    sweep_dwell_time,
    sweep_event_rate,
    write_sweep_csv,
)
from .policy import active_pixel_fraction


def _add_sweep_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--f-min", type=float, default=50.0, help="lowest scan frequency in Hz")
    sub.add_argument("--f-max", type=float, default=290.0, help="highest scan frequency in Hz")
    sub.add_argument("--f-step", type=float, default=10.0, help="frequency step in Hz")
    sub.add_argument("--out", type=Path, default=None, help="CSV output path (default: stdout)")


def _frequencies(args) -> list[float]:
    if args.f_step <= 0 or args.f_max < args.f_min:
        raise ConfigError("invalid frequency range: need f_min <= f_max and f_step > 0")
    out = []
    f = args.f_min
    while f <= args.f_max + 1e-9:
        out.append(round(f, 9))
        f += args.f_step
    return out


def _emit_rows(rows, header, out_path) -> None:
    if out_path is None:
        print(",".join(header))
        for row in rows:
            print(",".join(format_cell(row[k]) for k in header))
    else:
        write_sweep_csv(rows, header, out_path)
        print(f"wrote {out_path}")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evsl",
        description="Event-guided structured-light depth sensing simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one scenario and write per-period metrics")
    sim.add_argument("scenario", type=Path, help="scenario YAML file")
    sim.add_argument("--out-dir", type=Path, default=None, help="artifact directory")
    sim.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    sim.add_argument("--periods", type=int, default=None, help="override the period count")
    sim.add_argument("--dump", nargs="+", choices=["events", "masks", "depth", "ply"], default=[],
                     help="artifact kinds to write per period")
    sim.add_argument("--parallel", action="store_true",
                     help="prefetch guide events on a worker thread (identical output)")

    for name, help_text in (
        ("sweep-delta-t", "dense dwell time per sensor preset over a frequency range"),
        ("sweep-event-rate", "theoretical event rate per sensor preset over a frequency range"),
    ):
        sweep = sub.add_parser(name, help=help_text)
        _add_sweep_args(sweep)

    cmp_parser = sub.add_parser("compare-sampling", help="dense vs sparse vs event-guided on one scenario")
    cmp_parser.add_argument("scenario", type=Path)
    cmp_parser.add_argument("--out-dir", type=Path, default=None)
    cmp_parser.add_argument("--seed", type=int, default=None)
    cmp_parser.add_argument("--periods", type=int, default=None)
    cmp_parser.add_argument("--parallel", action="store_true")

    active = sub.add_parser("active-pixels", help="active-pixel fraction of an event stream file")
    active.add_argument("events", type=Path, help="event stream text file (t_us,x,y,p)")
    active.add_argument("--threshold", type=int, default=1, help="events per pixel to count as active")
    active.add_argument("--resolution", type=int, nargs=2, metavar=("W", "H"), default=None,
                        help="sensor resolution; inferred from the data when omitted")
    return parser


def _load_with_overrides(args):
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    if args.periods is not None:
        scenario = replace(scenario, periods=args.periods)
    return scenario


def _cmd_simulate(args) -> int:
    scenario = _load_with_overrides(args)
    out_dir = args.out_dir or scenario.out_dir or Path("evsl_out") / scenario.name
    reports = run_scenario(scenario, parallel=args.parallel, dump=args.dump, out_dir=out_dir)
    mean_fraction = sum(r.mask_fraction for r in reports) / len(reports)
    print(f"ran {len(reports)} scan period(s) of '{scenario.name}' (seed {scenario.seed})")
    print(f"mean mask fraction {mean_fraction:.4f} -> "
          f"{100 * (1 - mean_fraction):.1f}% illumination reduction vs dense")
    print(f"wrote {Path(out_dir) / 'periods.csv'}")
    return 0


def _cmd_compare(args) -> int:
    scenario = _load_with_overrides(args)
    out_dir = args.out_dir or scenario.out_dir
    rows = compare_sampling(scenario, parallel=args.parallel, out_dir=out_dir)
    print(",".join(COMPARE_CSV_HEADER))
    for row in rows:
        print(",".join(format_cell(row[k]) for k in COMPARE_CSV_HEADER))
    if out_dir is not None:
        print(f"wrote {Path(out_dir) / 'compare_sampling.csv'}")
    return 0


def _cmd_active_pixels(args) -> int:
    resolution = tuple(args.resolution) if args.resolution else None
    stream = read_event_stream(args.events, resolution)
    if len(stream) == 0:
        print("active_pixel_fraction 0")
        return 0
    frame = make_event_frame(stream, (float(stream.t[0]), float(stream.t[-1]) + 1.0))
    fraction = active_pixel_fraction(frame, args.threshold)
    print(f"active_pixel_fraction {fraction:.6g}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "sweep-delta-t":
            _emit_rows(sweep_dwell_time(frequencies_hz=_frequencies(args)), DWELL_CSV_HEADER, args.out)
            return 0
        if args.command == "sweep-event-rate":
            _emit_rows(sweep_event_rate(frequencies_hz=_frequencies(args)), RATE_CSV_HEADER, args.out)
            return 0
        if args.command == "compare-sampling":
            return _cmd_compare(args)
        if args.command == "active-pixels":
            return _cmd_active_pixels(args)
        parser.error(f"unknown command {args.command!r}")
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
