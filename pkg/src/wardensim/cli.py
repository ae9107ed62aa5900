"""Command line interface.

Subcommands: ``run`` (one scenario or the four-way `sim-paper` preset),
``sweep`` (adaptive parameter grid from a file), ``list-channels``, and
``replay`` (re-run a recorded trace and verify byte identity). A flat
``key=value`` config file can preset any ``run`` flag; explicit flags win.

Exit codes: 0 success, 1 replay mismatch, 2 configuration error, 3 event
budget exhausted.
"""

from __future__ import annotations

import argparse
import json
import sys

from .channels import catalog, format_channel_line
from .experiment import (
    CSV_HEADER,
    ExperimentResult,
    Scenario,
    SweepGrid,
    WardenKind,
    WardenParams,
    mean_of,
    result_rows,
    run_four_way,
    run_single,
    run_sweep,
    scenario_from_dict,
    scenario_to_dict,
    sweep_rows,
    write_csv,
)
from .simnet import EventBudgetExhaustedError
from .wardens import EvictionPolicy

TRACE_MAGIC = "# wardensim-trace v1"


def parse_kv_file(path: str) -> dict[str, str]:
    """Flat key=value file; blank lines and #-comments ignored."""
    out: dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


_RUN_OPTION_TYPES = {
    "warden": str, "target": int, "twt": int, "ic": float, "ws": float,
    "ri": float, "subset": float, "ac": float, "eviction": str, "seed": int,
    "reps": int, "action": str, "budget": int, "out": str, "trace": str,
    "preset": str,
}


def _build_run_parser(defaults: dict[str, str]) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wardensim run", description="run one scenario")
    p.add_argument("--warden", choices=[k.value for k in WardenKind], default="none")
    p.add_argument("--target", type=int, choices=[100, 200, 400], default=100)
    p.add_argument("--twt", type=int, default=1)
    p.add_argument("--ic", type=float, default=10.0, help="adaptive: watched inactive %%")
    p.add_argument("--ws", type=float, default=10.0, help="adaptive: window seconds")
    p.add_argument("--ri", type=float, default=10.0, help="dynamic: reload seconds")
    p.add_argument("--subset", type=float, default=50.0, help="regular/dynamic: active %%")
    p.add_argument("--ac", type=float, default=None, help="adaptive: active %% (default: drawn)")
    p.add_argument("--eviction", choices=["fifo", "nru"], default="nru")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--action", choices=["normalize", "drop"], default=None,
                   help="force one action for all rules")
    p.add_argument("--budget", type=int, default=2_000_000)
    p.add_argument("--out", default=None, help="CSV output path")
    p.add_argument("--trace", default=None, help="trace output path")
    p.add_argument("--preset", choices=["sim-paper"], default=None)
    converted = {}
    for key, raw in defaults.items():
        if key not in _RUN_OPTION_TYPES:
            raise ValueError(f"unknown config key {key!r}")
        converted[key] = _RUN_OPTION_TYPES[key](raw)
    p.set_defaults(**converted)
    return p


def scenario_from_args(args: argparse.Namespace) -> Scenario:
    return Scenario(
        warden_kind=WardenKind(args.warden),
        target_packets=args.target,
        warden=WardenParams(
            subset_pct=args.subset,
            reload_s=args.ri,
            ic_pct=args.ic,
            ac_pct=args.ac,
            twt=args.twt,
            ws_s=args.ws,
            eviction=EvictionPolicy(args.eviction),
            action_override=args.action,
        ),
        repetitions=args.reps,
        base_seed=args.seed,
        event_budget=args.budget,
    )


def _write_trace(path: str, scenario: Scenario, traces: list[tuple[int, list[str]]]) -> None:
    with open(path, "w") as fh:
        fh.write(TRACE_MAGIC + "\n")
        fh.write("# scenario " + json.dumps(scenario_to_dict(scenario), sort_keys=True) + "\n")
        for seed, lines in traces:
            fh.write(f"# rep seed {seed}\n")
            for line in lines:
                fh.write(line + "\n")


def cmd_run(argv: list[str]) -> int:
    config_parser = argparse.ArgumentParser(add_help=False)
    config_parser.add_argument("--config", default=None)
    config_args, rest = config_parser.parse_known_args(argv)
    defaults: dict[str, str] = {}
    if config_args.config is not None:
        try:
            defaults = parse_kv_file(config_args.config)
        except (OSError, ValueError) as err:
            print(f"config error: {err}", file=sys.stderr)
            return 2
    try:
        parser = _build_run_parser(defaults)
    except ValueError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    args = parser.parse_args(rest)

    if args.preset == "sim-paper":
        seed_sets = args.reps if args.reps > 1 else 10
        result = run_four_way(base_seed=args.seed, seed_sets=seed_sets, target=args.target)
        print(result.render())
        return 0

    scenario = scenario_from_args(args)
    records = []
    traces = []
    try:
        for i in range(scenario.repetitions):
            seed = scenario.base_seed + i
            record, world = run_single(scenario, seed)
            records.append(record)
            traces.append((seed, world.trace_lines))
    except EventBudgetExhaustedError as err:
        print(f"budget exhausted: {err}", file=sys.stderr)
        return 3
    result = ExperimentResult(scenario=scenario, seeds=[s for s, _ in traces],
                              records=records, mean=mean_of(records))
    mean = result.mean
    print(f"warden={scenario.warden_kind.value} target={scenario.target_packets} "
          f"reps={scenario.repetitions}")
    print(f"mean nel_time_s={mean.nel_time_s:.3f} sent={mean.total_sent:.1f} "
          f"normalized={mean.normalized:.1f} dropped={mean.dropped:.1f} "
          f"forwarded={mean.forwarded:.1f} received={mean.received:.1f}")
    if args.out:
        write_csv(result_rows(result), args.out)
        print(f"wrote {args.out}")
    if args.trace:
        _write_trace(args.trace, scenario, traces)
        print(f"wrote {args.trace}")
    return 0


def cmd_sweep(argv: list[str]) -> int:
    parser = argparse.ArgumentParser(prog="wardensim sweep",
                                     description="adaptive parameter sweep")
    parser.add_argument("--grid", required=True, help="key=value file; twt/ic/ws lists")
    parser.add_argument("--out", required=True, help="CSV output path")
    args = parser.parse_args(argv)
    try:
        raw = parse_kv_file(args.grid)
        grid = SweepGrid(
            twt_values=[int(x) for x in raw.get("twt", "1,3,7,15,20").split(",")],
            ic_values=[float(x) for x in raw.get("ic", "1,3,10,25,50,75,95").split(",")],
            ws_values=[float(x) for x in raw.get("ws", "20,30,40,60,95").split(",")],
        )
        template = Scenario(
            warden_kind=WardenKind.ADAPTIVE,
            target_packets=int(raw.get("target", "400")),
            warden=WardenParams(ac_pct=float(raw["ac"]) if "ac" in raw else None,
                                eviction=EvictionPolicy(raw.get("eviction", "nru"))),
            repetitions=int(raw.get("reps", "3")),
            base_seed=int(raw.get("seed", "1")),
        )
    except (OSError, ValueError, KeyError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    try:
        results = run_sweep(grid, template)
    except EventBudgetExhaustedError as err:
        print(f"budget exhausted: {err}", file=sys.stderr)
        return 3
    write_csv(sweep_rows(results), args.out)
    print(f"wrote {args.out} ({len(results)} grid cells)")
    return 0


def cmd_list_channels() -> int:
    for t in catalog():
        print(format_channel_line(t))
    return 0


def cmd_replay(argv: list[str]) -> int:
    parser = argparse.ArgumentParser(prog="wardensim replay",
                                     description="re-run a trace and verify identity")
    parser.add_argument("--trace", required=True)
    args = parser.parse_args(argv)
    try:
        with open(args.trace) as fh:
            lines = fh.read().splitlines()
    except OSError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    if not lines or lines[0] != TRACE_MAGIC or not lines[1].startswith("# scenario "):
        print("config error: not a wardensim trace file", file=sys.stderr)
        return 2
    scenario = scenario_from_dict(json.loads(lines[1][len("# scenario "):]))
    sections: list[tuple[int, list[str]]] = []
    for line in lines[2:]:
        if line.startswith("# rep seed "):
            sections.append((int(line[len("# rep seed "):]), []))
        else:
            sections[-1][1].append(line)
    mismatches = 0
    for seed, recorded in sections:
        try:
            _, world = run_single(scenario, seed)
        except EventBudgetExhaustedError as err:
            print(f"budget exhausted: {err}", file=sys.stderr)
            return 3
        if world.trace_lines != recorded:
            mismatches += 1
            print(f"seed {seed}: trace differs", file=sys.stderr)
    if mismatches:
        return 1
    print(f"replay OK ({len(sections)} repetition(s) byte-identical)")
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = argparse.ArgumentParser(
        prog="wardensim",
        description="covert-channel warden simulator",
    )
    parser.add_argument("command", choices=["run", "sweep", "list-channels", "replay"])
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    command, rest = argv[0], argv[1:]
    if command == "run":
        return cmd_run(rest)
    if command == "sweep":
        return cmd_sweep(rest)
    if command == "list-channels":
        return cmd_list_channels()
    if command == "replay":
        return cmd_replay(rest)
    parser.print_usage(sys.stderr)
    print(f"unknown command {command!r}", file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
