"""Command-line entry point.

Subcommands::

    aercore arb run     --arch hier-tree --n 64 --mode sparse --trials 1000
    aercore arb tables  --n 64,256
    aercore sweep       --mode sparse --n 16,64,256,1024
    aercore cam search  --entries 16 --width 11 --completion cscd --feedback
    aercore cam report  --entries 16,512
    aercore demo        --n 64 --entries 64
    aercore check       --trace trace.csv

Flags always win over ``--config`` file values; unknown config keys are an
error so sweep-file typos surface immediately.  The effective configuration
is echoed (and hashed) into every output.  Exit codes: 0 success, 2 invalid
configuration, 3 invariant or timing violation detected, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from fractions import Fraction
from pathlib import Path
from typing import Optional

from . import arbitration as arb
from . import bench
from . import cam as cam_mod
from .arbitration import ArbiterConfig, ArchitectureKind, InvalidN
from .cam import CamArray, Cscd, DelayLine, check_cam_timing
from .kernel import check_handshake_projection, load_trace_csv, violations_to_json
from .pipeline import check_timing
from .workloads import Burst, Poisson

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VIOLATION = 3
EXIT_IO = 4

ARCH_CHOICES = [k.value for k in ArchitectureKind]


class ConfigError(ValueError):
    pass


def _parse_ns(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",") if p]
    except ValueError as exc:
        raise ConfigError(f"bad N list {text!r}: {exc}") from exc


def _merge_config(args: argparse.Namespace, explicit: set) -> dict:
    """Apply --config JSON under explicit flags (flags win); reject unknown keys."""
    merged = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    if getattr(args, "config", None):
        try:
            file_values = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise OSError(f"cannot read config file {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {args.config} is not valid JSON: {exc}") from exc
        unknown = set(file_values) - set(merged)
        if unknown:
            raise ConfigError(
                f"unknown config keys {sorted(unknown)}; known keys: {sorted(merged)}"
            )
        for key, value in file_values.items():
            if key not in explicit:
                merged[key] = value
    return merged


def _write_output(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _effective(config: dict) -> dict:
    # the output path is where the report goes, not part of what it says
    return {k: v for k, v in config.items() if k != "out"}


def _echo_config(config: dict) -> str:
    effective = _effective(config)
    body = json.dumps(effective, sort_keys=True, default=str)
    return f"# config {bench.config_hash(effective)} {body}\n"


# -- subcommand bodies --------------------------------------------------------


def _cmd_arb_run(config: dict) -> int:
    kind = ArchitectureKind.parse(config["arch"])
    inst = arb.build(ArbiterConfig(kind, config["n"]), seed=config["seed"])
    mode = config["mode"]
    if mode == "sparse":
        stats = arb.measure_sparse(inst, config["trials"], seed=config["seed"])
        rows = [
            bench.SweepPoint(
                kind.value, config["n"], "sparse",
                arb.analytic_sparse_latency(kind, config["n"]),
                stats.mean, stats.ci95, stats.trials, config["seed"],
            )
        ]
    elif mode == "burst":
        total = arb.measure_burst(inst, seed=config["seed"])
        rows = [
            bench.SweepPoint(
                kind.value, config["n"], "burst",
                arb.analytic_burst_latency(kind, config["n"]),
                total, 0.0, 1, config["seed"],
            )
        ]
    elif mode == "poisson":
        events = arb.simulate(inst, Poisson(rate=config["rate"], duration=config["duration"], seed=config["seed"]))
        mean = (
            Fraction(sum(e.t_output - e.t_request for e in events), 100 * len(events))
            if events
            else Fraction(0)
        )
        rows = [bench.SweepPoint(kind.value, config["n"], "poisson", Fraction(0), mean, 0.0, len(events), config["seed"])]
    else:
        raise ConfigError(f"unknown mode {mode!r}")
    if config["format"] == "json":
        out = bench.json_summary({"run": [asdict(r) for r in rows]}, config=_effective(config))
    else:
        out = _echo_config(config) + bench.sweep_rows_csv(rows)
    _write_output(out, config.get("out"))
    if inst.mutex_violations:
        return EXIT_VIOLATION
    return EXIT_OK


def _cmd_arb_tables(config: dict) -> int:
    ns = _parse_ns(config["n"])
    t1 = bench.table_latency_sparse(ns, trials=config["trials"], seed=config["seed"])
    t2 = bench.table_latency_burst(ns, seed=config["seed"])
    t3 = bench.table_area(ns)
    if config["format"] == "json":
        out = bench.json_summary({t.name: t.to_dict() for t in (t1, t2, t3)}, config=_effective(config))
    else:
        out = _echo_config(config) + "\n".join(t.to_csv() for t in (t1, t2, t3))
    _write_output(out, config.get("out"))
    return EXIT_OK


def _cmd_sweep(config: dict) -> int:
    points = bench.sweep_scaling(
        ns=_parse_ns(config["n"]),
        mode=config["mode"],
        trials=config["trials"],
        seed=config["seed"],
        jobs=config["jobs"],
    )
    if config["format"] == "json":
        out = bench.json_summary({"sweep": [asdict(p) for p in points]}, config=_effective(config))
    else:
        out = _echo_config(config) + bench.sweep_rows_csv(points)
    _write_output(out, config.get("out"))
    if config["mode"] == "sparse":
        failures = bench.hat_dominates_sparse(points)
        if failures:
            sys.stderr.write("sparse-mode ordering failures:\n" + "\n".join(failures) + "\n")
            return EXIT_VIOLATION
    return EXIT_OK


def _make_cam(config: dict, trace: bool = False) -> CamArray:
    completion = Cscd() if config["completion"] == "cscd" else DelayLine()
    array = CamArray(
        config["entries"],
        config["width"],
        seed=config["seed"],
        completion=completion,
        feedback=config["feedback"],
        speculative=config["speculative"],
        trace=trace,
    )
    if config["completion"] == "delay-line":
        cam_mod.calibrated(array, seed=config["seed"])
    return array


def _cmd_cam_search(config: dict) -> int:
    array = _make_cam(config, trace=True)
    from .workloads import SplitMix64

    rng = SplitMix64(config["seed"] ^ 0xBEEF)
    space = 1 << config["width"]
    array.load(rng.uniform_int(space) for _ in range(config["entries"]))
    keys = (
        [int(k, 0) for k in str(config["key"]).split(",")]
        if config.get("key")
        else [rng.uniform_int(space) for _ in range(config["searches"])]
    )
    rows = []
    any_false = False
    for key in keys:
        r = array.search(key)
        any_false |= r.false_timing
        rows.append(
            {
                "key": key,
                "matches": r.matches(),
                "cycle_time": r.cycle_time,
                "energy_total": round(r.energy.total, 9),
                "false_timing": r.false_timing,
            }
        )
    violations = check_cam_timing(array.trace)
    if config["format"] == "json":
        out = bench.json_summary({"searches": rows}, violations=violations, config=_effective(config))
    else:
        lines = ["key,matches,cycle_time,energy_total,false_timing"]
        for row in rows:
            lines.append(
                f"{row['key']},{';'.join(str(m) for m in row['matches'])},"
                f"{row['cycle_time']},{row['energy_total']:.6g},{int(row['false_timing'])}"
            )
        out = _echo_config(config) + "\n".join(lines) + "\n"
    _write_output(out, config.get("out"))
    if violations or any_false:
        sys.stderr.write(violations_to_json(violations) + "\n")
        return EXIT_VIOLATION
    return EXIT_OK


def _cmd_cam_report(config: dict) -> int:
    points = []
    for n in _parse_ns(config["entries"]):
        points.append((n, config["width"]))
    rows = bench.cam_report(design_points=points, searches=config["searches"], seed=config["seed"])
    if config["format"] == "json":
        payload = {"cam_report": [asdict(r) for r in rows]}
        out = bench.json_summary(payload, config=_effective(config))
    else:
        out = _echo_config(config) + bench.cam_rows_csv(rows)
    _write_output(out, config.get("out"))
    return EXIT_OK


def _cmd_demo(config: dict) -> int:
    result = bench.aer_demo(
        n=config["n"],
        workload=Burst(window=0, seed=config["seed"]),
        cam_entries=config["entries"],
        seed=config["seed"],
    )
    if config["format"] == "json":
        out = bench.json_summary(
            {"demo": [asdict(rec) for rec in result.records]}, config=_effective(config)
        )
    else:
        lines = ["neuron,t_output_units,targets"]
        for rec in result.records:
            lines.append(f"{rec.neuron},{rec.t_output_units:g},{';'.join(str(t) for t in rec.targets)}")
        out = _echo_config(config) + "\n".join(lines) + "\n"
    _write_output(out, config.get("out"))
    return EXIT_OK


def _cmd_check(config: dict) -> int:
    records = load_trace_csv(config["trace"])
    violations = list(check_timing(records))
    violations += check_cam_timing(records)
    violations += check_handshake_projection(records)
    out = violations_to_json(violations) + "\n"
    _write_output(out, config.get("out"))
    return EXIT_VIOLATION if violations else EXIT_OK


# -- parser --------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="JSON config file; explicit flags win")
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aercore", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    arb_p = sub.add_parser("arb", help="arbitration architectures")
    arb_sub = arb_p.add_subparsers(dest="subcommand", required=True)

    run_p = arb_sub.add_parser("run", help="simulate one architecture/workload")
    run_p.add_argument("--arch", choices=ARCH_CHOICES, required=True)
    run_p.add_argument("--n", type=int, default=64)
    run_p.add_argument("--mode", choices=("sparse", "burst", "poisson"), default="sparse")
    run_p.add_argument("--trials", type=int, default=1000)
    run_p.add_argument("--rate", type=float, default=0.05, help="poisson events per unit")
    run_p.add_argument("--duration", type=int, default=10000, help="poisson horizon, units")
    _add_common(run_p)
    run_p.set_defaults(func=_cmd_arb_run)

    tables_p = arb_sub.add_parser("tables", help="analytic vs simulated comparison tables")
    tables_p.add_argument("--n", default="64,256", help="comma-separated neuron counts")
    tables_p.add_argument("--trials", type=int, default=20000)
    _add_common(tables_p)
    tables_p.set_defaults(func=_cmd_arb_tables)

    sweep_p = sub.add_parser("sweep", help="latency scaling sweep")
    sweep_p.add_argument("--n", default="16,64,256,1024")
    sweep_p.add_argument("--mode", choices=("sparse", "burst"), default="sparse")
    sweep_p.add_argument("--trials", type=int, default=20000)
    sweep_p.add_argument("--jobs", type=int, default=1)
    _add_common(sweep_p)
    sweep_p.set_defaults(func=_cmd_sweep)

    cam_p = sub.add_parser("cam", help="content-addressable routing memory")
    cam_sub = cam_p.add_subparsers(dest="subcommand", required=True)

    search_p = cam_sub.add_parser("search", help="run searches on one array")
    search_p.add_argument("--entries", type=int, default=16)
    search_p.add_argument("--width", type=int, default=11)
    search_p.add_argument("--completion", choices=("delay-line", "cscd"), default="delay-line")
    search_p.add_argument("--feedback", action="store_true")
    search_p.add_argument("--speculative", type=int, default=0, metavar="N_TAIL")
    search_p.add_argument("--searches", type=int, default=16)
    search_p.add_argument("--key", help="comma-separated explicit keys")
    _add_common(search_p)
    search_p.set_defaults(func=_cmd_cam_search)

    report_p = cam_sub.add_parser("report", help="cycle-time and energy comparison")
    report_p.add_argument("--entries", default="16,512")
    report_p.add_argument("--width", type=int, default=11)
    report_p.add_argument("--searches", type=int, default=200)
    _add_common(report_p)
    report_p.set_defaults(func=_cmd_cam_report)

    demo_p = sub.add_parser("demo", help="end-to-end: arbiter output feeds the CAM")
    demo_p.add_argument("--n", type=int, default=64)
    demo_p.add_argument("--entries", type=int, default=64)
    _add_common(demo_p)
    demo_p.set_defaults(func=_cmd_demo)

    check_p = sub.add_parser("check", help="run the timing/protocol checkers on a saved trace")
    check_p.add_argument("--trace", required=True)
    _add_common(check_p)
    check_p.set_defaults(func=_cmd_check)

    return parser


def _collect_option_map(parser: argparse.ArgumentParser) -> dict:
    """dest -> option strings, across all subparsers."""
    out: dict = {}
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sp in action.choices.values():
                for dest, opts in _collect_option_map(sp).items():
                    out.setdefault(dest, set()).update(opts)
        elif action.dest != "help":
            out.setdefault(action.dest, set()).update(action.option_strings)
    return out


def _explicit_dests(parser: argparse.ArgumentParser, argv: list[str]) -> set:
    """Dests whose flags actually appear on the command line."""
    given = {a.split("=", 1)[0] for a in argv if a.startswith("-")}
    return {dest for dest, opts in _collect_option_map(parser).items() if opts & given}


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags/choices, 0 on --help
        return int(exc.code or 0)
    try:
        config = _merge_config(args, _explicit_dests(parser, list(argv)))
        return args.func(config)
    except (ConfigError, InvalidN, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG
    except OSError as exc:
        sys.stderr.write(f"i/o error: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
