"""Command-line interface: ``emff run | validate | presets | check``.

Exit codes: 0 success, 1 scenario (or check) failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import ConfigError, ScenarioError
from .scenario import PRESETS, dump_config, load_config
from .simulation import run_scenario
from .telemetry import write_csv, write_jsonl, write_summary

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2

log = logging.getLogger("emff")


def _overrides(args):
    over = {}
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    sim = {}
    if getattr(args, "mode", None) is not None:
        sim["mode"] = args.mode
    if getattr(args, "duration", None) is not None:
        sim["duration_s"] = args.duration
    if getattr(args, "dt", None) is not None:
        sim["dt"] = args.dt
    if getattr(args, "telemetry_every", None) is not None:
        sim["telemetry_every"] = args.telemetry_every
    if sim:
        over["sim"] = sim
    return over


def _write_outputs(result, out, fmt, report):
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    meta = {
        "emff_version": __version__,
        "scenario": cfg.name,
        "schema_version": cfg.schema_version,
        "controller": cfg.controller,
        "mode": cfg.sim.mode,
        "dt_s": cfg.sim.dt,
        "seed": cfg.seed,
    }
    if result.error:
        meta["error"] = result.error
    written = []
    if fmt in ("csv", "both"):
        written.append(write_csv(result.frames, out / "telemetry.csv", meta))
    if fmt in ("jsonl", "both"):
        written.append(write_jsonl(result.frames, out / "telemetry.jsonl"))
    summary = dict(result.summary)
    if result.error:
        summary["error"] = result.error
        summary["failed_step"] = result.failed_step
    written.append(write_summary(summary, out / "summary.json"))
    (out / "config.yaml").write_text(dump_config(cfg))
    if report and result.frames:
        from .report import render_report

        written += render_report(result.frames, cfg, out / "figures")
    return written


def cmd_run(args):
    try:
        cfg = load_config(args.config, _overrides(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else Path("runs") / cfg.name

    def progress(k, steps):
        log.info("step %d / %d", k, steps)

    try:
        result = run_scenario(cfg, progress=progress)
    except ScenarioError as exc:
        print(f"scenario failed: {exc}", file=sys.stderr)
        partial = getattr(exc, "partial", None)
        if partial is not None:
            _write_outputs(partial, out, args.format, report=False)
            print(f"partial telemetry written to {out}", file=sys.stderr)
        return EXIT_FAILURE
    written = _write_outputs(result, out, args.format, report=not args.no_report)
    s = result.summary
    print(
        f"{cfg.name}: {s['frames']} frames in {result.wall_time_s:.1f} s  "
        f"pos_rms={s['pos_rms_m']:.3e} m  rw_nonuniformity={s['rw_nonuniformity_Nms']:.3e} N m s  "
        f"|L|max={s['L_norm_max_Nms']:.3e} N m s"
    )
    for p in written:
        print(f"  wrote {p}")
    return EXIT_OK


def cmd_validate(args):
    try:
        cfg = load_config(args.config, _overrides(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.show:
        sys.stdout.write(dump_config(cfg))
    else:
        print(f"ok: {cfg.name} (n={cfg.n}, m={cfg.m}, controller={cfg.controller})")
    return EXIT_OK


def cmd_presets(args):
    if args.show:
        try:
            cfg = load_config(args.show)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        sys.stdout.write(dump_config(cfg))
        return EXIT_OK
    for name, data in PRESETS.items():
        print(f"{name:<22s} {data['description']}")
    return EXIT_OK


def cmd_check(args):
    from .checks import run_suite

    results = run_suite(seed=args.seed, quick=args.quick)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_FAILURE if failed else EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="emff", description="EMFF formation-flight batch simulator")
    p.add_argument("--version", action="version", version=f"emff {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario (YAML file or preset name)")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (default runs/<name>)")
    run.add_argument("--seed", type=int)
    run.add_argument("--mode", choices=["averaged", "instantaneous"])
    run.add_argument("--duration", type=float, help="override duration [s]")
    run.add_argument("--dt", type=float, help="override control step [s]")
    run.add_argument("--telemetry-every", type=int, help="record every k-th control step")
    run.add_argument("--format", choices=["csv", "jsonl", "both"], default="both")
    run.add_argument("--no-report", action="store_true", help="skip PNG figures")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="validate a scenario without running it")
    val.add_argument("config")
    val.add_argument("--seed", type=int)
    val.add_argument("--mode", choices=["averaged", "instantaneous"])
    val.add_argument("--show", action="store_true", help="print the fully resolved config")
    val.set_defaults(func=cmd_validate)

    pre = sub.add_parser("presets", help="list built-in scenarios")
    pre.add_argument("--show", metavar="NAME", help="print a preset as YAML")
    pre.set_defaults(func=cmd_presets)

    chk = sub.add_parser("check", help="run the invariant suite on random states")
    chk.add_argument("--seed", type=int, default=0)
    chk.add_argument("--quick", action="store_true", help="smaller sample sizes")
    chk.set_defaults(func=cmd_check)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
