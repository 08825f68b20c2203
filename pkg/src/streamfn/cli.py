"""Command line: ``streamfn serve`` and ``streamfn bench``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import signal
import sys
import threading

from .bench import (
    DEFAULT_COLD_START_S,
    MODES,
    ModeConfig,
    PlatformTarget,
    RunInvalidError,
    WorkloadSpec,
    canonical_mode,
    run_mode,
    write_report,
)
from .client import AddressError, parse_address
from .control import DeploymentError, load_deployment, serve

log = logging.getLogger("streamfn")


def _address(text: str) -> str:
    try:
        parse_address(text, allow_any_port=True)
    except AddressError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def _mode(text: str) -> str:
    if text == "all":
        return text
    try:
        return canonical_mode(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def cmd_serve(args: argparse.Namespace) -> int:
    try:
        dep = load_deployment(args.config)
        overrides = {}
        if args.listen:
            overrides["listen"] = args.listen
        if args.stats_listen:
            overrides["stats_listen"] = args.stats_listen
        dep = dataclasses.replace(dep, **overrides)
    except (OSError, DeploymentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    platform = serve(dep)
    print(f"listening on {platform.address}, stats on {platform.stats_address}", flush=True)
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    stop.wait()
    log.info("shutting down")
    platform.close()
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    modes = list(MODES) if "all" in args.mode else list(dict.fromkeys(args.mode))
    target = None
    if args.platform:
        if not args.stats:
            print("error: --platform needs --stats (the platform's stats address)", file=sys.stderr)
            return 2
        target = PlatformTarget(args.platform, args.stats)
    reports = []
    failed = 0
    for duration in args.duration:
        spec = WorkloadSpec(
            fps=args.fps,
            width=args.width,
            height=args.height,
            distinct_frames=args.distinct_frames,
            duration_s=duration,
            rng_seed=args.seed,
        )
        for name in modes:
            mode = ModeConfig(name, args.cold_start, args.faas_overhead)
            log.info("running %s for %g s", mode.mode, duration)
            try:
                rep = run_mode(mode, spec, target, isolation=args.isolation)
            except RunInvalidError as exc:
                print(f"FAILED {mode.mode} {duration:g}s: {exc}", file=sys.stderr)
                failed += 1
                continue
            reports.append(rep)
            print(
                f"{rep.mode:16s} L={duration:>5g}s theta={rep.theta:.4f} "
                f"overhead={rep.overhead_s * 1e3:10.2f} ms frames={rep.frames_processed}",
                flush=True,
            )
    if reports:
        path = write_report(reports, args.out)
        print(f"wrote {path}")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="streamfn", description=__doc__)
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the control plane for a deployment file")
    p.add_argument("--config", required=True, help="JSON deployment file")
    p.add_argument("--listen", type=_address, help="override the producer listen address")
    p.add_argument("--stats-listen", type=_address, help="override the stats endpoint address")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("bench", help="run the cold-start benchmark")
    p.add_argument(
        "--mode", type=_mode, nargs="+", default=["stream_fn"],
        help="stream_fn|faas|batch|engine (or 'all'); several may be given",
    )
    p.add_argument("--duration", type=float, nargs="+", default=[10.0], help="stream length(s) in seconds")
    p.add_argument("--fps", type=float, default=10.0)
    p.add_argument("--width", type=int, default=160)
    p.add_argument("--height", type=int, default=120)
    p.add_argument("--distinct-frames", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cold-start", type=float, default=DEFAULT_COLD_START_S,
                   help="injected cold start for the engine emulation, seconds")
    p.add_argument("--faas-overhead", type=float, default=0.0,
                   help="extra per-invocation cost for the FaaS emulation, seconds")
    p.add_argument("--platform", type=_address, help="use a running platform instead of a private one")
    p.add_argument("--stats", type=_address, help="stats address of --platform")
    p.add_argument("--isolation", choices=("in-process", "child-process"), default="child-process",
                   help="instance hosting for the private platform")
    p.add_argument("--out", default="report.csv")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper(), logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
