"""Command-line entry point.

Exit codes: 0 success, 1 execution failure (a case could not run, or replay
failed), 2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigError, TraceError
from .orchestrator.campaign import plan_campaign, report_from_campaign_dir, run_campaign
from .orchestrator.config import RunMode, example_config_path, load_config
from .orchestrator.jobscripts import emit_job_script
from .orchestrator.trace import replay

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2


def _parse_batches(value: str):
    if value == "all":
        return "all"
    try:
        return [int(v) for v in value.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--batch expects an index, a comma list or 'all', got {value!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proving-ground", description="Virtual proving ground for AEB test campaigns.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a campaign")
    run.add_argument("--config", default=str(example_config_path()), help="campaign YAML (default: shipped example)")
    run.add_argument("--mode", choices=("headless", "record", "stream"), default=None)
    run.add_argument("--workers", type=int, default=None)
    run.add_argument("--batch", type=_parse_batches, default="all", help="batch index (1-based), list, or 'all'")
    run.add_argument("--out", default=None, help="output root (overrides output_dir)")
    run.add_argument("--stream-port", type=int, default=None, help="live-stream TCP port (stream mode)")

    rep = sub.add_parser("replay", help="recompute KPIs and verdict from a trace")
    rep.add_argument("--trace", required=True)
    rep.add_argument("--kpi-out", default=None, help="write the recomputed KPI CSV here")

    report = sub.add_parser("report", help="rebuild report.csv/report.txt from a campaign directory")
    report.add_argument("--campaign", required=True)

    emit = sub.add_parser("emit-script", help="print a PBS or SLURM job-array script")
    emit.add_argument("--scheduler", choices=("pbs", "slurm"), required=True)
    emit.add_argument("--config", default=str(example_config_path()))

    val = sub.add_parser("validate", help="check a config and print its resolved form")
    val.add_argument("--config", required=True)
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    overrides = {}
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        overrides["worker_count"] = args.workers
    if args.stream_port is not None:
        overrides["stream_port"] = args.stream_port
    if overrides:
        cfg = cfg.with_overrides(**overrides)
    mode = RunMode.parse(args.mode) if args.mode else cfg.mode

    def announce(address):
        print(f"streaming on {address[0]}:{address[1]}", flush=True)

    result = run_campaign(cfg, mode, args.batch, on_stream_ready=announce)
    sys.stdout.write(result.report.to_text())
    print(f"logs: {cfg.campaign_dir}")
    if result.failed_cases:
        print(f"{len(result.failed_cases)} case(s) failed to execute: {result.failed_cases}", file=sys.stderr)
    return result.exit_code


def _cmd_replay(args) -> int:
    try:
        v, kpi_text = replay(args.trace)
    except TraceError as exc:
        print(f"replay failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as exc:
        print(f"replay failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    if args.kpi_out:
        Path(args.kpi_out).write_text(kpi_text)
    sys.stdout.write(v.to_text())
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    cases, plan = plan_campaign(cfg)
    sys.stdout.write(cfg.dump())
    print(f"# {len(cases)} cases in {len(plan)} batches")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "replay":
            return _cmd_replay(args)
        if args.command == "report":
            sys.stdout.write(report_from_campaign_dir(args.campaign).to_text())
            return EXIT_OK
        if args.command == "emit-script":
            cfg = load_config(args.config)
            sys.stdout.write(emit_job_script(cfg, args.scheduler, args.config))
            return EXIT_OK
        if args.command == "validate":
            return _cmd_validate(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
