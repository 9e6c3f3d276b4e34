"""Command-line entry point for the perception-to-speech pipeline."""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import logging
import signal
import sys
import threading

from .pipeline import InitializationError, SchemaViolation, load_config, run

LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scenespeak",
        description="Sample camera frames on a fixed cadence and speak what they show.",
    )
    parser.add_argument("--config", required=True, help="pipeline config file (JSON)")
    parser.add_argument(
        "--source",
        default="synthetic",
        help="frame source: a directory of numbered images, or 'synthetic'",
    )
    parser.add_argument(
        "--mock-detector",
        metavar="SCRIPT",
        help="detection script file; overrides any configured detector backend",
    )
    parser.add_argument(
        "--dry-run",
        action="store_true",
        help="print normalized utterances to stdout instead of calling TTS",
    )
    parser.add_argument(
        "--log-level", choices=sorted(LOG_LEVELS), default="warn", help="logging verbosity"
    )
    parser.add_argument("--metrics-out", metavar="PATH", help="write per-cycle metrics JSON lines here")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=LOG_LEVELS[args.log_level], format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )
    try:
        config = load_config(args.config)
    except (FileNotFoundError, SchemaViolation) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    if args.mock_detector is not None:
        config = dataclasses.replace(
            config,
            perception=dataclasses.replace(
                config.perception, mock_script_path=args.mock_detector, backend_url=None
            ),
        )
    if args.dry_run:
        config = dataclasses.replace(config, tts=dataclasses.replace(config.tts, dry_run=True))

    shutdown = threading.Event()
    signal.signal(signal.SIGINT, lambda *_: shutdown.set())
    signal.signal(signal.SIGTERM, lambda *_: shutdown.set())

    with contextlib.ExitStack() as stack:
        metrics_out = None
        if args.metrics_out is not None:
            metrics_out = stack.enter_context(open(args.metrics_out, "w", encoding="utf-8"))
        try:
            return run(config, shutdown=shutdown, source=args.source, metrics_out=metrics_out)
        except InitializationError as exc:
            print(f"initialization error: {exc}", file=sys.stderr)
            return 1


if __name__ == "__main__":
    raise SystemExit(main())
