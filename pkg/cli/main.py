import argparse
import logging
import os
import sys
from logging.handlers import RotatingFileHandler
from typing import List, Optional, Sequence

from dotenv import load_dotenv

from INGESTION.config import apply_overrides, load_config
from .commands import cmd_analyze, cmd_convert, cmd_normalize, cmd_run, cmd_train

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_FAILED = 2

CONFIG_COMMANDS = {
    "train": cmd_train,
    "normalize": cmd_normalize,
    "convert": cmd_convert,
    "run": cmd_run,
}


def setup_logging(level: str = "INFO", log_file: Optional[str] = None) -> None:
    """Configure the root logger once: stderr always, plus a rotating file when `log_file` is set."""
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        os.makedirs(os.path.dirname(os.path.abspath(log_file)), exist_ok=True)
        handlers.append(RotatingFileHandler(log_file, maxBytes=10485760, backupCount=5))  # 10MB per file, 5 files max
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="snn-coding",
        description="Train, convert and evaluate spiking networks under rate, phase and burst coding",
    )
    parser.add_argument("--log-level", default=None, help="Logging level (default: SNN_LOG_LEVEL or INFO)")
    parser.add_argument("--log-file", default=None, help="Also log to this rotating file (default: SNN_LOG_FILE)")
    parser.add_argument("--quiet", action="store_true", help="Disable progress bars")
    subparsers = parser.add_subparsers(dest="command", required=True)

    helps = {
        "train": "Train the configured DNN on the training split",
        "normalize": "Normalize the trained DNN's activations for conversion",
        "convert": "Convert the normalized DNN and describe the spiking network",
        "run": "Simulate the spiking network and write metrics CSVs",
    }
    for name, text in helps.items():
        sub = subparsers.add_parser(name, help=text)
        sub.add_argument("--config", required=True, help="Experiment config JSON file")
        sub.add_argument("--seed", type=int, default=None, help="Override the config seed")
        sub.add_argument("--out", default=None, help="Override the output directory")
        sub.add_argument("--workers", type=int, default=None, help="Worker processes (default: SNN_WORKERS or config)")
        sub.add_argument("--percentile", type=float, default=None, help="Override the normalization percentile")
        sub.add_argument("--subset", type=int, default=None, help="Override the evaluation subset size")

    analyze = subparsers.add_parser("analyze", help="Join completed runs into comparison.csv")
    analyze.add_argument("runs", nargs="+", help="Run directories")
    analyze.add_argument("--baseline", required=True, help="Name of the baseline run")
    analyze.add_argument("--out", default=".", help="Directory for comparison.csv")
    return parser


def run_command(args: argparse.Namespace) -> None:
    progress = not args.quiet and sys.stderr.isatty()
    if args.command == "analyze":
        cmd_analyze(args.runs, args.baseline, args.out)
        return

    workers = args.workers
    if workers is None and os.getenv("SNN_WORKERS"):
        workers = int(os.getenv("SNN_WORKERS"))
    config = apply_overrides(
        load_config(args.config),
        seed=args.seed,
        out=args.out,
        workers=workers,
        percentile=args.percentile,
        subset=args.subset,
    )
    CONFIG_COMMANDS[args.command](config, progress=progress)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Command-line entry point.

    Returns 0 on success, 1 for invalid input (bad arguments, ValueError, FileNotFoundError)
    and 2 for runtime failures (RuntimeError, other OSError).
    """
    load_dotenv()
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # argparse has already printed usage or help
        return EXIT_OK if e.code in (0, None) else EXIT_INVALID
    setup_logging(
        args.log_level or os.getenv("SNN_LOG_LEVEL", "INFO"),
        args.log_file or os.getenv("SNN_LOG_FILE"),
    )

    try:
        run_command(args)
    except (ValueError, FileNotFoundError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_INVALID
    except (RuntimeError, OSError) as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        return EXIT_FAILED
    return EXIT_OK
