"""STFNN Command Line - Main entry point.

    stfnn synth --config experiment.json
    stfnn train --config experiment.json --set train.epochs=10
    stfnn eval --config experiment.json
    stfnn infer --checkpoint model.pt --data obs.csv --lng 116.4 --lat 39.9 --time 2024-01-05T12:00
    stfnn curl-report --config experiment.json
    stfnn check --config experiment.json
    stfnn schema
"""

import argparse
import sys
from collections.abc import Callable, Sequence

import torch

from src.config.settings import get_settings
from src.handlers.commands import (
    handle_check,
    handle_curl_report,
    handle_eval,
    handle_infer,
    handle_schema,
    handle_synth,
    handle_train,
)
from src.utils.errors import CheckpointError, ConfigError, StfError
from src.utils.logger import bind_run_context, get_logger, setup_logging

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3

Handler = Callable[[argparse.Namespace], int]


def _add_config(parser: argparse.ArgumentParser, required: bool = True) -> None:
    parser.add_argument("--config", required=required, help="Experiment JSON config")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a config value, e.g. model.m_steps=4 (repeatable)",
    )


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subparser per command."""
    parser = argparse.ArgumentParser(
        prog="stfnn",
        description="Spatio-temporal field inference by integrating a learned gradient field",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    commands: dict[str, tuple[str, Handler]] = {
        "synth": ("Write a synthetic dataset and its analytic field", handle_synth),
        "train": ("Train the field model", handle_train),
        "eval": ("Run the mask-ratio sweep", handle_eval),
        "curl-report": ("Curl of the learned field over epoch checkpoints", handle_curl_report),
        "check": ("Run the invariant suite", handle_check),
    }
    for name, (help_text, handler) in commands.items():
        p = sub.add_parser(name, help=help_text)
        _add_config(p)
        p.set_defaults(handler=handler)
        if name == "eval":
            p.add_argument("--checkpoint", help="Model checkpoint (default output_dir/model.pt)")
        if name == "check":
            p.add_argument("--only", action="append", help="Run only the named check")

    infer = sub.add_parser("infer", help="Infer the field at one coordinate")
    _add_config(infer, required=False)
    infer.add_argument("--lng", type=float, required=True)
    infer.add_argument("--lat", type=float, required=True)
    infer.add_argument("--time", required=True, help="ISO-8601 timestamp")
    infer.add_argument("--checkpoint", help="Model checkpoint (default output_dir/model.pt)")
    infer.add_argument("--data", help="Observation CSV (default: the config's data section)")
    infer.add_argument("--schema", help="CsvSchema JSON for --data")
    infer.set_defaults(handler=handle_infer)

    schema = sub.add_parser("schema", help="Print the experiment config JSON schema")
    schema.set_defaults(handler=handle_schema)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    """Parse argv, dispatch to a handler and map errors to exit codes.

    Returns:
        0 on success; 1 on a failed check or runtime error; 2 on an invalid
        config or usage; 3 on a missing file or checkpoint.
    """
    settings = get_settings()
    setup_logging(settings.log_level)
    torch.set_num_threads(settings.torch_threads)

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    bind_run_context(command=args.command)
    try:
        return args.handler(args)
    except ConfigError as e:
        return _fail(EXIT_USAGE, "invalid_config", e)
    except (FileNotFoundError, CheckpointError) as e:
        return _fail(EXIT_MISSING_FILE, "missing_file", e)
    except StfError as e:
        return _fail(EXIT_FAILURE, "command_failed", e)


def _fail(code: int, event: str, error: Exception) -> int:
    logger.error(event, error=str(error), error_type=type(error).__name__)
    print(f"error: {error}", file=sys.stderr)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
