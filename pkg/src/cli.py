"""
Command-line entry point: python -m src.cli <enroll|match|evaluate|inspect|synth> ...

Exit codes: 0 success, 1 usage error, 2 data error, 3 partial failure.
"""
import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from app.commands import enroll, evaluate, inspect, match, synth
from app.config import DEFAULT_LOG_LEVEL, apply_overrides, load_config
from app.errors import ConfigError, IrisError
from app.models import UNWRAP_PRESETS

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

COMMANDS = (enroll, match, evaluate, inspect, synth)

logger = logging.getLogger(__name__)


class CliParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def common_options() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common")
    g.add_argument("--config", default=None, help="Pipeline config JSON (default $IRIS_CONFIG or configs/pipeline.json)")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--threads", type=int, default=None)
    g.add_argument("--out", default="out", help="Output directory")
    g.add_argument("--log-level", default=None, choices=("DEBUG", "INFO", "WARNING", "ERROR"))

    g = p.add_argument_group("pipeline")
    g.add_argument("--unwrap-preset", choices=sorted(UNWRAP_PRESETS), default=None)
    g.add_argument("--unwrap-rows", type=int, default=None)
    g.add_argument("--unwrap-cols", type=int, default=None)
    g.add_argument("--lambda", dest="lam", type=float, default=None, help="Tikhonov regularization weight")
    g.add_argument("--psf-variance", type=float, default=None)
    g.add_argument("--n-samples", type=int, default=None)
    g.add_argument("--bits", type=int, default=None)
    g.add_argument("--min-area", type=int, default=None)
    g.add_argument("--align", choices=("off", "shift", "shift-search"), default=None)
    g.add_argument("--max-shift", type=int, default=None)
    g.add_argument("--no-floor", dest="epsilon_floor", action="store_const", const=False, default=None,
                   help="Use the literal product of strip distances without the epsilon floor")
    return p


OVERRIDE_KEYS = ("seed", "threads", "unwrap_preset", "unwrap_rows", "unwrap_cols", "lam", "psf_variance",
                 "n_samples", "bits", "min_area", "align", "max_shift", "epsilon_floor")


def build_parser() -> CliParser:
    parser = CliParser(prog="iris", description="Visible-light iris recognition by pigment shape analysis")
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)
    parents = [common_options()]
    for command in COMMANDS:
        command.register(subparsers, parents)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    logging.basicConfig(level=args.log_level or DEFAULT_LOG_LEVEL,
                        format='[%(levelname)s] %(name)s: %(message)s')

    try:
        config = load_config(args.config)
        if getattr(args, "exclude_degraded", False):
            config = apply_overrides(config, {"admit_degraded": False})
        config = apply_overrides(config, {k: getattr(args, k, None) for k in OVERRIDE_KEYS})
    except (ValidationError, ConfigError) as e:
        logger.error("Invalid configuration: %s", e)
        return EXIT_USAGE

    try:
        return args.func(args, config)
    except IrisError as e:
        logger.error("%s", e)
        return EXIT_DATA
    except ValidationError as e:
        logger.error("Invalid arguments: %s", e)
        return EXIT_USAGE
    except ValueError as e:
        logger.error("%s", e)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
