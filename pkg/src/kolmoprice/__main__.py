import argparse
import dataclasses
import sys
from datetime import datetime, timezone
from typing import Any, Callable, Dict, List, Sequence, Tuple

from kolmoprice import __version__
from kolmoprice.config import CONFIG_FILENAME, DEFAULT_CONFIG, RunConfig, load_config
from kolmoprice.core import (
    COMPARE_COLUMNS,
    OVERLAP_COLUMNS,
    PRICE_COLUMNS,
    RESOURCE_COLUMNS,
    run_classical,
    run_compare,
    run_overlap,
    run_price,
    run_resources,
)
from kolmoprice.errors import NumericError, PostSelectionError
from kolmoprice.io_utils import atomic_write, format_float, sibling_csv_path, write_csv, write_json
from kolmoprice.logging_setup import get_logger, setup_logging

logger = get_logger()

Runner = Callable[[RunConfig], Tuple[Dict[str, Any], List[List[Any]]]]


def seed_value(value: str) -> int:
    try:
        ivalue = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"'{value}' is not an integer")
    if not 0 <= ivalue < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return ivalue


def cmd_init(args: argparse.Namespace) -> None:
    """Write a starter configuration."""
    try:
        with atomic_write(CONFIG_FILENAME, exclusive=True) as f:
            f.write(DEFAULT_CONFIG)
        print(f"Created {CONFIG_FILENAME}")
    except FileExistsError:
        logger.error(f"{CONFIG_FILENAME} already exists.")
        sys.exit(1)


def _load(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(getattr(args, "config", None), getattr(args, "env", None))
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(
            cfg, retrieval=dataclasses.replace(cfg.retrieval, seed=args.seed)
        )
    return cfg


def _emit(args: argparse.Namespace, cfg: RunConfig, record: Dict[str, Any], header: Sequence[str], rows: List[List[Any]]) -> None:
    out = getattr(args, "out", None) or cfg.output.path
    if not getattr(args, "deterministic", False):
        record["timestamp"] = datetime.now(timezone.utc).isoformat()
    write_json(out, record)
    csv_path = sibling_csv_path(out)
    write_csv(csv_path, header, rows)
    logger.info(f"Wrote {out} and {csv_path}")
    for row in rows:
        print(",".join(format_float(c) if isinstance(c, float) else str(c) for c in row))


def _command(runner: Runner, header: Sequence[str]) -> Callable[[argparse.Namespace], None]:
    def run(args: argparse.Namespace) -> None:
        cfg = _load(args)
        record, rows = runner(cfg)
        _emit(args, cfg, record, header, rows)

    return run


cmd_price = _command(run_price, PRICE_COLUMNS)
cmd_classical = _command(run_classical, PRICE_COLUMNS)
cmd_overlap = _command(run_overlap, OVERLAP_COLUMNS)
cmd_resources = _command(run_resources, RESOURCE_COLUMNS)
cmd_compare = _command(run_compare, COMPARE_COLUMNS)


def _add_shared_options(parser: argparse.ArgumentParser, for_subcommand: bool) -> None:
    """
    Register --env/--json-log/--verbose.

    They live on the root parser (so `kp --env exact price` works) and on every
    subparser (so `kp price --env exact` works too). Subparser copies default
    to SUPPRESS so an absent flag never overwrites a value parsed by the root
    parser.
    """
    default: Any = argparse.SUPPRESS if for_subcommand else None
    flag_default: Any = argparse.SUPPRESS if for_subcommand else False
    parser.add_argument(
        "--env", default=default, help="Configuration profile to use (e.g. exact, sampled)"
    )
    parser.add_argument(
        "--json-log",
        action="store_true",
        default=flag_default,
        help="Output logs in JSON format",
    )
    parser.add_argument(
        "--verbose",
        "-v",
        action="store_true",
        default=flag_default,
        help="Verbose logging",
    )


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help=f"Configuration file (default: {CONFIG_FILENAME})")
    parser.add_argument("--out", help="JSON output path; the CSV table is written beside it")
    parser.add_argument("--seed", type=seed_value, help="Seed for the simulated swap tests")
    parser.add_argument(
        "--deterministic",
        action="store_true",
        help="Omit the timestamp so identical runs give identical JSON",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="kolmoprice - Quantum local-volatility option pricing emulator"
    )
    parser.add_argument("--version", action="version", version=f"kolmoprice {__version__}")
    _add_shared_options(parser, for_subcommand=False)

    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    def add_command(name: str, help_text: str, func: Callable[[argparse.Namespace], None]) -> argparse.ArgumentParser:
        sub = subparsers.add_parser(name, help=help_text)
        _add_shared_options(sub, for_subcommand=True)
        if name != "init":
            _add_run_options(sub)
        sub.set_defaults(func=func)
        return sub

    add_command("init", f"Write a starter {CONFIG_FILENAME}", cmd_init)
    add_command("price", "Price the configured payoffs through the Schrödingerised pipeline", cmd_price)
    add_command("classical", "Price with the classical implicit solver and quadrature", cmd_classical)
    add_command("overlap", "Forward and backward overlap series", cmd_overlap)
    add_command("resources", "Gate, query and classical cost estimates", cmd_resources)
    add_command("compare", "Run price and classical and report the differences", cmd_compare)

    return parser


def main() -> None:
    parser = build_parser()
    args = parser.parse_args()

    # Setup logging globally
    setup_logging(
        json_format=getattr(args, "json_log", False),
        verbose=getattr(args, "verbose", False),
    )

    if hasattr(args, "func"):
        try:
            args.func(args)
        except KeyboardInterrupt:
            print("Interrupted.")
            sys.exit(130)
        except PostSelectionError as e:
            logger.error(str(e))
            logger.debug("Details:", exc_info=True)
            sys.exit(3)
        except NumericError as e:
            logger.error(str(e))
            logger.debug("Details:", exc_info=True)
            sys.exit(2)
        except (RuntimeError, ValueError) as e:
            # Configuration and domain failures: show the message, keep the
            # traceback for --verbose.
            logger.error(str(e))
            logger.debug("Details:", exc_info=True)
            sys.exit(1)
        except Exception as e:
            logger.critical(f"Unhandled error: {e}", exc_info=True)
            sys.exit(1)
    else:
        parser.print_help()


if __name__ == "__main__":
    main()
