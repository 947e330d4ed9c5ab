"""
Command-line entry point.

    centrality [global flags] <command> [command flags]

Global flags may also follow the command name.
Every command reads the artifacts of earlier commands from --out-dir and
writes its own there. Exit codes: 0 success, 1 input error, 2 computation
error.
"""

import argparse
import functools
import json
import sys
from pathlib import Path
from typing import Any, NoReturn

import structlog

from common.python.log import LogLevel, configure_logging
from urban_centrality.errors import CentralityError, InputError
from urban_centrality.schemas.complexity import ComplexityMethod
from urban_centrality.schemas.config import RunConfig
from urban_centrality.schemas.pipeline import PipelineStage
from urban_centrality.stages import REGRESSION_REPORT, STAGES

log = structlog.get_logger(__name__)


class _ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with the input-error code instead of argparse's 2."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(InputError.exit_code, f"{self.prog}: error: {message}\n")


def _add_global_flags(parser: argparse.ArgumentParser, default: Any = None) -> None:
    """Flags accepted both before and after the command name."""
    parser.add_argument("--config", type=Path, default=default, help="TOML config file; flags override its values")
    parser.add_argument(
        "--out-dir", type=Path, default=default, help="directory for inputs and artifacts (default: out)"
    )
    parser.add_argument("--seed", type=int, default=default, help="random seed for synthetic data (default: 0)")
    parser.add_argument(
        "--threads", type=int, default=default, help="worker threads for distance computations (default: 1)"
    )
    parser.add_argument(
        "--exact-distances",
        action="store_true",
        default=default,
        help="sum the effective count over all shop pairs instead of a truncated neighbourhood",
    )
    parser.add_argument(
        "--log-level", choices=[str(level) for level in LogLevel], default=default, help="overrides LOG_LEVEL"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="centrality", description=__doc__.split("\n\n")[0].strip())
    _add_global_flags(parser)
    # unset flags after the command must not clobber those given before it
    global_flags = _ArgumentParser(add_help=False)
    _add_global_flags(global_flags, default=argparse.SUPPRESS)
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)
    add_command = functools.partial(commands.add_parser, parents=[global_flags])

    add_command(str(PipelineStage.CLUSTER), help="detect amenity clusters in shops.csv")

    complexity = add_command(str(PipelineStage.COMPLEXITY), help="compute ECI and PCI")
    complexity.add_argument("--method", choices=[str(m) for m in ComplexityMethod])

    market = add_command(str(PipelineStage.MARKET), help="nearest same-product market distances")
    market.add_argument(
        "--per-product",
        action="store_true",
        default=None,
        help="keep only the closest market pair of every product",
    )

    add_command(str(PipelineStage.REGRESS), help="fit the market-boundary and consumer models")

    correlate = add_command(str(PipelineStage.CORRELATE), help="correlations, tiers and contingency matrices")
    correlate.add_argument("--bins", type=int, help="rank bins of the contingency matrices (default: 10)")
    correlate.add_argument("--tiers", type=int, help="number of ECI tiers (default: 3)")

    synth = add_command(str(PipelineStage.SYNTH), help="generate a synthetic city")
    synth.add_argument("--kind", choices=["christaller", "blobs"])
    synth.add_argument("--levels", type=int, help="hierarchy levels of the Christaller city")
    synth.add_argument("--k-factor", type=int, choices=[3, 4, 7])
    synth.add_argument("--groups-per-center", type=int, help="consumer groups per center")
    synth.add_argument(
        "--constant-range",
        action="store_true",
        default=None,
        help="give every product the same consumer travel range",
    )

    add_command(str(PipelineStage.EXPORT_GEOJSON), help="write clusters.geojson")
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    """Nested RunConfig overrides for every flag that was given."""
    flat: dict[tuple[str, ...], Any] = {
        ("out_dir",): args.out_dir,
        ("seed",): args.seed,
        ("threads",): args.threads,
        ("exact_distances",): args.exact_distances,
        ("complexity", "method"): getattr(args, "method", None),
        ("per_product",): getattr(args, "per_product", None),
        ("n_bins",): getattr(args, "bins", None),
        ("n_tiers",): getattr(args, "tiers", None),
        ("synth", "kind"): getattr(args, "kind", None),
        ("synth", "christaller", "levels"): getattr(args, "levels", None),
        ("synth", "christaller", "k_factor"): getattr(args, "k_factor", None),
        ("synth", "groups_per_center"): getattr(args, "groups_per_center", None),
    }
    if getattr(args, "constant_range", None):
        flat[("synth", "range_profile", "slope_km")] = 0.0
    overrides: dict[str, Any] = {}
    for path, value in flat.items():
        if value is None:
            continue
        node = overrides
        for key in path[:-1]:
            node = node.setdefault(key, {})
        node[path[-1]] = value
    return overrides


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(log_level=args.log_level)
    stage = PipelineStage(args.command)
    structlog.contextvars.clear_contextvars()
    structlog.contextvars.bind_contextvars(command=str(stage))
    try:
        config = RunConfig.load(args.config, _overrides(args))
        summary = STAGES[stage](config)
    except CentralityError as e:
        log.error("command failed", error=str(e))
        print(f"centrality {stage}: {e}", file=sys.stderr)
        return e.exit_code

    if stage is PipelineStage.REGRESS:
        print((config.out_dir / REGRESSION_REPORT).read_text(encoding="utf-8"), end="")
    print(json.dumps(summary.model_dump(mode="json"), indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
