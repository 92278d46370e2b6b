"""
Command-line entry point: run Monte Carlo experiments, check conditions, list presets
"""
import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from .config import settings
from .exceptions import ConfigError, ConsensusEstimationError
from .schemas.config import SimConfig
from .services.format_service import dumps_json
from .services.harness import check_conditions, monte_carlo
from .services.presets import list_presets
from .utils.logger import get_logger

logger = get_logger("main")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def load_config(path: Optional[str], preset: Optional[str] = None) -> SimConfig:
    """Read a JSON config; --preset replaces its scenario or stands in for a missing file"""
    if path is None:
        if preset is None:
            raise ConfigError("Give a config path or --preset")
        return SimConfig(scenario=preset)
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config {path} is not valid JSON: {e}") from e
    if preset is not None:
        raw["scenario"] = preset
    return SimConfig.model_validate(raw)


def _run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.preset)
    updates = {}
    if args.replicates is not None:
        updates["replicates"] = args.replicates
    if args.seed is not None:
        updates["master_seed"] = args.seed
    if args.check_conditions:
        updates["outputs"] = cfg.outputs.model_copy(update={"condition_reports": True})
    updates["sink"] = args.out or cfg.sink or settings.default_output_dir
    # Re-validate so CLI overrides get the same checks as file values
    cfg = SimConfig.model_validate({**cfg.model_dump(), **updates})

    metrics = monte_carlo(cfg)
    final = metrics.final_mse()
    print(f"Scenario {metrics.scenario}: K={metrics.horizon}, R={metrics.replicates}")
    print(f"Network MSE k=0: {metrics.network_mse[0]:.6g}  k={metrics.horizon}: {final['network']:.6g}")
    print(f"Results written to {cfg.sink}")
    return EXIT_OK


def _check(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.preset)
    summary = check_conditions(cfg)
    print(dumps_json(summary.model_dump(mode="json")), end="")
    return EXIT_OK


def _presets(args: argparse.Namespace) -> int:
    for name, description in list_presets().items():
        print(f"{name}: {description}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="consensus-estimation",
        description="Distributed consensus+innovation estimation over random delayed digraphs",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s run configs/remark5.json --replicates 100 --out results/remark5
  %(prog)s run --preset appendixD --replicates 10 --check-conditions
  %(prog)s check configs/appendixD-delayed.json
  %(prog)s presets

Worker processes are set with the MAX_WORKERS environment variable.
        """
    )
    subparsers = parser.add_subparsers(dest="command", help="Commands")

    run_parser = subparsers.add_parser("run", help="Run the Monte Carlo experiment and export metrics")
    run_parser.add_argument("config", nargs="?", help="Path to a JSON SimConfig")
    run_parser.add_argument("--replicates", type=int, help="Number of replicates R")
    run_parser.add_argument("--seed", type=int, help="Master seed")
    run_parser.add_argument("--out", help="Output directory")
    run_parser.add_argument("--check-conditions", action="store_true", help="Attach condition reports")
    run_parser.add_argument("--preset", help="Use a built-in scenario")
    run_parser.set_defaults(handler=_run)

    check_parser = subparsers.add_parser("check", help="Only run the condition verifiers")
    check_parser.add_argument("config", nargs="?", help="Path to a JSON SimConfig")
    check_parser.add_argument("--preset", help="Use a built-in scenario")
    check_parser.set_defaults(handler=_check)

    presets_parser = subparsers.add_parser("presets", help="List built-in scenarios")
    presets_parser.set_defaults(handler=_presets)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return EXIT_OK

    try:
        return args.handler(args)
    except (ConfigError, ValidationError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except ConsensusEstimationError as e:
        logger.error(f"Run failed: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
