import argparse
from typing import Optional

from ..config import RunConfig, load_run_config, validate_run_config


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    """Flags shared by every subcommand"""
    parser.add_argument("--config", type=str, default=None, help="Path to the JSON run configuration")
    parser.add_argument("--out", type=str, default=None, help="Artifact directory (overrides output_dir)")
    parser.add_argument("--mode", choices=["coupled", "wave-only", "fd-only"], default=None, help="Solver pipeline")
    parser.add_argument("--check-level", choices=["fast", "full"], default=None, help="Depth of the verification checks")
    parser.add_argument("--log-level", type=str, default=None, help="Logging level (default from POISEUILLE_LC_LOG_LEVEL or info)")


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """
    Load the configuration named by --config (defaults otherwise) with flag overrides

    Raises:
        ConfigurationError: If the file cannot be read or does not validate
    """
    overrides = {"output_dir": args.out, "mode": args.mode, "check_level": args.check_level}
    if args.config:
        return load_run_config(args.config, overrides)
    return validate_run_config({k: v for k, v in overrides.items() if v is not None})


def default_output_dir(config: RunConfig, fallback: Optional[str] = None) -> str:
    return config.output_dir or fallback or f"runs/{config.seed_label}"
