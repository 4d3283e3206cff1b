import argparse

from .. import get_app_version
from . import simulate, sweep, verify


def build_parser() -> argparse.ArgumentParser:
    """Main parser with one subcommand per pipeline"""
    parser = argparse.ArgumentParser(
        prog="poiseuille-lc",
        description="Solver suite for Poiseuille flow of nematic liquid crystals.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {get_app_version()}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Include all subcommands
    simulate.add_parser(subparsers)
    verify.add_parser(subparsers)
    sweep.add_parser(subparsers)
    return parser
