import argparse
import asyncio
import itertools
import json
import logging
import os
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Tuple

from ..config import RunConfig, apply_override, validate_run_config
from ..errors import ConfigurationError, PoiseuilleError
from ..runs import RunRegistry
from ..store.engine import prepare_run_directory
from ..store.operations import write_index_csv
from .common import add_common_arguments, config_from_args, default_output_dir
from .simulate import simulate

logger = logging.getLogger(__name__)

THREADS_ENV = "POISEUILLE_LC_THREADS"
HEADLINE_COLUMNS = ("pass", "energy_residual_max", "fixed_point_residual_max", "Bpi_final", "max_theta_x", "reconcile_l2")


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("sweep", help="Run the cross product of parameter ranges")
    add_common_arguments(parser)
    parser.add_argument("--ranges", type=str, required=True,
                        help='JSON object (or file) of dotted config paths to value lists, e.g. {"problem.boundary.theta_right": [[0, 1], [1, 1]]}')
    parser.set_defaults(handler=run)


def parse_ranges(text: str) -> Dict[str, List[Any]]:
    """
    Raises:
        ConfigurationError: If the ranges are not a JSON object of non-empty lists
    """
    try:
        source = Path(text).read_text(encoding="utf-8") if os.path.isfile(text) else text
        ranges = json.loads(source)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"cannot parse --ranges: {e}", module="sweep") from e
    if not isinstance(ranges, dict) or not all(isinstance(v, list) and v for v in ranges.values()):
        raise ConfigurationError("--ranges must map dotted paths to non-empty lists", module="sweep")
    return ranges


def worker_count() -> int:
    """Worker cap from POISEUILLE_LC_THREADS, at least 1"""
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        logger.warning(f"Ignoring non-integer {THREADS_ENV}={os.environ.get(THREADS_ENV)!r}")
        return 1


def execute_run(raw_config: Dict[str, Any], output_dir: str) -> Dict[str, Any]:
    """
    Run one sweep member; failures are returned, not raised

    Returns:
        Dictionary with status, headline metrics and error message
    """
    try:
        config = validate_run_config({**raw_config, "output_dir": output_dir})
        directory = simulate(config, output_dir)
        with open(directory / "summary.json", "r", encoding="utf-8") as handle:
            summary = json.load(handle)
    except PoiseuilleError as e:
        return {"status": "failed", "metrics": {}, "error": e.describe()}
    metrics = {
        "pass": summary["pass"],
        "energy_residual_max": summary["energy"]["residual_max"],
        "fixed_point_residual_max": summary["fixed_point_residual_max"],
        "Bpi_final": summary["energy"]["Bpi_final"],
        "max_theta_x": summary["max_theta_x"],
        "reconcile_l2": summary["reconcile"]["l2"],
    }
    return {"status": "done", "metrics": metrics, "error": None}


def expand_runs(raw: Dict[str, Any], ranges: Dict[str, List[Any]]) -> List[Tuple[Dict[str, Any], Dict[str, Any]]]:
    """(parameter tuple, raw config) per member of the cross product, keys in sorted order"""
    keys = sorted(ranges)
    members = []
    for combo in itertools.product(*(ranges[k] for k in keys)):
        params = dict(zip(keys, combo))
        member = raw
        for key, value in params.items():
            member = apply_override(member, key, value)
        members.append((params, member))
    return members


async def run_sweep(raw: Dict[str, Any], ranges: Dict[str, List[Any]], base_dir: str, workers: int = 1) -> RunRegistry:
    """
    Run every member of the cross product and write index.csv

    More than one worker uses a process pool; otherwise runs are serialized on one thread.
    """
    registry = RunRegistry()
    prepare_run_directory(base_dir)
    jobs = []
    for params, member in expand_runs(raw, ranges):
        run_id = registry.register(params, base_dir)
        jobs.append((run_id, member))

    loop = asyncio.get_running_loop()
    executor: Executor = ProcessPoolExecutor(max_workers=workers) if workers > 1 else ThreadPoolExecutor(max_workers=1)

    async def launch(run_id: str, member: Dict[str, Any]):
        registry.update_status(run_id, "running")
        outcome = await loop.run_in_executor(executor, execute_run, member, registry.get_run(run_id)["output_dir"])
        registry.update_status(run_id, outcome["status"], outcome["metrics"], outcome["error"])
        if outcome["error"]:
            logger.warning(f"Sweep run {run_id} failed: {outcome['error']}")
        else:
            logger.info(f"Sweep run {run_id} done")

    try:
        await asyncio.gather(*(launch(run_id, member) for run_id, member in jobs))
    finally:
        executor.shutdown(wait=True)

    columns = ["run_id", "status", *sorted(ranges), "output_dir", *HEADLINE_COLUMNS, "error"]
    write_index_csv(Path(base_dir) / "index.csv", registry.index_rows(), columns)
    return registry


def run(args: argparse.Namespace) -> int:
    config: RunConfig = config_from_args(args)
    ranges = parse_ranges(args.ranges)
    raw = config.model_dump(mode="json")
    base_dir = default_output_dir(config, args.out)
    registry = asyncio.run(run_sweep(raw, ranges, base_dir, worker_count()))
    failed = [run_id for run_id, status in registry.list_runs().items() if status == "failed"]
    if failed:
        logger.warning(f"{len(failed)} of {len(registry.runs)} sweep runs failed")
    print(Path(base_dir) / "index.csv")
    return 0
