import argparse
import logging
import math
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np

from .. import get_app_version
from ..config import RunConfig
from ..diagnostics import (
    EnergyTrace,
    boundary_report,
    dissipation_report,
    holder_quotient,
    initial_trace_report,
    modal_reference,
    summarize_char_metrics,
    weak_residual,
)
from ..fields import SolutionBundle
from ..model import MaterialModel, validate
from ..solver.coupling import fd_crosscheck, reconcile_J, solve
from ..store.engine import prepare_run_directory
from ..store.operations import write_energy_csv, write_fields_csv, write_summary_json
from ..store.plots import plot_energy, plot_J_heatmap, plot_theta_snapshots
from .common import add_common_arguments, config_from_args, default_output_dir

logger = logging.getLogger(__name__)

# Sup error accepted against the modal or finite-difference solution
ORACLE_TOL = 5e-3


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("simulate", help="Run one simulation and write its artifacts")
    add_common_arguments(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    directory = simulate(config)
    print(directory)
    return 0


def run_pipeline(config: RunConfig) -> Tuple[SolutionBundle, EnergyTrace, Dict[str, Any]]:
    """
    Validate, solve and diagnose one configuration

    Raises:
        ConfigurationError: If the problem data fail validation
        SolverError: If a solver component fails
    """
    problem = validate(config.problem, config.grids.n_initial)
    logger.info(f"Solving {config.seed_label} in {config.mode} mode to T={config.horizon}")
    bundle = solve(problem, config)
    trace = dissipation_report(bundle, config.diagnostics.slack_rel, config.diagnostics.slack_abs)
    return bundle, trace, build_summary(bundle, config, trace)


def holder_bound(trace: EnergyTrace, model: MaterialModel) -> float:
    """
    Bound on the spatial C^{1/2} quotient of θ: |θ(x) − θ(y)| ≤ ‖θ_x‖₂|x − y|^{1/2}
    with C_L²‖θ_x‖₂² ≤ 2 max E
    """
    return math.sqrt(2.0 * max(float(np.max(trace.E)), 0.0)) / model.C_L


def build_summary(bundle: SolutionBundle, config: RunConfig, trace: EnergyTrace) -> Dict[str, Any]:
    """Headline metrics and pass/fail flags of a run"""
    grid = bundle.fields
    reconcile = reconcile_J(bundle)
    r_u, r_theta = weak_residual(bundle, config.diagnostics.test_family_size)
    char = summarize_char_metrics(bundle.char_metrics) or None
    holder = holder_quotient(grid, direction="x")
    bound = holder_bound(trace, bundle.problem.material)

    oracle = None
    if bundle.mode == "wave-only":
        sup_error = modal_reference(bundle)
        if sup_error is not None:
            oracle = {"kind": "modal", "sup_error": sup_error}
    if oracle is None and config.check_level == "full":
        oracle = {"kind": "fd", "sup_error": fd_crosscheck(bundle, config)}

    coupled = bundle.mode in ("coupled", "fd-only")
    residual_max = max((w.residual for w in bundle.windows), default=0.0)
    flags = {
        "energy_inequality": trace.passed,
        "pq_positive": None if char is None else bool(char["p_min"] > 0 and char["q_min"] > 0),
        "fixed_point": bool(residual_max < config.fixed_point.tol) if bundle.mode == "coupled" else None,
        "reconcile": bool(reconcile.l2 <= grid.dx) if coupled else None,
        "weak_residual": bool(max(r_u, r_theta) <= grid.dx) if coupled else None,
        "holder": bool(holder <= bound * (1.0 + 1e-9)),
        "oracle": None if oracle is None else bool(oracle["sup_error"] <= ORACLE_TOL),
    }
    return {
        "version": get_app_version(),
        "seed_label": config.seed_label,
        "mode": bundle.mode,
        "extension": bundle.problem.extension,
        "horizon": bundle.horizon,
        "grids": config.grids.model_dump(),
        "windows": [
            {"t0": w.t0, "t1": w.t1, "iterations": w.iterations, "residual": w.residual, "halvings": w.halvings}
            for w in bundle.windows
        ],
        "iterations_total": bundle.iterations_total,
        "fixed_point_residual_max": residual_max,
        "energy": {
            "E0": trace.E0,
            "residual_max": trace.max_residual,
            "slack": trace.slack,
            "Bpi_final": float(trace.Bpi[-1]),
        },
        "reconcile": {"l2": reconcile.l2, "sup": reconcile.sup, "bound": grid.dx},
        "boundary": boundary_report(bundle),
        "char": char,
        "holder_quotient": holder,
        "holder_bound": bound,
        "max_theta_x": float(np.max(np.abs(grid.theta_x))),
        "weak_residual": {"r_u": r_u, "r_theta": r_theta, "bound": grid.dx},
        "initial_trace": initial_trace_report(bundle),
        "oracle": oracle,
        "flags": flags,
        "pass": all(v for v in flags.values() if v is not None),
    }


def write_artifacts(directory: Path, bundle: SolutionBundle, trace: EnergyTrace, summary: Dict[str, Any]) -> Path:
    write_fields_csv(directory / "fields.csv", bundle.fields)
    write_energy_csv(directory / "energy.csv", trace)
    write_summary_json(directory / "summary.json", summary)
    plot_theta_snapshots(directory / "plots" / "theta_snapshots.svg", bundle.fields)
    plot_energy(directory / "plots" / "energy.svg", trace)
    plot_J_heatmap(directory / "plots" / "J_heatmap.svg", bundle.fields)
    return directory


def simulate(config: RunConfig, output_dir: Optional[str] = None) -> Path:
    """
    Run the configured pipeline and write fields.csv, energy.csv, summary.json and plots/

    Returns:
        The artifact directory
    """
    directory = prepare_run_directory(output_dir or default_output_dir(config))
    bundle, trace, summary = run_pipeline(config)
    write_artifacts(directory, bundle, trace, summary)
    logger.info(f"Run {config.seed_label}: pass={summary['pass']}, artifacts in {directory}")
    return directory
