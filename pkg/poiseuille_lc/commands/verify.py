import argparse
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np
from scipy.special import roots_legendre

from ..config import RunConfig
from ..diagnostics import EnergyTrace
from ..fields import SolutionBundle
from ..model import MaterialModel, validate, wave_speed
from ..solver import charwave, heatkernel
from ..solver.coupling import reconcile_J
from ..solver.oracle_fd import check_cfl
from .common import add_common_arguments, config_from_args
from .simulate import run_pipeline

logger = logging.getLogger(__name__)

MASS_TOL = 1e-8
GREEN_BOUNDARY_TOL = 1e-10
IDENTITY_TOL = 1e-8
SEMIGROUP_TOL = 1e-6
REFLECTION_TOL = 1e-10
CROSSCHECK_TOL = 5e-3


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("verify", help="Run the invariant suite and print a pass/fail table")
    add_common_arguments(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    results = verify(config)
    for result in results:
        print(f"{result.name:<20} {'PASS' if result.passed else 'FAIL':<5} {result.detail}")
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"First failing check: {failed[0].name}")
        return 1
    return 0


def _gauss_legendre(n: int = 512):
    nodes, weights = roots_legendre(n)
    return 0.5 * math.pi * (nodes + 1.0), 0.5 * math.pi * weights


def check_kernel_mass() -> CheckResult:
    """∫N dξ = 1 with exact moments for all gaps, and with Gauss–Legendre where resolved"""
    x = np.linspace(0.0, math.pi, 33)
    xi = np.linspace(0.0, math.pi, 257)
    nodes, weights = _gauss_legendre()
    worst = 0.0
    for gap in np.geomspace(1e-4, 10.0, 6):
        bank = heatkernel.WeightBank(x, xi, "neumann")
        worst = max(worst, float(np.max(np.abs(bank.weights(gap).sum(axis=1) - 1.0))))
        if gap >= 1e-2:
            values = heatkernel.neumann(x[:, None], gap, nodes[None, :], 0.0)
            worst = max(worst, float(np.max(np.abs(values @ weights - 1.0))))
    return CheckResult("kernel_mass", worst <= MASS_TOL, f"max error {worst:.2e}")


def check_green_boundary(rng: np.random.Generator) -> CheckResult:
    xi = rng.uniform(0.0, math.pi, 50)
    worst = 0.0
    for gap in np.geomspace(1e-3, 10.0, 5):
        for end in (0.0, math.pi):
            worst = max(worst, float(np.max(np.abs(heatkernel.green(end, gap, xi, 0.0)))))
    return CheckResult("green_boundary", worst <= GREEN_BOUNDARY_TOL, f"max |G| {worst:.2e}")


def check_kernel_identity(rng: np.random.Generator) -> CheckResult:
    """∂G/∂x = −∂N/∂ξ at random interior arguments"""
    x = rng.uniform(0.05, math.pi - 0.05, 100)
    xi = rng.uniform(0.05, math.pi - 0.05, 100)
    gap = rng.uniform(1e-2, 2.0, 100)
    residual = heatkernel.dgreen_dx(x, gap, xi, 0.0) + heatkernel.dneumann_dxi(x, gap, xi, 0.0)
    worst = float(np.max(np.abs(residual)))
    return CheckResult("kernel_identity", worst <= IDENTITY_TOL, f"max residual {worst:.2e}")


def check_chapman_kolmogorov() -> CheckResult:
    nodes, weights = _gauss_legendre()
    x = np.linspace(0.0, math.pi, 9)
    xi = np.linspace(0.1, math.pi - 0.1, 7)
    t, s = 0.6, 0.3
    first = heatkernel.neumann(x[:, None], t, nodes[None, :], s)
    second = heatkernel.neumann(nodes[:, None], s, xi[None, :], 0.0)
    composed = first @ (weights[:, None] * second)
    direct = heatkernel.neumann(x[:, None], t, xi[None, :], 0.0)
    worst = float(np.max(np.abs(composed - direct)))
    return CheckResult("chapman_kolmogorov", worst <= SEMIGROUP_TOL, f"max error {worst:.2e}")


def check_reflection_L0(rng: np.random.Generator) -> CheckResult:
    w = rng.uniform(-math.pi + 0.01, math.pi - 0.01, 100)
    p = rng.uniform(0.1, 5.0, 100)
    z, q = charwave.apply_boundary_L0(w, p)
    worst = float(max(np.max(np.abs(w + z)), np.max(np.abs(p - q))))
    return CheckResult("reflection_L0", worst <= REFLECTION_TOL, f"max residual {worst:.2e}")


def check_reflection_Lpi(rng: np.random.Generator, model: MaterialModel) -> CheckResult:
    """The closure at x = π reproduces ιθ + θ_x = 0 and preserves dx along Lπ"""
    z = rng.uniform(-2.5, 2.5, 100)
    q = rng.uniform(0.1, 5.0, 100)
    theta = rng.uniform(-0.5, 0.5, 100)
    worst = 0.0
    for iota in (0.0, 0.5, 2.0):
        w, p = charwave.apply_boundary_Lpi(z, q, theta, iota, model)
        c, _ = wave_speed(theta, model)
        law = np.tan(0.5 * w) - np.tan(0.5 * z) + 2.0 * iota * c * theta
        weights = p * np.cos(0.5 * w) ** 2 - q * np.cos(0.5 * z) ** 2
        worst = max(worst, float(np.max(np.abs(law))), float(np.max(np.abs(weights))))
    return CheckResult("reflection_Lpi", worst <= REFLECTION_TOL, f"max residual {worst:.2e}")


def check_compatibility(config: RunConfig) -> CheckResult:
    """Raises CompatibilityViolation on failure, which ends the suite with exit code 2"""
    problem = validate(config.problem, config.grids.n_initial)
    return CheckResult("compatibility", True, f"{len(problem.warnings)} warnings")


def check_cfl_config(config: RunConfig) -> CheckResult:
    """Raises CFLViolation on a requested dt_fd beyond the limit"""
    dx = math.pi / (config.grids.n_fd - 1)
    model = config.problem.material
    if config.grids.dt_fd is not None:
        check_cfl(config.grids.dt_fd, dx, model)
    return CheckResult("cfl", True, f"limit {0.9 * dx / model.C_U:.4g}")


def check_energy(trace: EnergyTrace) -> CheckResult:
    return CheckResult("energy_inequality", trace.passed, f"max residual {trace.max_residual:.2e}, slack {trace.slack:.2e}")


def check_pq(bundle: SolutionBundle) -> CheckResult:
    if not bundle.char_metrics:
        return CheckResult("pq_positive", True, "no characteristic grid")
    p_min = min(m["p_min"] for m in bundle.char_metrics)
    q_min = min(m["q_min"] for m in bundle.char_metrics)
    return CheckResult("pq_positive", p_min > 0 and q_min > 0, f"min p {p_min:.3g}, min q {q_min:.3g}")


def check_reconcile(bundle: SolutionBundle) -> CheckResult:
    """L² residual of J − (u_x + θ_t) against the physical spacing"""
    report = reconcile_J(bundle)
    bound = bundle.fields.dx
    return CheckResult("reconcile_J", report.l2 <= bound, f"L2 {report.l2:.2e} (bound {bound:.2e}), sup {report.sup:.2e}")


def check_oracle(summary: Dict[str, Any]) -> CheckResult:
    """θ against the modal solution, or the FD oracle at four times the physical resolution"""
    oracle = summary["oracle"]
    if oracle is None:
        return CheckResult("oracle_crosscheck", True, "no reference for this run")
    worst = oracle["sup_error"]
    return CheckResult("oracle_crosscheck", worst <= CROSSCHECK_TOL, f"{oracle['kind']} sup theta difference {worst:.2e}")


def check_weak_residual(summary: Dict[str, Any]) -> CheckResult:
    r = summary["weak_residual"]
    worst = max(r["r_u"], r["r_theta"])
    return CheckResult("weak_residual", worst <= r["bound"], f"max functional {worst:.2e} (bound {r['bound']:.2e})")


def check_holder(summary: Dict[str, Any]) -> CheckResult:
    quotient, bound = summary["holder_quotient"], summary["holder_bound"]
    return CheckResult("holder", bool(summary["flags"]["holder"]), f"quotient {quotient:.3g} (bound {bound:.3g})")


def verify(config: RunConfig, rng: Optional[np.random.Generator] = None) -> List[CheckResult]:
    """
    Run the invariant suite

    Raises:
        ConfigurationError: If the data violate compatibility
        SolverError: If a solver fails or the FD step violates CFL
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    model = config.problem.material
    results: List[CheckResult] = [
        check_kernel_mass(),
        check_green_boundary(rng),
        check_kernel_identity(rng),
        check_chapman_kolmogorov(),
        check_reflection_L0(rng),
        check_reflection_Lpi(rng, model),
        check_compatibility(config),
        check_cfl_config(config),
    ]
    bundle, trace, summary = run_pipeline(config)
    results.append(check_energy(trace))
    results.append(check_pq(bundle))
    results.append(check_holder(summary))
    if bundle.mode in ("coupled", "fd-only"):
        results.append(check_reconcile(bundle))
        results.append(check_weak_residual(summary))
    if config.check_level == "full":
        results.append(check_oracle(summary))
    for result in results:
        logger.debug(f"{result.name}: {'pass' if result.passed else 'fail'} ({result.detail})")
    return results
