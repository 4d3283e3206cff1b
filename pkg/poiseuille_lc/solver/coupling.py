"""
Fixed-point construction of the coupled solution

On each time window J is iterated through J ↦ M(J): march the characteristic
lattice with the current J, invert to the physical lattice, and apply the Duhamel
map. Converged windows are chained to the horizon, each starting from the state
at the previous seam.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
from scipy.integrate import trapezoid

from ..config import FixedPointConfig, RunConfig
from ..diagnostics import char_consistency
from ..errors import FixedPointDiverged, SolverError, WindowCollapsed
from ..fields import PhysGrid, SolutionBundle, WindowRecord, concatenate_grids
from ..model import InitialProfile, ValidatedProblem
from . import charwave, oracle_fd
from .heatkernel import WeightBank, WindowFields, duhamel_J, reconstruct_u

logger = logging.getLogger(__name__)

# Consecutive residual increases treated as divergence
GROWTH_LIMIT = 3


@dataclass(frozen=True)
class WindowResult:
    fields: PhysGrid
    iterations: int
    residual: float
    halvings: int
    char_metrics: Dict[str, float]
    grid: Optional[charwave.CharGrid] = None


def output_times(T: float, dt_out: float) -> np.ndarray:
    """Uniform levels 0, dt, …, T with dt ≤ dt_out"""
    n_steps = max(1, math.ceil(T / dt_out - 1e-9))
    return np.linspace(0.0, T, n_steps + 1)


def _march_and_invert(curve, problem: ValidatedProblem, config: RunConfig, x: np.ndarray, times: np.ndarray,
                      J: Optional[np.ndarray], damping: float = 1.0):
    forcing = charwave.ForcingLookup(x, times, J) if J is not None else None
    grid = charwave.march(curve, problem.material, problem.boundary, float(times[-1]), forcing, damping=damping)
    inverted = charwave.invert_map(grid, x, times, problem.material, config.diagnostics.cusp_tol)
    return grid, inverted


def _phys_x(config: RunConfig) -> np.ndarray:
    return np.linspace(0.0, math.pi, config.grids.n_phys)


def _iterate(seam: InitialProfile, curve: charwave.Gamma0Curve, problem: ValidatedProblem, config: RunConfig,
             times: np.ndarray, banks: Dict[str, WeightBank]) -> WindowResult:
    """
    Picard iteration on one window

    Raises:
        FixedPointDiverged: If the residual grows three times in a row, K_guard is
            exceeded, or max_iter passes without convergence
    """
    fp: FixedPointConfig = config.fixed_point
    model = problem.material
    u_side = problem.boundary.u_side
    x = _phys_x(config)
    t0 = float(times[0])

    seed = np.tile(np.interp(x, seam.x, seam.J), (len(times), 1))
    J = seed.copy()
    previous = math.inf
    growth = 0
    for iteration in range(1, fp.max_iter + 1):
        grid, inverted = _march_and_invert(curve, problem, config, x, times, J)
        fields = WindowFields(x, times, inverted.theta, inverted.theta_t, inverted.theta_x, J, inverted.cusp)
        J_next = duhamel_J(fields, seam, model, u_side, config.grids.duhamel_s_points, banks)
        residual = float(np.max(np.abs(J_next - J)))
        logger.debug(f"Window [{t0:.4g}, {times[-1]:.4g}] iteration {iteration}: residual {residual:.3e}")
        J = J_next

        if fp.K_guard is not None and float(np.max(np.abs(J - seed))) > fp.K_guard:
            raise FixedPointDiverged(f"iterate left the ball of radius {fp.K_guard}", module="coupling", time=t0)
        if residual < fp.tol:
            fields = WindowFields(x, times, inverted.theta, inverted.theta_t, inverted.theta_x, J, inverted.cusp)
            u = reconstruct_u(fields, seam, model, u_side, config.grids.duhamel_s_points, banks)
            phys = PhysGrid(
                x=x, t=times.copy(), theta=inverted.theta, theta_t=inverted.theta_t, theta_x=inverted.theta_x,
                u=u, J=J, cusp=inverted.cusp, wave_energy=inverted.wave_energy, theta_t_square=inverted.theta_t_square,
            )
            metrics = char_consistency(grid, model, config.diagnostics.cusp_tol).as_dict()
            return WindowResult(fields=phys, iterations=iteration, residual=residual, halvings=0, char_metrics=metrics,
                                grid=grid)

        growth = growth + 1 if residual > previous else 0
        previous = residual
        if growth >= GROWTH_LIMIT:
            raise FixedPointDiverged(f"residual grew {GROWTH_LIMIT} times in a row (last {residual:.3e})",
                                     module="coupling", time=t0)
    raise FixedPointDiverged(f"no convergence in {fp.max_iter} iterations (residual {previous:.3e})",
                             module="coupling", time=t0)


def picard_window(seam: InitialProfile, problem: ValidatedProblem, config: RunConfig, times: np.ndarray,
                  curve: Optional[charwave.Gamma0Curve] = None) -> WindowResult:
    """
    Converge J on a window, halving it on failure

    Args:
        seam: State at the window start
        problem: Validated problem
        config: Run configuration
        times: Physical levels of the requested window, starting at the seam time
        curve: Initial curve of the window; built from seam when omitted

    Returns:
        WindowResult whose levels may cover only a leading part of times

    Raises:
        FixedPointDiverged: If a single-step window still fails
        WindowCollapsed: If max_halvings is exhausted
    """
    if curve is None:
        curve, _, _ = charwave.build_initial_curve(seam, problem.material, config.grids.char_resolution)
    steps = len(times) - 1
    halvings = 0
    while True:
        window = times[: steps + 1]
        try:
            result = _iterate(seam, curve, problem, config, window, {})
        except FixedPointDiverged as e:
            if steps == 1:
                raise
            if halvings >= config.fixed_point.max_halvings:
                raise WindowCollapsed(f"{halvings} halvings exhausted: {e.message}", module="coupling", time=float(times[0])) from e
            halvings += 1
            steps = max(1, steps // 2)
            logger.warning(f"Window at t={times[0]:.4g} halved to {steps} steps: {e.message}")
            continue
        logger.info(f"Window [{window[0]:.4g}, {window[-1]:.4g}] converged in {result.iterations} iterations")
        return WindowResult(result.fields, result.iterations, result.residual, halvings, result.char_metrics, result.grid)


def extend_to_horizon(problem: ValidatedProblem, config: RunConfig, T: Optional[float] = None) -> SolutionBundle:
    """
    Chain windows from t = 0 to T

    Each window after the first starts from the level Γ_t of the previous grid at
    the seam, so w, z, p and q carry over without passing through the physical lattice.

    Raises:
        SolverError: Window failures, stamped with the seam time
    """
    T = config.horizon if T is None else T
    times = output_times(T, config.grids.output_step)
    dt = float(times[1] - times[0])
    window_steps = max(1, int(round(config.fixed_point.delta / dt)))

    seam = problem.profile
    curve = None
    start = 0
    grids: List[PhysGrid] = []
    records: List[WindowRecord] = []
    metrics: List[Dict[str, float]] = []
    while start < len(times) - 1:
        stop = min(start + window_steps, len(times) - 1)
        try:
            result = picard_window(seam, problem, config, times[start: stop + 1], curve)
        except SolverError as e:
            logger.error(f"Window starting at t={times[start]:.4g} failed: {e.describe()}")
            raise e.at_time(float(times[start]))
        covered = len(result.fields.t) - 1
        grids.append(result.fields)
        records.append(WindowRecord(float(times[start]), float(times[start + covered]), result.iterations,
                                    result.residual, result.halvings))
        metrics.append(result.char_metrics)
        seam = result.fields.profile_at(-1)
        start += covered
        if start < len(times) - 1:
            curve = charwave.carry_level(result.grid, float(result.fields.t[-1]), seam)

    return SolutionBundle(fields=concatenate_grids(grids), problem=problem, mode="coupled", windows=records,
                          char_metrics=metrics)


def solve_wave_only(problem: ValidatedProblem, config: RunConfig, T: Optional[float] = None) -> SolutionBundle:
    """
    The u-equation switched off: θ_tt + 2θ_t = c(cθ_x)_x with u ≡ 0, so J = θ_t

    One march covers the whole horizon.
    """
    T = config.horizon if T is None else T
    times = output_times(T, config.grids.output_step)
    model = problem.material
    seam = problem.profile
    curve, _, _ = charwave.build_initial_curve(seam, model, config.grids.char_resolution)
    x = _phys_x(config)
    grid, inverted = _march_and_invert(curve, problem, config, x, times, None, damping=2.0)
    zeros = np.zeros_like(inverted.theta)
    fields = PhysGrid(
        x=x, t=times, theta=inverted.theta, theta_t=inverted.theta_t, theta_x=inverted.theta_x,
        u=zeros, J=inverted.theta_t.copy(), cusp=inverted.cusp, wave_energy=inverted.wave_energy,
        theta_t_square=inverted.theta_t_square,
    )
    metrics = char_consistency(grid, model, config.diagnostics.cusp_tol).as_dict()
    window = WindowRecord(0.0, float(times[-1]), 1, 0.0, 0)
    return SolutionBundle(fields=fields, problem=problem, mode="wave-only", windows=[window], char_metrics=[metrics])


def solve_fd(problem: ValidatedProblem, config: RunConfig, T: Optional[float] = None, n: Optional[int] = None,
             couple_u: bool = True) -> SolutionBundle:
    """Bundle from the finite-difference oracle alone"""
    T = config.horizon if T is None else T
    times = output_times(T, config.grids.output_step)
    dt_out = float(times[1] - times[0])
    fields = oracle_fd.run(problem.profile, problem.material, problem.boundary, T,
                           n if n is not None else config.grids.n_fd, dt_out, config.grids.dt_fd, couple_u)
    mode = "fd-only" if couple_u else "fd-wave"
    return SolutionBundle(fields=fields, problem=problem, mode=mode, windows=[WindowRecord(0.0, T, 0, 0.0, 0)])


def solve(problem: ValidatedProblem, config: RunConfig) -> SolutionBundle:
    """Dispatch on config.mode"""
    if config.mode == "wave-only":
        return solve_wave_only(problem, config)
    if config.mode == "fd-only":
        return solve_fd(problem, config)
    return extend_to_horizon(problem, config)


def _midpoints(values: np.ndarray) -> np.ndarray:
    return 0.5 * (values[:, 1:] + values[:, :-1])


@dataclass(frozen=True)
class ReconcileReport:
    l2: float
    sup: float


def reconcile_J(bundle: SolutionBundle) -> ReconcileReport:
    """
    r = J − (u_x + θ_t) at cell midpoints, with u_x = (u_{i+1} − u_i)/dx and J, θ_t averaged

    Returns L²(Ω_T) and sup norms of r.
    """
    grid = bundle.fields
    r = _midpoints(grid.J) - _midpoints(grid.theta_t) - np.diff(grid.u, axis=1) / grid.dx
    space = np.sum(r ** 2, axis=1) * grid.dx
    l2 = math.sqrt(max(float(trapezoid(space, grid.t)), 0.0)) if grid.t.size > 1 else 0.0
    return ReconcileReport(l2=l2, sup=float(np.max(np.abs(r))))


def fd_crosscheck(bundle: SolutionBundle, config: RunConfig, refinement: int = 4) -> float:
    """
    sup |θ − θ_FD| over the common levels, with the finite-difference solution at
    refinement times the physical resolution

    Wave-only bundles are compared with the FD scheme with u switched off, all others
    with the coupled scheme.
    """
    grid = bundle.fields
    n_ref = refinement * (len(grid.x) - 1) + 1
    reference = solve_fd(bundle.problem, config, T=bundle.horizon, n=n_ref, couple_u=bundle.mode != "wave-only").fields
    levels = min(len(grid.t), len(reference.t))
    ref_theta = np.vstack([np.interp(grid.x, reference.x, reference.theta[b]) for b in range(levels)])
    worst = float(np.max(np.abs(grid.theta[:levels] - ref_theta)))
    logger.info(f"FD cross-check at n={n_ref}: sup theta difference {worst:.3e}")
    return worst
