"""
Checkable quantities of a run: energy and dissipation, weak-form residuals,
Hölder quotients, characteristic-grid consistency and boundary/initial traces
"""
import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, simpson, trapezoid

from .fields import PhysGrid, SolutionBundle
from .model import BoundarySpec, InitialData, MaterialModel, TrigSeriesPreset, ConstantPreset
from .solver.charwave import CUSP_TOL, DATA, CharGrid, position_rhs, theta_t_dissipation

logger = logging.getLogger(__name__)

DEFAULT_SLACK_REL = 1e-6
DEFAULT_SLACK_ABS = 1e-8


@dataclass(frozen=True)
class EnergyTrace:
    """E(t), boundary energies, cumulative dissipation and E(t) + D(t) − E(0)"""
    times: np.ndarray
    E: np.ndarray
    B0: np.ndarray
    Bpi: np.ndarray
    D: np.ndarray
    residual: np.ndarray
    slack: float

    @property
    def E0(self) -> float:
        return float(self.E[0])

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residual))

    @property
    def violations(self) -> np.ndarray:
        """Output times at which the residual exceeds the slack"""
        return self.times[self.residual > self.slack]

    @property
    def passed(self) -> bool:
        return self.violations.size == 0


def _boundary_energies(grid: PhysGrid, index, boundary: BoundarySpec, model: MaterialModel):
    theta_left = grid.theta[index, 0]
    theta_right = grid.theta[index, -1]
    b0 = 0.0 if boundary.left_dirichlet else boundary.kappa_left * model.boundary_integral(theta_left)
    bpi = 0.0 if boundary.right_dirichlet else boundary.iota * model.boundary_integral(theta_right)
    return np.broadcast_to(np.asarray(b0, dtype=float), np.shape(theta_left)), np.broadcast_to(np.asarray(bpi, dtype=float), np.shape(theta_right))


def _energy_levels(grid: PhysGrid, boundary: BoundarySpec, model: MaterialModel):
    c = model.speed(grid.theta)
    if grid.wave_energy is not None:
        wave = grid.wave_energy
    else:
        wave = simpson(grid.theta_t ** 2 + (c * grid.theta_x) ** 2, x=grid.x, axis=1)
    kinetic = simpson(grid.u ** 2, x=grid.x, axis=1)
    b0, bpi = _boundary_energies(grid, slice(None), boundary, model)
    return 0.5 * (wave + kinetic) + b0 + bpi, b0, bpi


def energy(bundle: SolutionBundle, t: float) -> Tuple[float, float, float]:
    """
    (E, B0, Bπ) at the stored level closest to t

    E = ½∫(θ_t² + c²θ_x² + u²)dx + B0 + Bπ with B0 = κ0∫₀^θ(0) c²s ds and
    Bπ = ι∫₀^θ(π) c²s ds; a B term is zero on a Dirichlet end.
    """
    grid = bundle.fields
    index = grid.level_index(t)
    E, b0, bpi = _energy_levels(grid, bundle.problem.boundary, bundle.problem.material)
    return float(E[index]), float(b0[index]), float(bpi[index])


def dissipation_report(
    bundle: SolutionBundle,
    slack_rel: float = DEFAULT_SLACK_REL,
    slack_abs: float = DEFAULT_SLACK_ABS,
) -> EnergyTrace:
    """
    Energy trace with D(t) = ∫₀^t∫₀^π (J² + θ_t²) and the dissipation residual

    ∫θ_t² dx is taken from the characteristic level curves when the grid carries it,
    since θ_t on the physical lattice is one-sided next to cusps.
    """
    grid = bundle.fields
    E, b0, bpi = _energy_levels(grid, bundle.problem.boundary, bundle.problem.material)
    if grid.theta_t_square is not None:
        theta_t_sq = grid.theta_t_square
    else:
        theta_t_sq = simpson(grid.theta_t ** 2, x=grid.x, axis=1)
    rate = simpson(grid.J ** 2, x=grid.x, axis=1) + theta_t_sq
    D = cumulative_trapezoid(rate, grid.t, initial=0.0)
    residual = E + D - E[0]
    slack = max(slack_rel * float(E[0]), slack_abs)
    trace = EnergyTrace(times=grid.t.copy(), E=E, B0=np.asarray(b0), Bpi=np.asarray(bpi), D=D, residual=residual, slack=slack)
    for t in trace.violations:
        logger.warning(f"Energy inequality exceeds slack {slack:.3e} at t={t:.4g}")
    return trace


def _bump(t: np.ndarray, T: float) -> Tuple[np.ndarray, np.ndarray]:
    """exp(−1/(s(1−s))) on s = t/T and its t-derivative; zero with all derivatives at the ends"""
    s = np.asarray(t, dtype=float) / T
    inside = (s > 0) & (s < 1)
    safe = np.where(inside, s, 0.5)
    value = np.where(inside, np.exp(-1.0 / (safe * (1.0 - safe))), 0.0)
    slope = np.where(inside, value * (1.0 - 2.0 * safe) / (safe * (1.0 - safe)) ** 2 / T, 0.0)
    return value, slope


def _space_time_integral(values: np.ndarray, grid: PhysGrid) -> float:
    return float(trapezoid(simpson(values, x=grid.x, axis=1), grid.t))


def weak_residual(bundle: SolutionBundle, test_family_size: int = 3) -> Tuple[float, float]:
    """
    Largest weak-form functional over m² test functions

    u-equation: ∬ uψ_t − Jψ_x, ψ = sin(kx)·b_j(t) (cos(kx) when stress-free).
    θ-equation: ∬ θ_tφ_t − (cφ)_x cθ_x − θ_tφ − Jφ, φ = sin(kx)·b_j(t).
    b_j are smooth bumps on nested subintervals (0, T_j) of the run.
    """
    grid = bundle.fields
    model = bundle.problem.material
    nonslip = bundle.problem.boundary.nonslip
    x = grid.x
    c, cprime = model.speed_and_derivative(grid.theta)
    T = float(grid.t[-1] - grid.t[0])
    if T <= 0:
        return 0.0, 0.0
    local_t = grid.t - grid.t[0]

    r_u = 0.0
    r_theta = 0.0
    for j in range(test_family_size):
        span = T * (j + 1) / test_family_size
        b, b_t = _bump(local_t, span)
        b, b_t = b[:, None], b_t[:, None]
        for k in range(1, test_family_size + 1):
            if nonslip:
                psi_x, psi = k * np.cos(k * x), np.sin(k * x)
            else:
                psi_x, psi = -k * np.sin(k * x), np.cos(k * x)
            functional = _space_time_integral(grid.u * psi[None, :] * b_t - grid.J * psi_x[None, :] * b, grid)
            r_u = max(r_u, abs(functional))

            phi, phi_x = np.sin(k * x)[None, :], k * np.cos(k * x)[None, :]
            cphi_x = (cprime * grid.theta_x * phi + c * phi_x) * b
            integrand = grid.theta_t * phi * b_t - cphi_x * c * grid.theta_x - (grid.theta_t + grid.J) * phi * b
            r_theta = max(r_theta, abs(_space_time_integral(integrand, grid)))
    return r_u, r_theta


def holder_quotient(grid: PhysGrid, exponent: float = 0.5, min_separation: int = 2, direction: str = "both") -> float:
    """
    sup |Δθ| / |Δ|^exponent over pairs at the same t (varying x) and the same x (varying t)

    Separations are sampled geometrically from min_separation cells upward.
    direction restricts the pairs to "x" or "t".
    """
    theta = grid.theta
    best = 0.0
    axes = {"x": ((1, grid.x),), "t": ((0, grid.t),), "both": ((1, grid.x), (0, grid.t))}[direction]
    for axis, coords in axes:
        n = theta.shape[axis]
        sep = min_separation
        while sep < n:
            diff = np.abs(np.take(theta, np.arange(sep, n), axis=axis) - np.take(theta, np.arange(n - sep), axis=axis))
            dist = np.abs(coords[sep:] - coords[:-sep])
            shape = (1, -1) if axis == 1 else (-1, 1)
            with np.errstate(divide="ignore", invalid="ignore"):
                quotient = diff / dist.reshape(shape) ** exponent
            if quotient.size:
                best = max(best, float(np.nanmax(quotient)))
            sep *= 2
    return best


@dataclass(frozen=True)
class CharMetrics:
    x_mismatch: float
    t_mismatch: float
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    degenerate_cells: int
    cusp_cells: int
    reflections: int
    dissipation: float
    # max |θ_x| = |R − S|/(2c) over nodes away from cusps
    theta_x_max: float

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


def char_consistency(grid: CharGrid, model: MaterialModel, cusp_tol: float = CUSP_TOL) -> CharMetrics:
    """
    Compatibility of the position equations on a marched grid

    For every lattice cell the integrals of x and t along the two edge paths from its
    south-west to its north-east corner must agree; the mismatch is their difference
    divided by h, which is O(h²) on smooth data.
    """
    valid = grid.valid()
    xX, xY, tX, tY = position_rhs(grid.w, grid.z, grid.p, grid.q, grid.theta, model)
    usable = valid & (grid.node_class != DATA)
    h = grid.h
    ncols = grid.theta.shape[1]
    x_worst = 0.0
    t_worst = 0.0
    for r in range(grid.n_rows - 2):
        parity = (grid.n_start + r) % 2
        ks = 2 * np.arange(ncols) + parity
        ks = ks[(ks >= 1) & (ks <= grid.resolution - 1)]
        if ks.size == 0:
            continue
        sw = (r, ks // 2)
        se = (r + 1, (ks + 1) // 2)
        nw = (r + 1, (ks - 1) // 2)
        ne = (r + 2, ks // 2)
        ok = usable[sw] & usable[se] & usable[nw] & usable[ne]
        if not np.any(ok):
            continue
        for fX, fY, which in ((xX, xY, "x"), (tX, tY, "t")):
            via_se = 0.5 * h * (fX[sw] + fX[se]) + 0.5 * h * (fY[se] + fY[ne])
            via_nw = 0.5 * h * (fY[sw] + fY[nw]) + 0.5 * h * (fX[nw] + fX[ne])
            gap = float(np.max(np.abs(via_se - via_nw)[ok])) / h
            if which == "x":
                x_worst = max(x_worst, gap)
            else:
                t_worst = max(t_worst, gap)

    p = grid.p[valid]
    q = grid.q[valid]
    cw2 = 0.5 * (1.0 + np.cos(grid.w[valid]))
    cz2 = 0.5 * (1.0 + np.cos(grid.z[valid]))
    jacobian = p * q * cw2 * cz2
    t_end = float(np.nanmax(grid.t))
    smooth = valid & ~grid.cusp_mask(cusp_tol)
    c = model.speed(grid.theta[smooth])
    theta_x = np.abs(np.tan(0.5 * grid.w[smooth]) - np.tan(0.5 * grid.z[smooth])) / (2.0 * c)
    return CharMetrics(
        x_mismatch=x_worst,
        t_mismatch=t_worst,
        p_min=float(p.min()),
        p_max=float(p.max()),
        q_min=float(q.min()),
        q_max=float(q.max()),
        degenerate_cells=int(np.sum(jacobian < 1e-12)),
        cusp_cells=int(np.sum(grid.cusp_mask(cusp_tol))),
        reflections=grid.reflections(),
        dissipation=theta_t_dissipation(grid, model, t_end),
        theta_x_max=float(theta_x.max()) if theta_x.size else 0.0,
    )


def _l2_in_time(values: np.ndarray, t: np.ndarray) -> float:
    if t.size < 2:
        return 0.0
    return math.sqrt(float(trapezoid(values ** 2, t)))


def boundary_report(bundle: SolutionBundle) -> Dict[str, float]:
    """L²(0, T) norms of the active boundary traces"""
    grid = bundle.fields
    boundary = bundle.problem.boundary
    report: Dict[str, float] = {}
    if boundary.left_dirichlet:
        report["theta_left"] = _l2_in_time(grid.theta[:, 0], grid.t)
    else:
        report["robin_left"] = _l2_in_time(-boundary.kappa_left * grid.theta[:, 0] + grid.theta_x[:, 0], grid.t)
    if boundary.right_dirichlet:
        report["theta_right"] = _l2_in_time(grid.theta[:, -1], grid.t)
    else:
        report["robin_right"] = _l2_in_time(boundary.iota * grid.theta[:, -1] + grid.theta_x[:, -1], grid.t)
    if boundary.nonslip:
        report["u_left"] = _l2_in_time(grid.u[:, 0], grid.t)
        report["u_right"] = _l2_in_time(grid.u[:, -1], grid.t)
    else:
        report["J_left"] = _l2_in_time(grid.J[:, 0], grid.t)
        report["J_right"] = _l2_in_time(grid.J[:, -1], grid.t)
    return report


def initial_trace_report(bundle: SolutionBundle) -> Dict[str, float]:
    """L¹ distances of θ_t and θ at the first output time after 0 from θ1 and θ0"""
    grid = bundle.fields
    if grid.t.size < 2:
        return {"theta_t_l1": 0.0, "theta_l1": 0.0}
    initial = bundle.problem.spec.initial
    theta1 = initial.theta1.value_at(grid.x)
    theta0 = initial.theta0.value_at(grid.x)
    return {
        "theta_t_l1": float(simpson(np.abs(grid.theta_t[1] - theta1), x=grid.x)),
        "theta_l1": float(simpson(np.abs(grid.theta[1] - theta0), x=grid.x)),
    }


def _quarter_wave_modes(preset) -> Optional[Dict[float, float]]:
    """Amplitudes of sin((k + ½)x) in a preset, or None if it is not such a series"""
    if isinstance(preset, ConstantPreset):
        return {} if preset.value == 0 else None
    if not isinstance(preset, TrigSeriesPreset) or preset.offset != 0 or any(a != 0 for a in preset.cosine):
        return None
    modes: Dict[float, float] = {}
    for j, amplitude in enumerate(preset.sine, start=1):
        if amplitude == 0:
            continue
        wavenumber = j * preset.frequency
        if abs((wavenumber - 0.5) - round(wavenumber - 0.5)) > 1e-12 or wavenumber < 0:
            return None
        modes[wavenumber] = modes.get(wavenumber, 0.0) + amplitude
    return modes


@dataclass(frozen=True)
class ModalOracle:
    """
    Exact solution of θ_tt + 2θ_t = c²θ_xx, θ(0) = 0, θ_x(π) = 0 for data in sin((k + ½)x)

    Each mode a(t) solves a'' + 2a' + c²λ²a = 0 with λ = k + ½.
    """
    speed: float
    theta0: Dict[float, float]
    theta1: Dict[float, float]

    @classmethod
    def from_problem(cls, initial: InitialData, model: MaterialModel, boundary: BoundarySpec) -> Optional["ModalOracle"]:
        """None unless the speed is constant, θ(0) = 0, θ_x(π) = 0 and the data are quarter-wave series"""
        if not (model.is_constant_speed and boundary.left_dirichlet and not boundary.right_dirichlet and boundary.iota == 0):
            return None
        theta0 = _quarter_wave_modes(initial.theta0)
        theta1 = _quarter_wave_modes(initial.theta1)
        if theta0 is None or theta1 is None:
            return None
        return cls(speed=model.C_L, theta0=theta0, theta1=theta1)

    def amplitude(self, lam: float, t: np.ndarray) -> np.ndarray:
        a0 = self.theta0.get(lam, 0.0)
        a1 = self.theta1.get(lam, 0.0)
        t = np.asarray(t, dtype=float)
        disc = 1.0 - (self.speed * lam) ** 2
        if abs(disc) < 1e-14:
            return (a0 + (a1 + a0) * t) * np.exp(-t)
        if disc > 0:
            root = math.sqrt(disc)
            fast, slow = -1.0 - root, -1.0 + root
            c_slow = (a1 - fast * a0) / (slow - fast)
            return c_slow * np.exp(slow * t) + (a0 - c_slow) * np.exp(fast * t)
        omega = math.sqrt(-disc)
        return np.exp(-t) * (a0 * np.cos(omega * t) + (a1 + a0) / omega * np.sin(omega * t))

    def __call__(self, x: np.ndarray, t: np.ndarray) -> np.ndarray:
        """θ on the lattice t × x"""
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        out = np.zeros((t.size, x.size))
        for lam in sorted(set(self.theta0) | set(self.theta1)):
            out += self.amplitude(lam, t)[:, None] * np.sin(lam * x)[None, :]
        return out


def modal_reference(bundle: SolutionBundle) -> Optional[float]:
    """Sup error of θ against the modal solution, or None where it does not apply"""
    problem = bundle.problem
    oracle = ModalOracle.from_problem(problem.spec.initial, problem.material, problem.boundary)
    if oracle is None:
        return None
    grid = bundle.fields
    return float(np.max(np.abs(grid.theta - oracle(grid.x, grid.t))))


def summarize_char_metrics(metrics: List[Dict[str, float]]) -> Dict[str, float]:
    """Worst case of the per-window grid metrics"""
    if not metrics:
        return {}
    return {
        "p_min": min(m["p_min"] for m in metrics),
        "p_max": max(m["p_max"] for m in metrics),
        "q_min": min(m["q_min"] for m in metrics),
        "q_max": max(m["q_max"] for m in metrics),
        "cusp_cells": sum(m["cusp_cells"] for m in metrics),
        "degenerate_cells": sum(m["degenerate_cells"] for m in metrics),
        "x_mismatch": max(m["x_mismatch"] for m in metrics),
        "t_mismatch": max(m["t_mismatch"] for m in metrics),
        "reflections": max(m["reflections"] for m in metrics),
        "theta_x_max": max(m["theta_x_max"] for m in metrics),
    }
