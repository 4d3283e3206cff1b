"""
Heat kernels on [0, π] by the method of images, and the Duhamel integrals built on them

With G0(r, g) = exp(−r²/(4g)) / (2√(πg)) and g = t − τ:

    Green:    G(x,t;ξ,τ) = Σ_n G0(x − ξ − 2nπ, g) − G0(x + ξ − 2nπ, g)
    Neumann:  N(x,t;ξ,τ) = Σ_n G0(x − ξ − 2nπ, g) + G0(x + ξ − 2nπ, g)

These equal (1/π) Σ_n G0(x/π, t/π²; 2n ± ξ/π, τ/π²) in the rescaled variables of the
unit period. The ξ-integrals against piecewise-linear integrands are done with exact
Gaussian moments per cell; the τ-integrals use τ = t − s² with a uniform midpoint
rule in s.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Literal, Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, simpson
from scipy.special import erf

from ..errors import NonpositiveTimeGap, WindowUnderResolved
from ..model import InitialProfile, MaterialModel

logger = logging.getLogger(__name__)

KernelKind = Literal["green", "neumann"]

DEFAULT_TAIL_TOL = 1e-12
# Fewer s-points than this cannot resolve the τ-integral
MIN_S_POINTS = 8


@dataclass(frozen=True)
class KernelEval:
    kind: KernelKind
    truncation: int
    tail_tol: float = DEFAULT_TAIL_TOL


def _check_gap(t, tau) -> np.ndarray:
    gap = np.asarray(t, dtype=float) - np.asarray(tau, dtype=float)
    if np.any(gap <= 0):
        raise NonpositiveTimeGap(f"kernel evaluated with t - tau = {float(np.min(gap)):.3e} <= 0", module="heatkernel")
    return gap


def image_truncation(gap: float, tol: float = DEFAULT_TAIL_TOL) -> int:
    """
    Number of image pairs N_img for a time gap

    The first omitted pair sits at distance at least (2N+1)π from any x − ξ in
    [−π, π]; N is the smallest count whose pair bound 2·G0((2N+1)π, gap) is
    below tol, and the result is doubled.
    """
    gap = float(gap)
    prefactor = 1.0 / math.sqrt(math.pi * gap)
    n = 0
    while prefactor * math.exp(-(((2 * n + 1) * math.pi) ** 2) / (4.0 * gap)) > tol:
        n += 1
    return 2 * max(n, 1)


def g0(x, t, xi, tau):
    """Fundamental solution of u_t = u_xx on the line"""
    gap = _check_gap(t, tau)
    r = np.asarray(x, dtype=float) - np.asarray(xi, dtype=float)
    out = np.exp(-(r ** 2) / (4.0 * gap)) / (2.0 * np.sqrt(math.pi * gap))
    return float(out) if np.ndim(out) == 0 else out


def _image_series(x, t, xi, tau, tol, reflected_sign: float, derivative: Optional[str]):
    gap = _check_gap(t, tau)
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    n_img = image_truncation(float(np.max(gap)), tol)
    total = np.zeros(np.broadcast(x, xi, gap).shape)
    norm = 1.0 / (2.0 * np.sqrt(math.pi * gap))
    for n in range(-n_img, n_img + 1):
        shift = 2.0 * n * math.pi
        r1 = x - xi - shift
        r2 = x + xi - shift
        e1 = norm * np.exp(-(r1 ** 2) / (4.0 * gap))
        e2 = norm * np.exp(-(r2 ** 2) / (4.0 * gap))
        if derivative is None:
            total = total + e1 + reflected_sign * e2
        elif derivative == "xi":
            total = total + r1 / (2.0 * gap) * e1 - reflected_sign * r2 / (2.0 * gap) * e2
        else:
            total = total - r1 / (2.0 * gap) * e1 - reflected_sign * r2 / (2.0 * gap) * e2
    return float(total) if total.ndim == 0 else total


def green(x, t, xi, tau, tol: float = DEFAULT_TAIL_TOL):
    """Dirichlet (absorbing) kernel"""
    return _image_series(x, t, xi, tau, tol, -1.0, None)


def neumann(x, t, xi, tau, tol: float = DEFAULT_TAIL_TOL):
    """Neumann (insulating) kernel"""
    return _image_series(x, t, xi, tau, tol, 1.0, None)


def dgreen_dxi(x, t, xi, tau, tol: float = DEFAULT_TAIL_TOL):
    return _image_series(x, t, xi, tau, tol, -1.0, "xi")


def dneumann_dxi(x, t, xi, tau, tol: float = DEFAULT_TAIL_TOL):
    return _image_series(x, t, xi, tau, tol, 1.0, "xi")


def dgreen_dx(x, t, xi, tau, tol: float = DEFAULT_TAIL_TOL):
    return _image_series(x, t, xi, tau, tol, -1.0, "x")


def dneumann_dx(x, t, xi, tau, tol: float = DEFAULT_TAIL_TOL):
    return _image_series(x, t, xi, tau, tol, 1.0, "x")


def kernel(kind: KernelKind, x, t, xi, tau, tol: float = DEFAULT_TAIL_TOL):
    return neumann(x, t, xi, tau, tol) if kind == "neumann" else green(x, t, xi, tau, tol)


def spectral_neumann(x, t, xi, tau, n_terms: int = 200):
    """Eigen-expansion (1/π)(1 + 2 Σ_k cos kx cos kξ e^{−k²(t−τ)})"""
    gap = _check_gap(t, tau)
    k = np.arange(1, n_terms + 1)
    x = np.asarray(x, dtype=float)[..., None]
    xi = np.asarray(xi, dtype=float)[..., None]
    series = np.sum(np.cos(k * x) * np.cos(k * xi) * np.exp(-(k ** 2) * np.asarray(gap)[..., None]), axis=-1)
    return (1.0 + 2.0 * series) / math.pi


class WeightBank:
    """
    Quadrature weights of a kernel against piecewise-linear functions

    For a fixed output grid x and node grid ξ, weights(gap) returns W with
    ∫₀^π K(x, gap; ξ) f(ξ) dξ = W @ f exactly when f is the piecewise-linear
    interpolant of its nodal values, and derivative_weights(gap) returns D with
    ∫₀^π ∂_ξK f dξ = D @ f. Results are cached per gap.
    """

    def __init__(self, x: np.ndarray, xi: np.ndarray, kind: KernelKind, tol: float = DEFAULT_TAIL_TOL):
        self.x = np.asarray(x, dtype=float)
        self.xi = np.asarray(xi, dtype=float)
        self.kind = kind
        self.tol = tol
        self._cache: Dict[float, Tuple[np.ndarray, np.ndarray]] = {}
        self._boundary_cache: Dict[Tuple[str, float], Tuple[np.ndarray, np.ndarray]] = {}

    def _build(self, gap: float) -> Tuple[np.ndarray, np.ndarray]:
        x = self.x[:, None]
        a = self.xi[None, :-1]
        b = self.xi[None, 1:]
        width = b - a
        root = 2.0 * math.sqrt(gap)
        spread = math.sqrt(gap / math.pi)
        reflected_sign = 1.0 if self.kind == "neumann" else -1.0
        n_img = image_truncation(gap, self.tol)

        m0 = np.zeros((self.x.size, self.xi.size - 1))
        m1 = np.zeros_like(m0)
        for n in range(-n_img, n_img + 1):
            shift = 2.0 * n * math.pi
            # Direct image centered at x − 2nπ, reflected one at 2nπ − x
            for center, sign in ((x - shift, 1.0), (shift - x, reflected_sign)):
                ua = (a - center) / root
                ub = (b - center) / root
                mass = 0.5 * (erf(ub) - erf(ua))
                first = center * mass - spread * (np.exp(-(ub ** 2)) - np.exp(-(ua ** 2)))
                m0 += sign * mass
                m1 += sign * first

        weights = np.zeros((self.x.size, self.xi.size))
        weights[:, :-1] += (b * m0 - m1) / width
        weights[:, 1:] += (m1 - a * m0) / width

        # −∫K f' plus the endpoint terms [K f]₀^π
        slope_weights = m0 / width
        derivative = np.zeros_like(weights)
        derivative[:, :-1] += slope_weights
        derivative[:, 1:] -= slope_weights
        g = np.full(self.x.shape, gap)
        derivative[:, -1] += _image_series(self.x, g, np.full(self.x.shape, self.xi[-1]), np.zeros(self.x.shape),
                                           self.tol, reflected_sign, None)
        derivative[:, 0] -= _image_series(self.x, g, np.full(self.x.shape, self.xi[0]), np.zeros(self.x.shape),
                                          self.tol, reflected_sign, None)
        return weights, derivative

    def _get(self, gap: float) -> Tuple[np.ndarray, np.ndarray]:
        if gap <= 0:
            raise NonpositiveTimeGap(f"weights requested for gap {gap:.3e}", module="heatkernel")
        key = round(float(gap), 15)
        if key not in self._cache:
            self._cache[key] = self._build(float(gap))
        return self._cache[key]

    def weights(self, gap: float) -> np.ndarray:
        return self._get(gap)[0]

    def derivative_weights(self, gap: float) -> np.ndarray:
        return self._get(gap)[1]

    def boundary_values(self, gap: float) -> Tuple[np.ndarray, np.ndarray]:
        """K(x; ξ=0) and K(x; ξ=π) on the output grid"""
        key = ("boundary", round(float(gap), 15))
        if key not in self._boundary_cache:
            g = np.full(self.x.shape, gap)
            zero = np.zeros(self.x.shape)
            sign = 1.0 if self.kind == "neumann" else -1.0
            left = _image_series(self.x, g, zero, zero, self.tol, sign, None)
            right = _image_series(self.x, g, np.full(self.x.shape, math.pi), zero, self.tol, sign, None)
            self._boundary_cache[key] = (left, right)
        return self._boundary_cache[key]


@dataclass(frozen=True)
class WindowFields:
    """θ-side fields and the current J on the physical levels of one window"""
    x: np.ndarray
    times: np.ndarray
    theta: np.ndarray
    theta_t: np.ndarray
    theta_x: np.ndarray
    J: np.ndarray
    cusp: Optional[np.ndarray] = None

    def at(self, name: str, tau: float) -> np.ndarray:
        """Linear interpolation in time of one field"""
        return interpolate_level(self.times, getattr(self, name), tau)


def interpolate_level(times: np.ndarray, values: np.ndarray, tau: float) -> np.ndarray:
    """Row of values at time tau, linear between the bracketing levels"""
    idx = int(np.clip(np.searchsorted(times, tau) - 1, 0, len(times) - 2))
    t_a, t_b = times[idx], times[idx + 1]
    lam = 0.0 if t_b == t_a else (tau - t_a) / (t_b - t_a)
    return (1.0 - lam) * values[idx] + lam * values[idx + 1]


class _SGrid:
    """Midpoint nodes of τ = t − s², s ∈ [0, √(t − t0)]"""

    def __init__(self, gap_total: float, n_s: int):
        ds = math.sqrt(gap_total) / n_s
        self.s = (np.arange(n_s) + 0.5) * ds
        self.gaps = self.s ** 2
        self.weights = 2.0 * self.s * ds


def _check_s_points(n_s: int):
    if n_s < MIN_S_POINTS:
        raise WindowUnderResolved(f"s-grid has {n_s} points, need at least {MIN_S_POINTS}", module="heatkernel")


def boundary_traces(fields: WindowFields, model: MaterialModel) -> Tuple[np.ndarray, np.ndarray]:
    """
    c²θ_x at x=0 and x=π per level, from one-sided second-order differences

    Levels whose boundary node carries a cusp tag reuse the nearest clean level.
    """
    theta = fields.theta
    dx = float(fields.x[1] - fields.x[0])
    left_dx = (-3.0 * theta[:, 0] + 4.0 * theta[:, 1] - theta[:, 2]) / (2.0 * dx)
    right_dx = (3.0 * theta[:, -1] - 4.0 * theta[:, -2] + theta[:, -3]) / (2.0 * dx)
    left = model.speed(theta[:, 0]) ** 2 * left_dx
    right = model.speed(theta[:, -1]) ** 2 * right_dx
    if fields.cusp is not None:
        for column, trace in ((0, left), (-1, right)):
            bad = fields.cusp[:, column]
            if np.any(bad) and not np.all(bad):
                good = np.flatnonzero(~bad)
                for level in np.flatnonzero(bad):
                    nearest = good[np.argmin(np.abs(good - level))]
                    logger.warning(f"Boundary trace at t={fields.times[level]:.4g} uses clean level t={fields.times[nearest]:.4g}")
                    trace[level] = trace[nearest]
    return left, right


def duhamel_J(
    fields: WindowFields,
    seam: InitialProfile,
    model: MaterialModel,
    u_side: str,
    n_s: int = 16,
    banks: Optional[Dict[str, WeightBank]] = None,
    tol: float = DEFAULT_TAIL_TOL,
) -> np.ndarray:
    """
    One application of the fixed-point map J ↦ M(J) on a window

    Nonslip u pairs with the Neumann kernel and five terms:
        ∫N J0 − ∬N(θ_τ + J) + ∫[N c²θ_ξ]₀^π dτ − ∬N cc′θ_ξ² − ∬∂_ξN c²θ_ξ
    Stress-free u pairs with the Green kernel and the same terms without the boundary trace.

    Args:
        fields: θ, θ_t, θ_x and the current J on the window levels
        seam: State at the window start; its J is the initial datum J0
        model: Material law
        u_side: "nonslip" or "stress_free"
        n_s: Number of midpoint nodes in s
        banks: Optional weight caches keyed "volume" and "initial"

    Returns:
        M(J) on the window levels, shape (levels, len(x))

    Raises:
        WindowUnderResolved: If n_s is below the minimum
    """
    _check_s_points(n_s)
    kind: KernelKind = "neumann" if u_side == "nonslip" else "green"
    banks = banks if banks is not None else {}
    volume_bank = banks.setdefault(f"volume-{kind}", WeightBank(fields.x, fields.x, kind, tol))
    initial_bank = banks.setdefault(f"initial-{kind}", WeightBank(fields.x, seam.x, kind, tol))

    c, cprime = model.speed_and_derivative(fields.theta)
    volume_src = -(fields.theta_t + fields.J) - c * cprime * fields.theta_x ** 2
    flux_src = c ** 2 * fields.theta_x
    if kind == "neumann":
        trace_left, trace_right = boundary_traces(fields, model)

    times = fields.times
    t0 = float(times[0])
    out = np.empty_like(fields.J)
    out[0] = np.interp(fields.x, seam.x, seam.J)
    for b in range(1, len(fields.times)):
        t_b = float(fields.times[b])
        gap_total = t_b - t0
        level = initial_bank.weights(gap_total) @ seam.J
        grid = _SGrid(gap_total, n_s)
        for gap, weight in zip(grid.gaps, grid.weights):
            tau = t_b - gap
            value = volume_bank.weights(gap) @ interpolate_level(times, volume_src, tau)
            value -= volume_bank.derivative_weights(gap) @ interpolate_level(times, flux_src, tau)
            if kind == "neumann":
                k_left, k_right = volume_bank.boundary_values(gap)
                value += k_right * np.interp(tau, times, trace_right) - k_left * np.interp(tau, times, trace_left)
            level = level + weight * value
        out[b] = level
    return out


def reconstruct_u(
    fields: WindowFields,
    seam: InitialProfile,
    model: MaterialModel,
    u_side: str,
    n_s: int = 16,
    banks: Optional[Dict[str, WeightBank]] = None,
    tol: float = DEFAULT_TAIL_TOL,
) -> np.ndarray:
    """
    Velocity on the window levels from the θ-fields

    Nonslip: u = ∫G u0 − ∬∂_ξG θ_τ.
    Stress-free: u = −(1/π)∫₀^x yθ_t dy + ∫N ũ0 + ∬N·src − ∬∂_ξN (1 − ξ/π)θ_τ with
        ũ0 = u0 + (1/π)∫₀^ξ yθ_t(y, t0) dy and
        src = (1/π)ξc²θ_ξ − (1/π)∫₀^ξ (c + yc′θ_y)cθ_y dy − (1/π)∫₀^ξ y(θ_τ + J) dy.
    Each stress-free level is shifted by a constant so that ∫u matches the seam.

    Raises:
        WindowUnderResolved: If n_s is below the minimum
    """
    _check_s_points(n_s)
    banks = banks if banks is not None else {}
    x = fields.x
    t0 = float(fields.times[0])
    out = np.empty_like(fields.theta)
    out[0] = np.interp(x, seam.x, seam.u)

    if u_side == "nonslip":
        volume_bank = banks.setdefault("volume-green", WeightBank(x, x, "green", tol))
        initial_bank = banks.setdefault("initial-green", WeightBank(x, seam.x, "green", tol))
        for b in range(1, len(fields.times)):
            t_b = float(fields.times[b])
            gap_total = t_b - t0
            level = initial_bank.weights(gap_total) @ seam.u
            grid = _SGrid(gap_total, n_s)
            for gap, weight in zip(grid.gaps, grid.weights):
                level = level - weight * (volume_bank.derivative_weights(gap) @ fields.at("theta_t", t_b - gap))
            out[b] = level
        return out

    volume_bank = banks.setdefault("volume-neumann", WeightBank(x, x, "neumann", tol))
    initial_bank = banks.setdefault("initial-neumann", WeightBank(x, seam.x, "neumann", tol))
    inv_pi = 1.0 / math.pi

    c, cprime = model.speed_and_derivative(fields.theta)
    elastic = cumulative_trapezoid((c + x * cprime * fields.theta_x) * c * fields.theta_x, x, axis=1, initial=0.0)
    forcing = cumulative_trapezoid(x * (fields.theta_t + fields.J), x, axis=1, initial=0.0)
    src = inv_pi * (x * c ** 2 * fields.theta_x - elastic - forcing)
    flux = (1.0 - x * inv_pi) * fields.theta_t
    moment = inv_pi * cumulative_trapezoid(x * fields.theta_t, x, axis=1, initial=0.0)
    u_tilde0 = seam.u + inv_pi * cumulative_trapezoid(seam.x * seam.theta_t, seam.x, initial=0.0)
    # u_t = J_x with J = 0 at both walls keeps ∫u fixed
    mass0 = float(simpson(out[0], x=x))
    drift = 0.0

    for b in range(1, len(fields.times)):
        t_b = float(fields.times[b])
        gap_total = t_b - t0
        level = initial_bank.weights(gap_total) @ u_tilde0
        grid = _SGrid(gap_total, n_s)
        for gap, weight in zip(grid.gaps, grid.weights):
            tau = t_b - gap
            value = volume_bank.weights(gap) @ interpolate_level(fields.times, src, tau)
            value -= volume_bank.derivative_weights(gap) @ interpolate_level(fields.times, flux, tau)
            level = level + weight * value
        level = level - moment[b]
        shift = (mass0 - float(simpson(level, x=x))) / math.pi
        drift = max(drift, abs(shift))
        out[b] = level + shift
    logger.debug(f"Stress-free velocity: largest mean correction {drift:.3e} on [{t0:.4g}, {fields.times[-1]:.4g}]")
    return out
