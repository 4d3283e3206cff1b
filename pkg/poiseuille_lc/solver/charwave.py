"""
Characteristic-coordinate solver for the forced damped variational wave equation

    θ_tt + γθ_t = c(θ)(c(θ)θ_x)_x − J

In coordinates (X, Y) constant along backward / forward characteristics, with
w = 2 arctan R, z = 2 arctan S and weights p, q, the equation becomes a semilinear
system with bounded right-hand sides. The domain is bounded by the initial curve
Γ0, the line L0 (Y = X, x = 0) and the line Lπ (Y = X − X̃, x = π).

Lattice layout: a node (X, Y) = (ih, jh) is addressed by the diagonal n = i + j and the
offset k = i − j ∈ [0, M], so that X − Y = kh and X + Y = nh. Only k ≡ n (mod 2)
occurs, and each diagonal is stored in a row of M//2 + 1 columns at m = k // 2. The
west neighbor (X − h, Y) is (n − 1, k − 1) and the south neighbor (X, Y − h) is
(n − 1, k + 1), both on the previous row.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_simpson, cumulative_trapezoid, simpson
from scipy.interpolate import PchipInterpolator

from ..errors import CuspAtRobinBoundary, HorizonNotReached, LookupMiss, NonpositivePQ, QuadratureFailure
from ..model import (
    BoundarySpec,
    InitialProfile,
    MaterialModel,
    RiemannState,
    compress,
    decompress,
    fields_from_riemann,
    riemann_from_fields,
    wrap_angle,
)

logger = logging.getLogger(__name__)

# |w| or |z| above π − CUSP_TOL counts as a cusp
CUSP_TOL = 1e-6
INNER_SWEEPS = 2

# Node classes
OUTSIDE, DATA, INTERIOR, ON_L0, ON_LPI = 0, 1, 2, 3, 4


class CurvePoint(NamedTuple):
    """State at points of Γ0"""
    x: np.ndarray
    theta: np.ndarray
    w: np.ndarray
    z: np.ndarray
    p: np.ndarray
    q: np.ndarray


@dataclass(frozen=True)
class Gamma0Curve:
    """
    Initial curve Γ0 as parametric tables over an increasing parameter s

    A curve built from tabulated data uses s = x with X(x) = ∫₀^x (1 + R0²),
    Y(x) = −∫₀^x (1 + S0²), θ̄ = θ0, w̄ = 2 arctan R0, z̄ = 2 arctan S0 and p̄ = q̄ = 1.
    A curve carried over from a marched grid is the level set Γ_t of that grid with
    s = X − Y, and keeps the grid's w, z, p and q.
    """
    s: np.ndarray
    x: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    theta: np.ndarray
    w: np.ndarray
    z: np.ndarray
    p: np.ndarray
    q: np.ndarray
    Xhat: float
    Xtil: float
    h: float
    resolution: int
    time: float
    profile: InitialProfile
    carried: bool = False
    _interpolants: Dict[str, PchipInterpolator] = field(default_factory=dict, compare=False, repr=False)

    @property
    def offset(self) -> np.ndarray:
        """X − Y along the curve, strictly increasing from 0 to X̃"""
        return self.X - self.Y

    @property
    def level(self) -> np.ndarray:
        """X + Y along the curve"""
        return self.X + self.Y

    def phi(self, X) -> np.ndarray:
        """Y = φ(X) for X ∈ [0, X̂]"""
        return np.interp(X, self.X, self.Y)

    def _pchip(self, name: str) -> PchipInterpolator:
        if name not in self._interpolants:
            if self.carried:
                values = {"x": self.x, "theta": self.theta, "w": np.unwrap(self.w), "z": np.unwrap(self.z),
                          "p": self.p, "q": self.q}[name]
                self._interpolants[name] = PchipInterpolator(self.s, values)
            else:
                profile = self.profile
                self._interpolants[name] = PchipInterpolator(profile.x, getattr(profile, name))
        return self._interpolants[name]

    def points(self, s: np.ndarray, model: MaterialModel) -> CurvePoint:
        """State at parameter values s, by monotone cubic interpolation of the tables"""
        s = np.clip(np.asarray(s, dtype=float), self.s[0], self.s[-1])
        if self.carried:
            return CurvePoint(
                x=np.clip(self._pchip("x")(s), 0.0, math.pi),
                theta=self._pchip("theta")(s),
                w=wrap_angle(self._pchip("w")(s)),
                z=wrap_angle(self._pchip("z")(s)),
                p=self._pchip("p")(s),
                q=self._pchip("q")(s),
            )
        theta = self._pchip("theta")(s)
        R, S = riemann_from_fields(self._pchip("theta_t")(s), self._pchip("theta_x")(s), theta, model)
        w, z = compress(R, S)
        ones = np.ones_like(s)
        return CurvePoint(x=s, theta=theta, w=np.asarray(w), z=np.asarray(z), p=ones, q=ones)

    def at_offset(self, d: np.ndarray, model: MaterialModel):
        """
        Curve point with X − Y = d

        Returns:
            Tuple (x, X + Y, θ, w, z) at the requested offsets
        """
        s = np.interp(d, self.offset, self.s)
        level = np.interp(d, self.offset, self.level)
        point = self.points(s, model)
        return point.x, level, point.theta, point.w, point.z

    def below(self, X: np.ndarray, model: MaterialModel) -> Tuple[np.ndarray, CurvePoint]:
        """Curve points with the given X (clamped to [0, X̂]) and their Y"""
        s = np.interp(X, self.X, self.s)
        return np.interp(s, self.s, self.Y), self.points(s, model)

    def west_of(self, Y: np.ndarray, model: MaterialModel) -> Tuple[np.ndarray, CurvePoint]:
        """Curve points with the given Y (clamped to [X̂ − X̃, 0]) and their X"""
        s = np.interp(-np.asarray(Y, dtype=float), -self.Y, self.s)
        return np.interp(s, self.s, self.X), self.points(s, model)

    def wave_energy(self, model: MaterialModel) -> float:
        """∫ (θ_t² + c²θ_x²) dx on the curve"""
        if self.carried:
            return line_integrals(self.X, self.Y, self.w, self.z, self.p, self.q)[0]
        return profile_wave_integral(self.profile, model)

    def theta_t_square(self) -> float:
        """∫ θ_t² dx on the curve"""
        if self.carried:
            return line_integrals(self.X, self.Y, self.w, self.z, self.p, self.q)[1]
        return float(simpson(self.profile.theta_t ** 2, x=self.profile.x))


def build_initial_curve(profile: InitialProfile, model: MaterialModel, resolution: int) -> Tuple[Gamma0Curve, float, float]:
    """
    Map the initial line t = t0 to the curve Γ0 of the (X, Y) plane

    Args:
        profile: State at the window start on a uniform x grid
        model: Material law
        resolution: Number of lattice cells across X̃; h = X̃ / resolution

    Returns:
        Tuple (curve, X̂, X̃)

    Raises:
        QuadratureFailure: If the data are not finite or the tables fail to be monotone
    """
    x = profile.x
    R0, S0 = riemann_from_fields(profile.theta_t, profile.theta_x, profile.theta, model)
    if not (np.all(np.isfinite(R0)) and np.all(np.isfinite(S0))):
        raise QuadratureFailure("initial Riemann data are not finite", module="charwave", time=profile.time)

    forward = 1.0 + R0 ** 2
    backward = 1.0 + S0 ** 2
    X = cumulative_simpson(forward, x=x, initial=0.0)
    Ybar = cumulative_simpson(backward, x=x, initial=0.0)
    if np.any(np.diff(X) <= 0) or np.any(np.diff(Ybar) <= 0):
        logger.warning("Simpson tables not monotone; falling back to the trapezoidal rule")
        X = cumulative_trapezoid(forward, x=x, initial=0.0)
        Ybar = cumulative_trapezoid(backward, x=x, initial=0.0)
    Xhat = float(simpson(forward, x=x))
    Xtil = Xhat + float(simpson(backward, x=x))
    # Pin the table ends to the Simpson totals
    X = X * (Xhat / X[-1])
    Ybar = Ybar * ((Xtil - Xhat) / Ybar[-1])
    if not (math.isfinite(Xhat) and math.isfinite(Xtil)):
        raise QuadratureFailure("X-hat or X-tilde is not finite", module="charwave", time=profile.time)

    w, z = compress(R0, S0)
    ones = np.ones_like(x)
    curve = Gamma0Curve(
        s=x, x=x, X=X, Y=-Ybar, theta=profile.theta.copy(), w=np.asarray(w), z=np.asarray(z), p=ones, q=ones,
        Xhat=Xhat, Xtil=Xtil, h=Xtil / resolution, resolution=resolution,
        time=profile.time, profile=profile,
    )
    logger.debug(f"Initial curve at t={profile.time:.4g}: Xhat={Xhat:.6g}, Xtil={Xtil:.6g}, h={curve.h:.3e}")
    return curve, Xhat, Xtil


def carry_level(grid: "CharGrid", t_star: float, profile: InitialProfile) -> Gamma0Curve:
    """
    Γ_t of a marched grid as the initial curve of the next window

    The level keeps w, z, p and q of the grid, so gradients that steepened or
    reached a cusp cross the seam unchanged. Coordinates are shifted so that the
    curve starts at X = Y = 0; offsets stay k·h, so the lattice spacing is kept.

    Args:
        grid: Grid marched past t_star
        t_star: Seam time
        profile: Physical state at the seam, used for output at t_star

    Raises:
        LookupMiss: If the grid does not reach t_star
    """
    level = trace_level(grid, t_star)
    base = float(level.X[0])
    X = level.X - base
    Y = level.Y - base
    offset = X - Y
    curve = Gamma0Curve(
        s=offset, x=level.x.copy(), X=X, Y=Y, theta=level.theta.copy(), w=level.w.copy(), z=level.z.copy(),
        p=level.p.copy(), q=level.q.copy(), Xhat=float(X[-1]), Xtil=float(offset[-1]), h=grid.h,
        resolution=grid.resolution, time=float(t_star), profile=profile, carried=True,
    )
    logger.debug(f"Carried level t={t_star:.4g}: p in [{curve.p.min():.3g}, {curve.p.max():.3g}], "
                 f"q in [{curve.q.min():.3g}, {curve.q.max():.3g}]")
    return curve


class SemilinearRHS(NamedTuple):
    theta_X: np.ndarray
    theta_Y: np.ndarray
    w_Y: np.ndarray
    z_X: np.ndarray
    p_Y: np.ndarray
    q_X: np.ndarray


def rhs_semilinear(state: RiemannState, theta, J_local, model: MaterialModel, damping: float = 1.0) -> SemilinearRHS:
    """
    Right-hand sides of the semilinear system in (X, Y)

    damping is γ in θ_tt + γθ_t = c(cθ_x)_x − J; the coupled model uses γ = 1.
    Every term is bounded for |w|, |z| ≤ π, and the only division is by c ≥ C_L.
    """
    w, z, p, q = state.w, state.z, state.p, state.q
    c, cprime = model.speed_and_derivative(theta)
    sin_w, sin_z = np.sin(w), np.sin(z)
    cos_w, cos_z = np.cos(w), np.cos(z)
    cw2, cz2 = 0.5 * (1.0 + cos_w), 0.5 * (1.0 + cos_z)
    sw2, sz2 = 0.5 * (1.0 - cos_w), 0.5 * (1.0 - cos_z)
    ratio = cprime / c
    damped = damping * (sin_w * cz2 + sin_z * cw2)
    forcing = 4.0 * J_local * cw2 * cz2

    theta_X = sin_w * p / (4.0 * c)
    theta_Y = sin_z * q / (4.0 * c)
    w_Y = q / (4.0 * c) * (ratio * (cz2 - cw2) - damped - forcing)
    z_X = p / (4.0 * c) * (ratio * (cw2 - cz2) - damped - forcing)
    pq = p * q / (2.0 * c)
    p_Y = pq * (0.25 * ratio * (sin_z - sin_w) - damping * (0.25 * sin_w * sin_z + sw2 * cz2) - J_local * sin_w * cz2)
    q_X = pq * (0.25 * ratio * (sin_w - sin_z) - damping * (0.25 * sin_w * sin_z + sz2 * cw2) - J_local * sin_z * cw2)
    return SemilinearRHS(theta_X, theta_Y, w_Y, z_X, p_Y, q_X)


def position_rhs(w, z, p, q, theta, model: MaterialModel):
    """(x_X, x_Y, t_X, t_Y)"""
    c = model.speed(theta)
    cw2 = 0.5 * (1.0 + np.cos(w))
    cz2 = 0.5 * (1.0 + np.cos(z))
    return 0.5 * cw2 * p, -0.5 * cz2 * q, 0.5 * cw2 * p / c, 0.5 * cz2 * q / c


def apply_boundary_L0(z_in, q_in):
    """
    Reflection law w + z = 0, p = q on x = 0

    The law is symmetric, so the same call maps an incoming (w, p) to the outgoing (z, q).
    """
    w_out = -np.asarray(z_in, dtype=float)
    w_out = wrap_angle(w_out)
    p_out = np.asarray(q_in, dtype=float)
    if np.ndim(w_out) == 0:
        return float(w_out), float(p_out)
    return w_out, p_out


def _robin_reflection(incoming, weight, shift, cusp_tol: float, time: Optional[float]):
    """
    tan(out/2) = tan(in/2) − shift, weight·(1 + tan²(out/2))/(1 + tan²(in/2))

    Raises:
        CuspAtRobinBoundary: If an incoming cusp meets a nonzero shift
    """
    incoming = np.asarray(incoming, dtype=float)
    shift = np.broadcast_to(np.asarray(shift, dtype=float), incoming.shape)
    cusp = np.abs(incoming) > math.pi - cusp_tol
    if np.any(cusp & (shift != 0)):
        raise CuspAtRobinBoundary("cusp reached a Robin boundary with nonzero coupling", module="charwave", time=time)
    safe = np.where(cusp, 0.0, incoming)
    tan_in = np.tan(0.5 * safe)
    tan_out = tan_in - shift
    outgoing = np.where(cusp, incoming, 2.0 * np.arctan(tan_out))
    out_weight = np.where(cusp, weight, weight * (1.0 + tan_out ** 2) / (1.0 + tan_in ** 2))
    return outgoing, out_weight


def apply_boundary_Lpi(z, q, theta, iota: float, model: MaterialModel, cusp_tol: float = CUSP_TOL, time: Optional[float] = None):
    """
    Closure on x = π for the Robin law ιθ + θ_x = 0

    w = 2 arctan(tan(z/2) − 2ιc(θ)θ), p = q·(1 + (tan(z/2) − 2ιcθ)²)/(1 + tan²(z/2)).
    With ι = 0 the closure is the identity, including at a cusp.

    Raises:
        CuspAtRobinBoundary: If z = π and ι > 0
    """
    z = np.asarray(z, dtype=float)
    if iota > 0 and np.any(np.abs(z) > math.pi - cusp_tol):
        raise CuspAtRobinBoundary(f"cusp reached x=pi with iota={iota}", module="charwave", time=time)
    shift = 2.0 * iota * model.speed(theta) * np.asarray(theta, dtype=float)
    w, p = _robin_reflection(z, q, shift, cusp_tol, time)
    if np.ndim(w) == 0:
        return float(w), float(p)
    return w, p


class ForcingLookup:
    """Bilinear interpolation of J on a physical lattice, clamped to its bounding box"""

    def __init__(self, x: Optional[np.ndarray] = None, times: Optional[np.ndarray] = None, values: Optional[np.ndarray] = None):
        self.x = x
        self.times = times
        self.values = values

    @property
    def is_zero(self) -> bool:
        return self.values is None

    def __call__(self, xq, tq) -> np.ndarray:
        xq = np.asarray(xq, dtype=float)
        if self.values is None:
            return np.zeros_like(xq)
        x, times, values = self.x, self.times, self.values
        xc = np.clip(xq, x[0], x[-1])
        tc = np.clip(np.asarray(tq, dtype=float), times[0], times[-1])
        dx = x[1] - x[0]
        ix = np.clip(np.floor((xc - x[0]) / dx).astype(int), 0, len(x) - 2)
        fx = (xc - x[ix]) / dx
        if len(times) == 1:
            row = values[0]
            return (1.0 - fx) * row[ix] + fx * row[ix + 1]
        it = np.clip(np.searchsorted(times, tc, side="right") - 1, 0, len(times) - 2)
        span = times[it + 1] - times[it]
        ft = np.where(span > 0, (tc - times[it]) / np.where(span > 0, span, 1.0), 0.0)
        low = (1.0 - fx) * values[it, ix] + fx * values[it, ix + 1]
        high = (1.0 - fx) * values[it + 1, ix] + fx * values[it + 1, ix + 1]
        return (1.0 - ft) * low + ft * high


@dataclass
class CharGrid:
    """
    Marched lattice over the characteristic plane

    Arrays have shape (diagonals, M//2 + 1); row r holds diagonal n = n_start + r.
    Entries outside the domain are NaN and have node class OUTSIDE.
    """
    h: float
    Xhat: float
    Xtil: float
    resolution: int
    n_start: int
    t0: float
    damping: float
    curve: Gamma0Curve
    theta: np.ndarray
    w: np.ndarray
    z: np.ndarray
    p: np.ndarray
    q: np.ndarray
    x: np.ndarray
    t: np.ndarray
    J: np.ndarray
    node_class: np.ndarray
    cusp_events: int = 0

    @property
    def n_rows(self) -> int:
        return self.theta.shape[0]

    def offsets(self) -> np.ndarray:
        """k of every stored entry, same shape as the fields"""
        rows = np.arange(self.n_rows)[:, None]
        parity = (self.n_start + rows) % 2
        return 2 * np.arange(self.theta.shape[1])[None, :] + parity

    def diagonals(self) -> np.ndarray:
        return np.broadcast_to((self.n_start + np.arange(self.n_rows))[:, None], self.theta.shape)

    def coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        """(X, Y) of every stored entry"""
        n = self.diagonals()
        k = self.offsets()
        return 0.5 * (n + k) * self.h, 0.5 * (n - k) * self.h

    def valid(self) -> np.ndarray:
        return self.node_class != OUTSIDE

    def tile_index(self) -> np.ndarray:
        """
        Region label Ωⁿ per node, −1 outside

        With breakpoints 0, X̂, X̃, X̂ + X̃, 2X̃, … and a(v) the interval index of v
        (−1 below 0), the label is a(X) when a(X) = a(Y) and a(Y) + 1 otherwise.
        """
        X, Y = self.coordinates()
        top = float(np.nanmax(np.where(self.valid(), X, np.nan))) + self.Xtil
        breaks = [0.0]
        k = 0
        while breaks[-1] < top:
            breaks.append(self.Xhat + k * self.Xtil)
            breaks.append((k + 1) * self.Xtil)
            k += 1
        breaks = np.asarray(breaks)
        tol = 1e-9 * self.h
        aX = np.searchsorted(breaks, X - tol, side="left") - 1
        aY = np.searchsorted(breaks, Y - tol, side="left") - 1
        label = np.where(aX == aY, aX, aY + 1)
        return np.where(self.valid(), label, -1)

    def reflections(self) -> int:
        labels = self.tile_index()
        return int(labels.max()) if labels.size else 0

    def cusp_mask(self, tol: float = CUSP_TOL) -> np.ndarray:
        valid = self.valid()
        with np.errstate(invalid="ignore"):
            return valid & ((np.abs(self.w) > math.pi - tol) | (np.abs(self.z) > math.pi - tol))


def _domain_start(curve: Gamma0Curve, model: MaterialModel):
    """First diagonal n_lo(k) inside the domain, and the curve data per offset"""
    M = curve.resolution
    h = curve.h
    ks = np.arange(M + 1)
    x, level, theta, w, z = curve.at_offset(ks * h, model)
    n_lo = np.ceil(level / h - 1e-9).astype(int)
    n_lo = np.where((n_lo - ks) % 2 != 0, n_lo + 1, n_lo)
    return n_lo, (x, level, theta, w, z)


def _data_values(n: int, ks: np.ndarray, curve: Gamma0Curve, model: MaterialModel, forcing: ForcingLookup, damping: float):
    """
    Data on staircase nodes between Γ0 and the first full diagonals

    w and p are carried up from the curve point with the same X, z and q from the
    curve point with the same Y; θ, x and t average both feet. One trapezoidal
    correction follows the Euler predictor.
    """
    h = curve.h
    X_n = 0.5 * (n + ks) * h
    Y_n = 0.5 * (n - ks) * h
    Y_a, a = curve.below(X_n, model)
    X_b, b = curve.west_of(Y_n, model)
    dY = np.maximum(Y_n - Y_a, 0.0)
    dX = np.maximum(X_n - X_b, 0.0)
    t0 = curve.time

    fa = rhs_semilinear(RiemannState(a.w, a.z, a.p, a.q), a.theta, forcing(a.x, t0), model, damping)
    fb = rhs_semilinear(RiemannState(b.w, b.z, b.p, b.q), b.theta, forcing(b.x, t0), model, damping)
    _, xa_Y, _, ta_Y = position_rhs(a.w, a.z, a.p, a.q, a.theta, model)
    xb_X, _, tb_X, _ = position_rhs(b.w, b.z, b.p, b.q, b.theta, model)

    w = a.w + dY * fa.w_Y
    p = a.p + dY * fa.p_Y
    z = b.z + dX * fb.z_X
    q = b.q + dX * fb.q_X
    theta = 0.5 * ((a.theta + dY * fa.theta_Y) + (b.theta + dX * fb.theta_X))
    x = 0.5 * ((a.x + dY * xa_Y) + (b.x + dX * xb_X))
    t = t0 + 0.5 * (dY * ta_Y + dX * tb_X)
    J = forcing(x, t)

    for _ in range(INNER_SWEEPS):
        fn = rhs_semilinear(RiemannState(w, z, p, q), theta, J, model, damping)
        xn_X, xn_Y, tn_X, tn_Y = position_rhs(w, z, p, q, theta, model)
        w = a.w + 0.5 * dY * (fa.w_Y + fn.w_Y)
        p = a.p + 0.5 * dY * (fa.p_Y + fn.p_Y)
        z = b.z + 0.5 * dX * (fb.z_X + fn.z_X)
        q = b.q + 0.5 * dX * (fb.q_X + fn.q_X)
        theta = 0.5 * ((a.theta + 0.5 * dY * (fa.theta_Y + fn.theta_Y)) + (b.theta + 0.5 * dX * (fb.theta_X + fn.theta_X)))
        x = 0.5 * ((a.x + 0.5 * dY * (xa_Y + xn_Y)) + (b.x + 0.5 * dX * (xb_X + xn_X)))
        t = t0 + 0.25 * (dY * (ta_Y + tn_Y) + dX * (tb_X + tn_X))
        J = forcing(x, t)

    x = np.where(ks == 0, 0.0, np.where(ks == curve.resolution, math.pi, np.clip(x, 0.0, math.pi)))
    w, z = _wrap_pair(w, z)
    return theta, w, z, p, q, x, t, J


def _reflect_left(w, p, theta, boundary: BoundarySpec, model: MaterialModel, time):
    if boundary.left_dirichlet:
        return apply_boundary_L0(w, p)
    shift = 2.0 * boundary.kappa_left * model.speed(theta) * theta
    return _robin_reflection(w, p, shift, CUSP_TOL, time)


def _reflect_right(z, q, theta, boundary: BoundarySpec, model: MaterialModel, time):
    if boundary.right_dirichlet:
        return apply_boundary_L0(z, q)
    return apply_boundary_Lpi(z, q, theta, boundary.iota, model, time=time)


def march(
    curve: Gamma0Curve,
    model: MaterialModel,
    boundary: BoundarySpec,
    T: float,
    forcing: Optional[ForcingLookup] = None,
    damping: float = 1.0,
    horizon_slack: float = 8.0,
) -> CharGrid:
    """
    March the lattice in increasing X + Y until every offset line has passed t = T

    Args:
        curve: Initial curve with its lattice spacing
        model: Material law
        boundary: Boundary conditions; x = 0 and x = π closures
        T: Absolute end time of the window
        forcing: J on the physical lattice; None means J ≡ 0
        damping: γ of the wave equation
        horizon_slack: Multiplier of the diagonal budget before giving up

    Returns:
        Marched CharGrid

    Raises:
        NonpositivePQ: If p or q leaves (0, ∞)
        HorizonNotReached: If the diagonal budget is spent before t = T
    """
    forcing = forcing if forcing is not None else ForcingLookup()
    h = curve.h
    M = curve.resolution
    ncols = M // 2 + 1
    n_lo, table = _domain_start(curve, model)

    # Highest diagonal on which a node still lacks a neighbor
    data_top = np.full(M + 1, np.iinfo(np.int64).min, dtype=np.int64)
    data_top[1:] = np.maximum(data_top[1:], n_lo[:-1])
    data_top[:-1] = np.maximum(data_top[:-1], n_lo[1:])

    n_start = int(n_lo.min())
    span = float(np.max(table[1]) - np.min(table[1]))
    budget = span + horizon_slack * (2.0 * model.C_U * max(T - curve.time, 0.0) + curve.Xtil)
    n_cap = n_start + int(math.ceil(budget / h)) + 2

    names = ("theta", "w", "z", "p", "q", "x", "t", "J")
    rows = {name: [] for name in names}
    classes: List[np.ndarray] = []
    previous = None
    settled_rows = 0
    cusp_events = 0

    n = n_start
    while True:
        if n > n_cap:
            raise HorizonNotReached(
                f"diagonal budget of {n_cap - n_start} spent before t={T:.4g}", module="charwave", time=curve.time
            )
        row = {name: np.full(ncols, np.nan) for name in names}
        node_class = np.zeros(ncols, dtype=np.int8)
        ks = np.arange(n % 2, M + 1, 2)
        ks = ks[n >= n_lo[ks]]
        if ks.size:
            cols = ks // 2
            is_data = n <= data_top[ks]
            on_l0 = (ks == 0) & ~is_data
            on_lpi = (ks == M) & ~is_data
            inner = ~(is_data | on_l0 | on_lpi)

            if np.any(is_data):
                values = _data_values(n, ks[is_data], curve, model, forcing, damping)
                for name, value in zip(names, values):
                    row[name][cols[is_data]] = value
                node_class[cols[is_data]] = DATA

            if previous is not None and np.any(inner):
                k_in = ks[inner]
                west = {name: previous[name][(k_in - 1) // 2] for name in names}
                south = {name: previous[name][(k_in + 1) // 2] for name in names}
                values = _interior_update(west, south, h, model, forcing, damping)
                for name, value in values.items():
                    row[name][cols[inner]] = value
                node_class[cols[inner]] = INTERIOR

            if previous is not None and np.any(on_l0):
                south = {name: previous[name][[0]] for name in names}
                values = _left_update(south, h, model, boundary, forcing, damping)
                for name, value in values.items():
                    row[name][0] = value[0]
                node_class[0] = ON_L0

            if previous is not None and np.any(on_lpi):
                west = {name: previous[name][[(M - 1) // 2]] for name in names}
                values = _right_update(west, h, model, boundary, forcing, damping)
                for name, value in values.items():
                    row[name][M // 2] = value[0]
                node_class[M // 2] = ON_LPI

            computed = node_class != OUTSIDE
            p_row, q_row = row["p"][computed], row["q"][computed]
            if not (np.all(np.isfinite(p_row)) and np.all(np.isfinite(q_row)) and p_row.min() > 0 and q_row.min() > 0):
                bad = int(np.flatnonzero(computed)[np.argmin(np.minimum(p_row, q_row))])
                k_bad = 2 * bad + n % 2
                raise NonpositivePQ(
                    f"p or q not positive at (X, Y)=({0.5 * (n + k_bad) * h:.4g}, {0.5 * (n - k_bad) * h:.4g})",
                    module="charwave",
                    time=float(np.nanmin(row["t"][computed])),
                )
            with np.errstate(invalid="ignore"):
                cusp_events += int(np.sum((np.abs(row["w"]) > math.pi - CUSP_TOL) | (np.abs(row["z"]) > math.pi - CUSP_TOL)))

        for name in names:
            rows[name].append(row[name])
        classes.append(node_class)
        previous = row

        # Stop once two consecutive full diagonals lie beyond T
        full = ks.size == (M + 2 - n % 2) // 2 if M % 2 == 0 else ks.size == (M + 1) // 2
        if full and np.all(node_class[node_class != OUTSIDE] != DATA) and float(np.nanmin(row["t"])) > T:
            settled_rows += 1
        else:
            settled_rows = 0
        if settled_rows >= 2:
            break
        n += 1

    grid = CharGrid(
        h=h, Xhat=curve.Xhat, Xtil=curve.Xtil, resolution=M, n_start=n_start, t0=curve.time,
        damping=damping, curve=curve,
        node_class=np.vstack(classes), cusp_events=cusp_events,
        **{name: np.vstack(rows[name]) for name in names},
    )
    logger.debug(f"Marched {grid.n_rows} diagonals at h={h:.3e} to t={T:.4g} ({cusp_events} cusp nodes)")
    return grid


def _wrap_pair(w, z):
    return wrap_angle(w), wrap_angle(z)


def _interior_update(west, south, h, model, forcing, damping):
    half = 0.5 * h
    fs = rhs_semilinear(RiemannState(south["w"], south["z"], south["p"], south["q"]), south["theta"], south["J"], model, damping)
    fw = rhs_semilinear(RiemannState(west["w"], west["z"], west["p"], west["q"]), west["theta"], west["J"], model, damping)
    xs_X, xs_Y, ts_X, ts_Y = position_rhs(south["w"], south["z"], south["p"], south["q"], south["theta"], model)
    xw_X, xw_Y, tw_X, tw_Y = position_rhs(west["w"], west["z"], west["p"], west["q"], west["theta"], model)

    # Euler predictor from both neighbors
    w = south["w"] + h * fs.w_Y
    p = south["p"] + h * fs.p_Y
    z = west["z"] + h * fw.z_X
    q = west["q"] + h * fw.q_X
    theta = 0.5 * ((south["theta"] + h * fs.theta_Y) + (west["theta"] + h * fw.theta_X))
    x = 0.5 * ((south["x"] + h * xs_Y) + (west["x"] + h * xw_X))
    t = 0.5 * ((south["t"] + h * ts_Y) + (west["t"] + h * tw_X))
    J = forcing(x, t)

    for _ in range(INNER_SWEEPS):
        fn = rhs_semilinear(RiemannState(w, z, p, q), theta, J, model, damping)
        xn_X, xn_Y, tn_X, tn_Y = position_rhs(w, z, p, q, theta, model)
        w = south["w"] + half * (fs.w_Y + fn.w_Y)
        p = south["p"] + half * (fs.p_Y + fn.p_Y)
        z = west["z"] + half * (fw.z_X + fn.z_X)
        q = west["q"] + half * (fw.q_X + fn.q_X)
        theta = 0.5 * (
            (south["theta"] + half * (fs.theta_Y + fn.theta_Y)) + (west["theta"] + half * (fw.theta_X + fn.theta_X))
        )
        x = 0.5 * ((south["x"] + half * (xs_Y + xn_Y)) + (west["x"] + half * (xw_X + xn_X)))
        t = 0.5 * ((south["t"] + half * (ts_Y + tn_Y)) + (west["t"] + half * (tw_X + tn_X)))
        J = forcing(x, t)

    w, z = _wrap_pair(w, z)
    return {"theta": theta, "w": w, "z": z, "p": p, "q": q, "x": np.clip(x, 0.0, math.pi), "t": t, "J": J}


def _left_update(south, h, model, boundary, forcing, damping):
    half = 0.5 * h
    fs = rhs_semilinear(RiemannState(south["w"], south["z"], south["p"], south["q"]), south["theta"], south["J"], model, damping)
    _, _, _, ts_Y = position_rhs(south["w"], south["z"], south["p"], south["q"], south["theta"], model)
    time = float(south["t"][0])

    w = south["w"] + h * fs.w_Y
    p = south["p"] + h * fs.p_Y
    theta = np.zeros_like(w) if boundary.left_dirichlet else south["theta"] + h * fs.theta_Y
    z, q = _reflect_left(wrap_angle(w), p, theta, boundary, model, time)
    t = south["t"] + h * ts_Y
    x = np.zeros_like(w)
    J = forcing(x, t)

    for _ in range(INNER_SWEEPS):
        fn = rhs_semilinear(RiemannState(w, z, p, q), theta, J, model, damping)
        _, _, _, tn_Y = position_rhs(w, z, p, q, theta, model)
        w = south["w"] + half * (fs.w_Y + fn.w_Y)
        p = south["p"] + half * (fs.p_Y + fn.p_Y)
        if not boundary.left_dirichlet:
            theta = south["theta"] + half * (fs.theta_Y + fn.theta_Y)
        w = wrap_angle(w)
        z, q = _reflect_left(w, p, theta, boundary, model, time)
        t = south["t"] + half * (ts_Y + tn_Y)
        J = forcing(x, t)

    return {"theta": theta, "w": w, "z": wrap_angle(z), "p": p, "q": q, "x": x, "t": t, "J": J}


def _right_update(west, h, model, boundary, forcing, damping):
    half = 0.5 * h
    fw = rhs_semilinear(RiemannState(west["w"], west["z"], west["p"], west["q"]), west["theta"], west["J"], model, damping)
    _, _, tw_X, _ = position_rhs(west["w"], west["z"], west["p"], west["q"], west["theta"], model)
    time = float(west["t"][0])

    z = west["z"] + h * fw.z_X
    q = west["q"] + h * fw.q_X
    theta = np.zeros_like(z) if boundary.right_dirichlet else west["theta"] + h * fw.theta_X
    w, p = _reflect_right(wrap_angle(z), q, theta, boundary, model, time)
    t = west["t"] + h * tw_X
    x = np.full_like(z, math.pi)
    J = forcing(x, t)

    for _ in range(INNER_SWEEPS):
        fn = rhs_semilinear(RiemannState(w, z, p, q), theta, J, model, damping)
        _, _, tn_X, _ = position_rhs(w, z, p, q, theta, model)
        z = west["z"] + half * (fw.z_X + fn.z_X)
        q = west["q"] + half * (fw.q_X + fn.q_X)
        if not boundary.right_dirichlet:
            theta = west["theta"] + half * (fw.theta_X + fn.theta_X)
        z = wrap_angle(z)
        w, p = _reflect_right(z, q, theta, boundary, model, time)
        t = west["t"] + half * (tw_X + tn_X)
        J = forcing(x, t)

    return {"theta": theta, "w": wrap_angle(w), "z": z, "p": p, "q": q, "x": x, "t": t, "J": J}


@dataclass(frozen=True)
class LevelCurve:
    """Points of Γ_t, one per offset k = 0..M, ordered from x = 0 to x = π"""
    t: float
    X: np.ndarray
    Y: np.ndarray
    x: np.ndarray
    theta: np.ndarray
    w: np.ndarray
    z: np.ndarray
    p: np.ndarray
    q: np.ndarray


def _angle_lerp(a, b, lam):
    return wrap_angle(a + lam * wrap_angle(b - a))


def trace_level(grid: CharGrid, t_star: float) -> LevelCurve:
    """
    Intersect every offset line X − Y = kh with the level set t = t_star

    t is nondecreasing along each offset line, so the crossing is found by counting
    the entries below t_star.

    Raises:
        LookupMiss: If some offset line never reaches t_star
    """
    M = grid.resolution
    ks_all = np.arange(M + 1)
    out = {name: np.empty(M + 1) for name in ("n", "x", "theta", "w", "z", "p", "q")}
    for parity in (0, 1):
        first_row = (parity - grid.n_start) % 2
        ks = ks_all[ks_all % 2 == parity]
        if ks.size == 0:
            continue
        cols = ks // 2
        t_rows = grid.t[first_row::2][:, cols]
        valid = ~np.isnan(t_rows)
        first_valid = np.argmax(valid, axis=0)
        last_valid = valid.shape[0] - 1 - np.argmax(valid[::-1], axis=0)
        with np.errstate(invalid="ignore"):
            below = np.sum(valid & (t_rows < t_star), axis=0)
        idx_a = first_valid + below - 1
        if np.any(idx_a >= last_valid):
            raise LookupMiss(f"grid not marched past t={t_star:.6g}", module="charwave", time=t_star)
        clamp = below == 0
        idx_a = np.where(clamp, first_valid, idx_a)
        idx_b = np.where(clamp, first_valid, idx_a + 1)
        ta = t_rows[idx_a, np.arange(ks.size)]
        tb = t_rows[idx_b, np.arange(ks.size)]
        span = tb - ta
        lam = np.where(span > 0, (t_star - ta) / np.where(span > 0, span, 1.0), 0.0)
        lam = np.clip(lam, 0.0, 1.0)

        def pick(values):
            rows = values[first_row::2][:, cols]
            return rows[idx_a, np.arange(ks.size)], rows[idx_b, np.arange(ks.size)]

        for name in ("x", "theta", "p", "q"):
            a, b = pick(getattr(grid, name))
            out[name][ks] = a + lam * (b - a)
        for name in ("w", "z"):
            a, b = pick(getattr(grid, name))
            out[name][ks] = _angle_lerp(a, b, lam)
        row_a = first_row + 2 * idx_a
        out["n"][ks] = grid.n_start + row_a + 2.0 * lam * (idx_b != idx_a)

    n_real = out["n"]
    return LevelCurve(
        t=t_star,
        X=0.5 * (n_real + ks_all) * grid.h,
        Y=0.5 * (n_real - ks_all) * grid.h,
        x=np.maximum.accumulate(out["x"]),
        theta=out["theta"], w=out["w"], z=out["z"], p=out["p"], q=out["q"],
    )


def line_integrals(X, Y, w, z, p, q) -> Tuple[float, float]:
    """
    ∫ (θ_t² + c²θ_x²) dx and ∫ θ_t² dx along a level curve given by nodal (X, Y, w, z, p, q)

    On t = const, cos²(w/2)p dX = −cos²(z/2)q dY = dx, so the integrands become
    (1 − cos w)p/4 dX − (1 − cos z)q/4 dY and sin²((w + z)/2)(p dX − q dY)/(4(cos²(w/2) + cos²(z/2))).
    Both stay bounded through cusps.
    """
    a_w = 0.25 * (1.0 - np.cos(w)) * p
    a_z = 0.25 * (1.0 - np.cos(z)) * q
    dX = np.diff(X)
    dY = np.diff(Y)
    wave = float(np.sum(0.5 * (a_w[1:] + a_w[:-1]) * dX - 0.5 * (a_z[1:] + a_z[:-1]) * dY))

    cw2 = 0.5 * (1.0 + np.cos(w))
    cz2 = 0.5 * (1.0 + np.cos(z))
    weight = 0.25 * np.sin(0.5 * (w + z)) ** 2 / np.maximum(cw2 + cz2, 1e-12)
    b_w = weight * p
    b_z = weight * q
    kinetic = float(np.sum(0.5 * (b_w[1:] + b_w[:-1]) * dX - 0.5 * (b_z[1:] + b_z[:-1]) * dY))
    return wave, kinetic


def wave_integral(level: LevelCurve) -> float:
    """∫₀^π (θ_t² + c²θ_x²) dx along Γ_t"""
    return line_integrals(level.X, level.Y, level.w, level.z, level.p, level.q)[0]


def profile_wave_integral(profile: InitialProfile, model: MaterialModel) -> float:
    """The same integral on tabulated data: ∫ (R² + S²)/2 dx"""
    R, S = riemann_from_fields(profile.theta_t, profile.theta_x, profile.theta, model)
    return float(simpson(0.5 * (R ** 2 + S ** 2), x=profile.x))


def boundary_energy(theta_left, theta_right, boundary: BoundarySpec, model: MaterialModel) -> Tuple[np.ndarray, np.ndarray]:
    """B0 = κ0∫₀^θ(0) c²s ds and Bπ = ι∫₀^θ(π) c²s ds; zero on Dirichlet sides"""
    b0 = 0.0 if boundary.left_dirichlet else boundary.kappa_left * model.boundary_integral(theta_left)
    bpi = 0.0 if boundary.right_dirichlet else boundary.iota * model.boundary_integral(theta_right)
    return np.asarray(b0, dtype=float) + 0.0 * np.asarray(theta_left, dtype=float), np.asarray(bpi, dtype=float) + 0.0 * np.asarray(theta_right, dtype=float)


def energy_char(grid: CharGrid, t: float, model: MaterialModel, boundary: BoundarySpec) -> float:
    """
    E(t) = ∫₀^π (θ_t² + c²θ_x²) dx + 2B(θ(π, t)) (+ 2B0 on a Robin left end)

    Raises:
        LookupMiss: If Γ_t is not inside the marched region
    """
    if t <= grid.t0:
        curve = grid.curve
        wave = curve.wave_energy(model)
        b0, bpi = boundary_energy(curve.theta[0], curve.theta[-1], boundary, model)
    else:
        level = trace_level(grid, t)
        wave = wave_integral(level)
        b0, bpi = boundary_energy(level.theta[0], level.theta[-1], boundary, model)
    return wave + 2.0 * float(bpi) + 2.0 * float(b0)


@dataclass(frozen=True)
class InvertedFields:
    theta: np.ndarray
    theta_t: np.ndarray
    theta_x: np.ndarray
    cusp: np.ndarray
    wave_energy: np.ndarray
    theta_t_square: np.ndarray


def _fill_one_sided(values: np.ndarray, bad: np.ndarray) -> np.ndarray:
    """Replace tagged entries by the nearest clean value on the left (right at the start)"""
    if not np.any(bad) or np.all(bad):
        return np.where(bad, 0.0, values)
    idx = np.where(~bad, np.arange(values.size), -1)
    idx = np.maximum.accumulate(idx)
    first_clean = int(np.flatnonzero(~bad)[0])
    idx = np.where(idx < 0, first_clean, idx)
    return values[idx]


def invert_map(grid: CharGrid, x: np.ndarray, times: np.ndarray, model: MaterialModel, cusp_tol: float = CUSP_TOL) -> InvertedFields:
    """
    θ, θ_t, θ_x on a physical lattice

    For each time the level set Γ_t is traced through the offset lines; the crossing
    points are ordered in x, so values on the x grid follow by interpolation along Γ_t
    (angular interpolation for w and z).

    Raises:
        LookupMiss: If a requested time is beyond the marched region
    """
    x = np.asarray(x, dtype=float)
    shape = (len(times), len(x))
    theta = np.empty(shape)
    theta_t = np.empty(shape)
    theta_x = np.empty(shape)
    cusp = np.zeros(shape, dtype=bool)
    wave = np.empty(len(times))
    kinetic = np.empty(len(times))

    for b, t_b in enumerate(times):
        if t_b <= grid.t0:
            profile = grid.curve.profile
            theta[b] = np.interp(x, profile.x, profile.theta)
            theta_t[b] = np.interp(x, profile.x, profile.theta_t)
            theta_x[b] = np.interp(x, profile.x, profile.theta_x)
            wave[b] = grid.curve.wave_energy(model)
            kinetic[b] = grid.curve.theta_t_square()
            continue

        level = trace_level(grid, float(t_b))
        wave[b], kinetic[b] = line_integrals(level.X, level.Y, level.w, level.z, level.p, level.q)
        xs = level.x
        seg = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, len(xs) - 2)
        span = xs[seg + 1] - xs[seg]
        lam = np.clip(np.where(span > 0, (x - xs[seg]) / np.where(span > 0, span, 1.0), 0.0), 0.0, 1.0)
        theta[b] = level.theta[seg] + lam * (level.theta[seg + 1] - level.theta[seg])
        w = _angle_lerp(level.w[seg], level.w[seg + 1], lam)
        z = _angle_lerp(level.z[seg], level.z[seg + 1], lam)
        R, S = decompress(w, z, tol=cusp_tol)
        bad = R.cusp | S.cusp
        cusp[b] = bad
        R_val = _fill_one_sided(R.value, bad)
        S_val = _fill_one_sided(S.value, bad)
        theta_t[b], theta_x[b] = fields_from_riemann(R_val, S_val, theta[b], model)

    return InvertedFields(theta=theta, theta_t=theta_t, theta_x=theta_x, cusp=cusp, wave_energy=wave, theta_t_square=kinetic)


def theta_t_dissipation(grid: CharGrid, model: MaterialModel, t_end: float) -> float:
    """
    ∬ θ_t² dx dt over t0 ≤ t ≤ t_end, from dx dt = pq/(2c)·cos²(w/2)cos²(z/2) dX dY,
    which turns the integrand into pq/(8c)·sin²((w + z)/2)
    """
    valid = grid.valid()
    with np.errstate(invalid="ignore"):
        inside = valid & (grid.t <= t_end)
    c = model.speed(np.where(inside, grid.theta, 0.0))
    density = np.where(inside, grid.p * grid.q / (8.0 * c) * np.sin(0.5 * (grid.w + grid.z)) ** 2, 0.0)
    return float(np.sum(density) * grid.h ** 2)
