"""
Finite-difference reference solver for the coupled system

    u_t = (u_x + θ_t)_x
    θ_tt + 2θ_t = c(θ)(c(θ)θ_x)_x − u_x

θ uses a leapfrog step with the damping term centered in time and c evaluated at
cell midpoints; u uses a finite-volume Crank–Nicolson step whose source is the face
value of θ_t at the half step. Valid for classical solutions only.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np
from scipy.sparse import diags, identity
from scipy.sparse.linalg import splu

from ..errors import BlowupDetected, CFLViolation
from ..fields import PhysGrid
from ..model import BoundarySpec, InitialProfile, MaterialModel

logger = logging.getLogger(__name__)

CFL_MARGIN = 0.9
BLOWUP_LEVEL = 1e6


@dataclass(frozen=True)
class FDState:
    """Two time levels of θ plus u on a uniform grid"""
    x: np.ndarray
    dt: float
    time: float
    theta: np.ndarray
    theta_prev: np.ndarray
    u: np.ndarray
    steps: int = 0

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])


def check_cfl(dt: float, dx: float, model: MaterialModel, time: float = 0.0) -> None:
    """
    Raises:
        CFLViolation: If dt exceeds 0.9·dx/C_U
    """
    limit = CFL_MARGIN * dx / model.C_U
    if dt > limit:
        raise CFLViolation(f"dt={dt:.6g} exceeds 0.9*dx/C_U={limit:.6g}", module="oracle_fd", time=time)


def _elastic(theta: np.ndarray, dx: float, model: MaterialModel, boundary: BoundarySpec) -> np.ndarray:
    """c(cθ_x)_x with midpoint speeds and ghost nodes for Robin ends"""
    left_ghost = theta[1] - 2.0 * dx * boundary.kappa_left * theta[0]
    right_ghost = theta[-2] - 2.0 * dx * boundary.iota * theta[-1]
    padded = np.concatenate(([left_ghost], theta, [right_ghost]))
    c_mid = model.speed(0.5 * (padded[1:] + padded[:-1]))
    flux = c_mid * np.diff(padded)
    out = model.speed(theta) * np.diff(flux) / dx ** 2
    if boundary.left_dirichlet:
        out[0] = 0.0
    if boundary.right_dirichlet:
        out[-1] = 0.0
    return out


def _pin(theta: np.ndarray, boundary: BoundarySpec) -> np.ndarray:
    if boundary.left_dirichlet:
        theta[0] = 0.0
    if boundary.right_dirichlet:
        theta[-1] = 0.0
    return theta


class _VelocityStepper:
    """Crank–Nicolson for u_t = (u_x + g)_x with g given on cell faces"""

    def __init__(self, n: int, dx: float, dt: float, nonslip: bool):
        self.dx = dx
        self.dt = dt
        self.nonslip = nonslip
        main = np.full(n, -2.0)
        upper = np.ones(n - 1)
        lower = np.ones(n - 1)
        if not nonslip:
            # Half cells with zero flux through the ends
            upper[0] = 2.0
            lower[-1] = 2.0
        L = diags([lower, main, upper], [-1, 0, 1], format="csc") / dx ** 2
        eye = identity(n, format="csc")
        lhs = (eye - 0.5 * dt * L).tolil()
        self.rhs_op = (eye + 0.5 * dt * L).tolil()
        if nonslip:
            for row in (0, n - 1):
                lhs[row, :] = 0.0
                lhs[row, row] = 1.0
                self.rhs_op[row, :] = 0.0
        self.rhs_op = self.rhs_op.tocsc()
        self.solver = splu(lhs.tocsc())

    def __call__(self, u: np.ndarray, face_source: np.ndarray) -> np.ndarray:
        src = np.zeros_like(u)
        src[1:-1] = np.diff(face_source) / self.dx
        if not self.nonslip:
            src[0] = 2.0 * face_source[0] / self.dx
            src[-1] = -2.0 * face_source[-1] / self.dx
        rhs = self.rhs_op @ u + self.dt * src
        if self.nonslip:
            rhs[0] = rhs[-1] = 0.0
        return self.solver.solve(rhs)


def _u_x(u: np.ndarray, dx: float) -> np.ndarray:
    return np.gradient(u, dx, edge_order=2)


def step(
    state: FDState,
    model: MaterialModel,
    boundary: BoundarySpec,
    velocity: Optional[_VelocityStepper] = None,
) -> FDState:
    """
    Advance one time step

    velocity is the u stepper; None freezes u (the u-equation switched off).

    Raises:
        CFLViolation: If dt exceeds the hyperbolic limit
        BlowupDetected: If a field leaves [−1e6, 1e6] or stops being finite
    """
    dx, dt = state.dx, state.dt
    check_cfl(dt, dx, model, state.time)
    forcing = _elastic(state.theta, dx, model, boundary) - _u_x(state.u, dx)
    a = 1.0 / dt ** 2
    b = 1.0 / dt
    theta_next = (2.0 * a * state.theta - (a - b) * state.theta_prev + forcing) / (a + b)
    theta_next = _pin(theta_next, boundary)

    u_next = state.u
    if velocity is not None:
        theta_t_half = (theta_next - state.theta) / dt
        u_next = velocity(state.u, 0.5 * (theta_t_half[1:] + theta_t_half[:-1]))

    new = replace(state, time=state.time + dt, theta=theta_next, theta_prev=state.theta, u=u_next, steps=state.steps + 1)
    _check_blowup(new)
    return new


def _check_blowup(state: FDState) -> None:
    theta_x = np.gradient(state.theta, state.dx)
    level = max(np.max(np.abs(state.theta)), np.max(np.abs(state.u)), np.max(np.abs(theta_x)))
    if not math.isfinite(level) or level > BLOWUP_LEVEL:
        raise BlowupDetected(f"sup norm {level:.3e} exceeds {BLOWUP_LEVEL:.0e}", module="oracle_fd", time=state.time)


def _first_step(profile: InitialProfile, dt: float, model: MaterialModel, boundary: BoundarySpec, couple_u: bool) -> np.ndarray:
    """Taylor start θ¹ = θ⁰ + dt·θ1 + dt²/2·θ_tt(0)"""
    dx = float(profile.x[1] - profile.x[0])
    u_x = _u_x(profile.u, dx) if couple_u else 0.0
    theta_tt = _elastic(profile.theta, dx, model, boundary) - 2.0 * profile.theta_t - u_x
    theta1 = profile.theta + dt * profile.theta_t + 0.5 * dt ** 2 * theta_tt
    return _pin(theta1, boundary)


def resolve_time_step(dx: float, dt_out: float, model: MaterialModel, dt: Optional[float] = None) -> float:
    """
    Largest step not above the request that divides dt_out

    Without a request the target is 0.5·dx/C_U.

    Raises:
        CFLViolation: If a requested dt exceeds the hyperbolic limit
    """
    if dt is not None:
        check_cfl(dt, dx, model)
        target = dt
    else:
        target = 0.5 * dx / model.C_U
    per_output = max(1, math.ceil(dt_out / target - 1e-9))
    return dt_out / per_output


def run(
    profile: InitialProfile,
    model: MaterialModel,
    boundary: BoundarySpec,
    T: float,
    n: int,
    dt_out: float,
    dt: Optional[float] = None,
    couple_u: bool = True,
) -> PhysGrid:
    """
    Solve on [0, T] and return the fields every dt_out

    Args:
        profile: Initial state, resampled onto n nodes
        model: Material law
        boundary: Boundary conditions
        T: Horizon
        n: Number of x nodes including both ends
        dt_out: Output interval; the horizon is rounded to a multiple of it
        dt: Requested time step, checked against the CFL limit
        couple_u: False switches the u-equation off and keeps u ≡ 0

    Returns:
        PhysGrid on the FD x grid; J = u_x + θ_t

    Raises:
        CFLViolation: If dt violates the CFL limit
        BlowupDetected: If the solution leaves the classical regime
    """
    x = np.linspace(0.0, math.pi, n)
    dx = float(x[1] - x[0])
    dt = resolve_time_step(dx, dt_out, model, dt)
    per_output = int(round(dt_out / dt))
    n_out = max(1, int(round(T / dt_out)))
    total = n_out * per_output
    logger.info(f"FD oracle: n={n}, dt={dt:.4g}, {total} steps to t={n_out * dt_out:.4g}")

    start = profile.resample(x)
    u0 = start.u if couple_u else np.zeros(n)
    if couple_u and boundary.nonslip:
        u0 = u0.copy()
        u0[0] = u0[-1] = 0.0
    start = replace(start, u=u0)
    velocity = _VelocityStepper(n, dx, dt, boundary.nonslip) if couple_u else None

    theta1 = _first_step(start, dt, model, boundary, couple_u)
    u1 = u0
    if velocity is not None:
        theta_t_half = (theta1 - start.theta) / dt
        u1 = velocity(u0, 0.5 * (theta_t_half[1:] + theta_t_half[:-1]))
    state = FDState(x=x, dt=dt, time=dt, theta=theta1, theta_prev=start.theta.copy(), u=u1, steps=1)
    _check_blowup(state)

    times: List[float] = [0.0]
    theta_rows = [start.theta.copy()]
    theta_t_rows = [start.theta_t.copy()]
    u_rows = [u0.copy()]

    # θ_t at step m is centered, so the state runs one step ahead of the record
    while state.steps <= total:
        previous = state
        state = step(state, model, boundary, velocity)
        m = previous.steps
        if m % per_output == 0:
            times.append(m * dt)
            theta_rows.append(previous.theta.copy())
            theta_t_rows.append((state.theta - previous.theta_prev) / (2.0 * dt))
            u_rows.append(previous.u.copy())

    theta = np.vstack(theta_rows)
    theta_t = np.vstack(theta_t_rows)
    u = np.vstack(u_rows)
    theta_x = np.gradient(theta, dx, axis=1, edge_order=2)
    J = np.gradient(u, dx, axis=1, edge_order=2) + theta_t
    return PhysGrid(x=x, t=np.asarray(times), theta=theta, theta_t=theta_t, theta_x=theta_x, u=u, J=J)
