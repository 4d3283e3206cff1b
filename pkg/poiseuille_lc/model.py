"""
Domain types for 1-D Poiseuille flow of a nematic liquid crystal

The director angle obeys a damped variational wave equation with speed

    c(θ) = sqrt(K1 cos²θ + K3 sin²θ),   c'(θ) = (K3 − K1) sinθ cosθ / c(θ)

so C_L = min(√K1, √K3) ≤ c ≤ C_U = max(√K1, √K3). Writing u = sin²θ,
(c')² = (K3 − K1)² u(1 − u)/(K1 + (K3 − K1)u), which is maximal at
u = √K1/(√K1 + √K3) with value (√K3 − √K1)². The constant C1 keeps the coarser
bound |K3 − K1|/(2 C_L) that follows from |sinθ cosθ| ≤ 1/2 and c ≥ C_L.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Annotated, Any, Dict, List, Literal, NamedTuple, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import CompatibilityViolation, InvalidCoefficients, QuadratureFailure

logger = logging.getLogger(__name__)

# Tolerance for the compatibility identities at load time
COMPATIBILITY_TOL = 1e-12


class MaterialModel(BaseModel):
    """Frank elastic constants of the normalized model (ρ=ν=1, γ1=2, γ2=0, g=h=1)"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    # Splay and bend moduli
    K1: float = 1.0
    K3: float = 1.0

    @field_validator("K1", "K3")
    def check_positive(cls, v):
        """Elastic constants must be positive and finite"""
        if not math.isfinite(v) or v <= 0:
            raise ValueError("elastic constants must be positive")
        return v

    @property
    def C_L(self) -> float:
        return min(math.sqrt(self.K1), math.sqrt(self.K3))

    @property
    def C_U(self) -> float:
        return max(math.sqrt(self.K1), math.sqrt(self.K3))

    @property
    def C1(self) -> float:
        return abs(self.K3 - self.K1) / (2.0 * self.C_L)

    @property
    def cprime_max(self) -> float:
        """Exact maximum of |c'(θ)| over θ"""
        return abs(math.sqrt(self.K3) - math.sqrt(self.K1))

    @property
    def is_constant_speed(self) -> bool:
        return self.K1 == self.K3

    def speed(self, theta):
        """c(θ), vectorized"""
        theta = np.asarray(theta, dtype=float)
        return np.sqrt(self.K1 * np.cos(theta) ** 2 + self.K3 * np.sin(theta) ** 2)

    def speed_and_derivative(self, theta) -> Tuple[np.ndarray, np.ndarray]:
        """c(θ) and c'(θ), vectorized"""
        theta = np.asarray(theta, dtype=float)
        c = self.speed(theta)
        cprime = (self.K3 - self.K1) * np.sin(theta) * np.cos(theta) / c
        return c, cprime

    def boundary_integral(self, theta):
        """
        Closed form of ∫₀^θ c²(s) s ds

        c² = (K1+K3)/2 + (K1−K3)/2·cos 2s, so the integral is
        (K1+K3)θ²/4 + (K1−K3)/2·(θ sin 2θ / 2 + (cos 2θ − 1)/4).
        """
        theta = np.asarray(theta, dtype=float)
        half_diff = 0.5 * (self.K1 - self.K3)
        return (
            0.25 * (self.K1 + self.K3) * theta ** 2
            + half_diff * (0.5 * theta * np.sin(2.0 * theta) + 0.25 * (np.cos(2.0 * theta) - 1.0))
        )


def wave_speed(theta, model: MaterialModel) -> Tuple[np.ndarray, np.ndarray]:
    """
    Evaluate the material law

    Args:
        theta: Director angle (scalar or array)
        model: Elastic constants

    Returns:
        Tuple (c, c') with the shape of theta
    """
    c, cprime = model.speed_and_derivative(theta)
    if np.ndim(theta) == 0:
        return float(c), float(cprime)
    return c, cprime


class BoundarySpec(BaseModel):
    """
    Boundary conditions

    u: nonslip (u=0) or stress_free (u_x+θ_t=0) at both ends.
    θ: −ι1θ(0)+ι2θ_x(0)=0 on the left, ι3θ(π)+ι4θ_x(π)=0 on the right.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    u_side: Literal["nonslip", "stress_free"] = "nonslip"
    # (ι1, ι2): Dirichlet by default
    theta_left: Tuple[float, float] = (1.0, 0.0)
    # (ι3, ι4): Neumann by default
    theta_right: Tuple[float, float] = (0.0, 1.0)

    def check(self) -> None:
        """
        Check sign and non-degeneracy of the coefficients

        Raises:
            InvalidCoefficients: If any ι is negative or a pair vanishes
        """
        for name, pair in (("theta_left", self.theta_left), ("theta_right", self.theta_right)):
            if any(not math.isfinite(v) or v < 0 for v in pair):
                raise InvalidCoefficients(f"{name} coefficients must be nonnegative, got {pair}", module="model")
            if pair[0] == 0 and pair[1] == 0:
                raise InvalidCoefficients(f"{name} coefficients cannot both vanish", module="model")

    @property
    def nonslip(self) -> bool:
        return self.u_side == "nonslip"

    @property
    def left_dirichlet(self) -> bool:
        return self.theta_left[1] == 0

    @property
    def right_dirichlet(self) -> bool:
        return self.theta_right[1] == 0

    @property
    def kappa_left(self) -> float:
        """ι1/ι2, so the left law reads θ_x = κ0·θ (undefined when Dirichlet)"""
        return 0.0 if self.left_dirichlet else self.theta_left[0] / self.theta_left[1]

    @property
    def iota(self) -> float:
        """ι = ι3/ι4, so the right law reads θ_x = −ι·θ (undefined when Dirichlet)"""
        return 0.0 if self.right_dirichlet else self.theta_right[0] / self.theta_right[1]

    @property
    def is_extension(self) -> bool:
        """True unless θ(0)=0 and ιθ(π)+θ_x(π)=0 with ι ≥ 0"""
        return not (self.left_dirichlet and not self.right_dirichlet)


# Initial-data presets
class ConstantPreset(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["constant"] = "constant"
    value: float = 0.0

    def value_at(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.value)

    def derivative_at(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))


class PolynomialPreset(BaseModel):
    """Σ coefficients[k] x^k"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["polynomial"] = "polynomial"
    coefficients: List[float] = Field(default_factory=list)

    def value_at(self, x):
        x = np.asarray(x, dtype=float)
        if not self.coefficients:
            return np.zeros_like(x)
        return np.polynomial.polynomial.polyval(x, self.coefficients)

    def derivative_at(self, x):
        x = np.asarray(x, dtype=float)
        if len(self.coefficients) < 2:
            return np.zeros_like(x)
        return np.polynomial.polynomial.polyval(x, np.polynomial.polynomial.polyder(self.coefficients))


class TrigSeriesPreset(BaseModel):
    """offset + Σ_k cosine[k−1] cos(kωx) + sine[k−1] sin(kωx), ω = frequency"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["trig"] = "trig"
    frequency: float = 1.0
    offset: float = 0.0
    sine: List[float] = Field(default_factory=list)
    cosine: List[float] = Field(default_factory=list)

    def value_at(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full_like(x, self.offset)
        for k, b in enumerate(self.sine, start=1):
            out = out + b * np.sin(k * self.frequency * x)
        for k, a in enumerate(self.cosine, start=1):
            out = out + a * np.cos(k * self.frequency * x)
        return out

    def derivative_at(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for k, b in enumerate(self.sine, start=1):
            w = k * self.frequency
            out = out + b * w * np.cos(w * x)
        for k, a in enumerate(self.cosine, start=1):
            w = k * self.frequency
            out = out - a * w * np.sin(w * x)
        return out


class TablePreset(BaseModel):
    """Piecewise-linear table; the derivative is the slope of the containing segment"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["table"] = "table"
    xs: List[float]
    ys: List[float]

    @model_validator(mode="after")
    def check_table(self):
        """Table must be strictly increasing in x and cover [0, π]"""
        if len(self.xs) != len(self.ys) or len(self.xs) < 2:
            raise ValueError("table needs matching xs and ys with at least two points")
        if np.any(np.diff(self.xs) <= 0):
            raise ValueError("table xs must be strictly increasing")
        if self.xs[0] > 1e-12 or self.xs[-1] < math.pi - 1e-12:
            raise ValueError("table must cover [0, pi]")
        return self

    def value_at(self, x):
        return np.interp(np.asarray(x, dtype=float), self.xs, self.ys)

    def derivative_at(self, x):
        xs = np.asarray(self.xs)
        slopes = np.diff(self.ys) / np.diff(xs)
        idx = np.clip(np.searchsorted(xs, np.asarray(x, dtype=float), side="right") - 1, 0, len(slopes) - 1)
        return slopes[idx]


class GaussianPreset(BaseModel):
    """offset + amplitude·exp(−((x−center)/width)²), for concentrated data"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["gaussian"] = "gaussian"
    amplitude: float = 1.0
    center: float = math.pi / 2
    width: float = 0.2
    offset: float = 0.0

    @field_validator("width")
    def check_width(cls, v):
        if v <= 0:
            raise ValueError("width must be positive")
        return v

    def value_at(self, x):
        x = np.asarray(x, dtype=float)
        return self.offset + self.amplitude * np.exp(-(((x - self.center) / self.width) ** 2))

    def derivative_at(self, x):
        x = np.asarray(x, dtype=float)
        r = (x - self.center) / self.width
        return -2.0 * r / self.width * self.amplitude * np.exp(-(r ** 2))


Preset = Annotated[
    Union[ConstantPreset, PolynomialPreset, TrigSeriesPreset, TablePreset, GaussianPreset],
    Field(discriminator="kind"),
]


class InitialData(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    u0: Preset = Field(default_factory=ConstantPreset)
    theta0: Preset = Field(default_factory=ConstantPreset)
    theta1: Preset = Field(default_factory=ConstantPreset)
    # Hölder exponent of J0, recorded for documentation only
    alpha: float = 0.2

    @field_validator("alpha")
    def check_alpha(cls, v):
        """J0 must be C^α with α in (0, 1/4)"""
        if not 0 < v < 0.25:
            raise ValueError("alpha must lie in (0, 1/4)")
        return v


class ProblemSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    material: MaterialModel = Field(default_factory=MaterialModel)
    boundary: BoundarySpec = Field(default_factory=BoundarySpec)
    initial: InitialData = Field(default_factory=InitialData)


# Riemann variables
class Decompressed(NamedTuple):
    """Gradient value with a cusp tag; value is meaningless where cusp is set"""
    value: Any
    cusp: Any


def riemann_from_fields(theta_t, theta_x, theta, model: MaterialModel):
    """R = θ_t + cθ_x, S = θ_t − cθ_x"""
    c = model.speed(theta)
    R = np.asarray(theta_t, dtype=float) + c * theta_x
    S = np.asarray(theta_t, dtype=float) - c * theta_x
    if np.ndim(R) == 0:
        return float(R), float(S)
    return R, S


def fields_from_riemann(R, S, theta, model: MaterialModel):
    """Inverse of riemann_from_fields: θ_t = (R+S)/2, θ_x = (R−S)/(2c)"""
    c = model.speed(theta)
    theta_t = 0.5 * (np.asarray(R, dtype=float) + S)
    theta_x = 0.5 * (np.asarray(R, dtype=float) - S) / c
    if np.ndim(theta_t) == 0:
        return float(theta_t), float(theta_x)
    return theta_t, theta_x


def compress(R, S):
    """w = 2 arctan R, z = 2 arctan S"""
    w = 2.0 * np.arctan(R)
    z = 2.0 * np.arctan(S)
    if np.ndim(w) == 0:
        return float(w), float(z)
    return w, z


def _decompress_one(angle, tol: float) -> Decompressed:
    angle = np.asarray(angle, dtype=float)
    cusp = np.abs(angle) >= math.pi - tol
    safe = np.where(cusp, 0.0, angle)
    value = np.where(cusp, 0.0, np.tan(0.5 * safe))
    if value.ndim == 0:
        return Decompressed(float(value), bool(cusp))
    return Decompressed(value, cusp)


def decompress(w, z, tol: float = 0.0) -> Tuple[Decompressed, Decompressed]:
    """
    Inverse of compress with cusp tagging

    Args:
        w: Compressed forward variable in [−π, π]
        z: Compressed backward variable in [−π, π]
        tol: Angles with |·| ≥ π − tol are tagged as cusps

    Returns:
        Pair of Decompressed (R, S)
    """
    return _decompress_one(w, tol), _decompress_one(z, tol)


def wrap_angle(angle):
    """Map angles to (−π, π]"""
    wrapped = np.mod(np.asarray(angle, dtype=float) + math.pi, 2.0 * math.pi) - math.pi
    return np.where(wrapped == -math.pi, math.pi, wrapped)


@dataclass(frozen=True)
class RiemannState:
    """Compressed Riemann variables and weights; fields may be scalars or arrays"""
    w: Any
    z: Any
    p: Any = 1.0
    q: Any = 1.0

    @classmethod
    def from_gradients(cls, R, S, p=1.0, q=1.0) -> "RiemannState":
        w, z = compress(R, S)
        return cls(w=w, z=z, p=p, q=q)

    @property
    def R(self) -> Decompressed:
        return decompress(self.w, self.z)[0]

    @property
    def S(self) -> Decompressed:
        return decompress(self.w, self.z)[1]


@dataclass(frozen=True)
class InitialProfile:
    """
    Tabulated state at the start of a time window

    Holds θ, θ_t, θ_x, u and J = u_x + θ_t on a uniform x grid over [0, π].
    """
    x: np.ndarray
    theta: np.ndarray
    theta_t: np.ndarray
    theta_x: np.ndarray
    u: np.ndarray
    J: np.ndarray
    time: float = 0.0

    def resample(self, x: np.ndarray) -> "InitialProfile":
        """Piecewise-linear resampling onto another grid"""
        return InitialProfile(
            x=np.asarray(x, dtype=float),
            theta=np.interp(x, self.x, self.theta),
            theta_t=np.interp(x, self.x, self.theta_t),
            theta_x=np.interp(x, self.x, self.theta_x),
            u=np.interp(x, self.x, self.u),
            J=np.interp(x, self.x, self.J),
            time=self.time,
        )


def sample_initial_profile(initial: InitialData, n: int) -> InitialProfile:
    """
    Tabulate the initial presets on n uniform points of [0, π]

    Raises:
        QuadratureFailure: If any preset returns non-finite values
    """
    x = np.linspace(0.0, math.pi, n)
    theta = initial.theta0.value_at(x)
    theta_x = initial.theta0.derivative_at(x)
    theta_t = initial.theta1.value_at(x)
    u = initial.u0.value_at(x)
    J = initial.u0.derivative_at(x) + theta_t
    for name, values in (("theta0", theta), ("theta0'", theta_x), ("theta1", theta_t), ("u0", u), ("J0", J)):
        if not np.all(np.isfinite(values)):
            raise QuadratureFailure(f"initial sampler {name} returned non-finite values", module="model", time=0.0)
    return InitialProfile(x=x, theta=theta, theta_t=theta_t, theta_x=theta_x, u=u, J=J, time=0.0)


@dataclass(frozen=True)
class ValidatedProblem:
    spec: ProblemSpec
    profile: InitialProfile
    extension: bool
    warnings: List[str] = field(default_factory=list)

    @property
    def material(self) -> MaterialModel:
        return self.spec.material

    @property
    def boundary(self) -> BoundarySpec:
        return self.spec.boundary


def validate(problem: ProblemSpec, n_samples: int = 2049) -> ValidatedProblem:
    """
    Check the hypotheses on the data and tabulate J0

    Args:
        problem: Parsed problem specification
        n_samples: Number of uniform samples used for the tables

    Returns:
        ValidatedProblem with the sampled initial profile

    Raises:
        InvalidCoefficients: Negative or degenerate boundary coefficients
        CompatibilityViolation: One record per failing identity
    """
    boundary = problem.boundary
    boundary.check()
    initial = problem.initial
    ends = np.array([0.0, math.pi])

    theta0 = initial.theta0.value_at(ends)
    theta0_x = initial.theta0.derivative_at(ends)
    theta1 = initial.theta1.value_at(ends)
    u0 = initial.u0.value_at(ends)
    J0 = initial.u0.derivative_at(ends) + theta1

    violations: List[Dict[str, Any]] = []

    def record(endpoint: str, identity: str, residual: float):
        if abs(residual) > COMPATIBILITY_TOL:
            violations.append({"endpoint": endpoint, "identity": identity, "residual": float(abs(residual))})

    if boundary.left_dirichlet:
        record("0", "theta0(0)=0", theta0[0])
    if boundary.right_dirichlet:
        record("pi", "theta0(pi)=0", theta0[1])
    else:
        record("pi", "iota*theta0(pi)+theta1(pi)=0", boundary.iota * theta0[1] + theta1[1])
    if boundary.nonslip:
        record("0", "u0(0)=0", u0[0])
        record("pi", "u0(pi)=0", u0[1])

    if violations:
        for v in violations:
            logger.error(f"Compatibility violation at x={v['endpoint']}: {v['identity']} (residual {v['residual']:.3e})")
        raise CompatibilityViolation(violations)

    # Natural corner conditions that the theory does not require
    warnings: List[str] = []
    if not boundary.right_dirichlet:
        robin = boundary.iota * theta0[1] + theta0_x[1]
        if abs(robin) > 1e-8:
            warnings.append(f"theta0 violates the Robin law at pi (residual {abs(robin):.3e}); a corner wave is emitted")
    if boundary.left_dirichlet and abs(theta1[0]) > 1e-8:
        warnings.append(f"theta1(0)={theta1[0]:.3e} is not zero; a corner wave is emitted at x=0")
    if not boundary.nonslip and np.max(np.abs(J0)) > 1e-8:
        warnings.append("J0 does not vanish at the ends; the stress-free J develops a boundary layer")
    for message in warnings:
        logger.warning(message)

    if boundary.is_extension:
        logger.info(f"Boundary combination {boundary.theta_left}/{boundary.theta_right} runs as an extension")

    profile = sample_initial_profile(initial, n_samples)
    return ValidatedProblem(spec=problem, profile=profile, extension=boundary.is_extension, warnings=warnings)
