from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from .model import InitialProfile, ValidatedProblem


@dataclass(frozen=True)
class PhysGrid:
    """
    Fields on a uniform (x, t) lattice of [0, π] × [t0, t1]

    Every field array has shape (len(t), len(x)). cusp marks nodes whose
    gradients were replaced by one-sided values.
    """
    x: np.ndarray
    t: np.ndarray
    theta: np.ndarray
    theta_t: np.ndarray
    theta_x: np.ndarray
    u: np.ndarray
    J: np.ndarray
    cusp: Optional[np.ndarray] = None
    # ∫(θ_t² + c²θ_x²)dx per time level, when computed on characteristics
    wave_energy: Optional[np.ndarray] = None
    # ∫θ_t² dx per time level, same source
    theta_t_square: Optional[np.ndarray] = None

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def shape(self):
        return self.theta.shape

    def cusp_mask(self) -> np.ndarray:
        if self.cusp is None:
            return np.zeros(self.shape, dtype=bool)
        return self.cusp

    def level_index(self, t: float) -> int:
        """Index of the stored time level closest to t"""
        return int(np.argmin(np.abs(self.t - t)))

    def profile_at(self, index: int) -> InitialProfile:
        """State at one time level, as initial data for the next window"""
        return InitialProfile(
            x=self.x,
            theta=self.theta[index].copy(),
            theta_t=self.theta_t[index].copy(),
            theta_x=self.theta_x[index].copy(),
            u=self.u[index].copy(),
            J=self.J[index].copy(),
            time=float(self.t[index]),
        )


def concatenate_grids(grids: List[PhysGrid]) -> PhysGrid:
    """Chain window grids, dropping the duplicated seam level of each later window"""
    first = grids[0]

    def stack(name):
        parts = [getattr(first, name)]
        for g in grids[1:]:
            parts.append(getattr(g, name)[1:])
        return np.concatenate(parts, axis=0)

    def stack_optional(name):
        if all(getattr(g, name) is not None for g in grids):
            return stack(name)
        return None

    cusp = np.concatenate([first.cusp_mask()] + [g.cusp_mask()[1:] for g in grids[1:]], axis=0)
    return PhysGrid(
        x=first.x,
        t=stack("t"),
        theta=stack("theta"),
        theta_t=stack("theta_t"),
        theta_x=stack("theta_x"),
        u=stack("u"),
        J=stack("J"),
        cusp=cusp,
        wave_energy=stack_optional("wave_energy"),
        theta_t_square=stack_optional("theta_t_square"),
    )


@dataclass(frozen=True)
class WindowRecord:
    t0: float
    t1: float
    iterations: int
    residual: float
    halvings: int


@dataclass(frozen=True)
class SolutionBundle:
    """Result of one run: physical fields plus per-window bookkeeping"""
    fields: PhysGrid
    problem: ValidatedProblem
    mode: str
    windows: List[WindowRecord] = field(default_factory=list)
    # Per-window metrics of the characteristic grids
    char_metrics: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def horizon(self) -> float:
        return float(self.fields.t[-1])

    @property
    def iterations_total(self) -> int:
        return sum(w.iterations for w in self.windows)
