import math

import numpy as np
import pytest

from poiseuille_lc.config import validate_run_config
from poiseuille_lc.fields import PhysGrid, SolutionBundle, WindowRecord
from poiseuille_lc.model import MaterialModel, ProblemSpec, ValidatedProblem, sample_initial_profile


@pytest.fixture
def unit_model():
    return MaterialModel(K1=1.0, K3=1.0)


@pytest.fixture
def small_raw_config():
    """Cheap run configuration: coarse lattices and a short horizon"""
    return {
        "seed_label": "small",
        "horizon": 0.2,
        "grids": {"char_resolution": 32, "n_phys": 17, "dt_phys": 0.05, "n_fd": 65, "n_initial": 129},
        "fixed_point": {"delta": 0.1, "tol": 1e-8},
    }


@pytest.fixture
def small_config(small_raw_config):
    return validate_run_config(small_raw_config)


def make_grid(n_x=65, times=(0.0, 0.5, 1.0), **fields) -> PhysGrid:
    """PhysGrid with zero fields unless given; field values may be scalars or arrays"""
    x = np.linspace(0.0, math.pi, n_x)
    t = np.asarray(times, dtype=float)
    shape = (t.size, x.size)
    values = {name: np.broadcast_to(np.asarray(fields.get(name, 0.0), dtype=float), shape).copy()
              for name in ("theta", "theta_t", "theta_x", "u", "J")}
    return PhysGrid(x=x, t=t, **values)


def make_bundle(grid: PhysGrid, spec: ProblemSpec = None, mode: str = "coupled") -> SolutionBundle:
    spec = spec if spec is not None else ProblemSpec()
    problem = ValidatedProblem(spec=spec, profile=sample_initial_profile(spec.initial, 129),
                               extension=spec.boundary.is_extension)
    window = WindowRecord(float(grid.t[0]), float(grid.t[-1]), 1, 0.0, 0)
    return SolutionBundle(fields=grid, problem=problem, mode=mode, windows=[window])
