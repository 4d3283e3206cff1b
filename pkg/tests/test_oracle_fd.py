import math

import numpy as np
import pytest

from poiseuille_lc.diagnostics import ModalOracle
from poiseuille_lc.errors import CFLViolation
from poiseuille_lc.model import (
    BoundarySpec,
    ConstantPreset,
    InitialData,
    MaterialModel,
    TrigSeriesPreset,
    sample_initial_profile,
)
from poiseuille_lc.solver import oracle_fd


def test_cfl_limit(unit_model):
    dx = math.pi / 64
    oracle_fd.check_cfl(0.9 * dx - 1e-12, dx, unit_model)
    with pytest.raises(CFLViolation):
        oracle_fd.check_cfl(dx, dx, unit_model)
    with pytest.raises(CFLViolation):
        oracle_fd.check_cfl(0.5 * dx, dx, MaterialModel(K1=1.0, K3=4.0))


def test_time_step_divides_output_interval(unit_model):
    dx = math.pi / 128
    dt = oracle_fd.resolve_time_step(dx, 0.05, unit_model)
    assert dt <= 0.5 * dx
    assert 0.05 / dt == pytest.approx(round(0.05 / dt))
    with pytest.raises(CFLViolation):
        oracle_fd.resolve_time_step(dx, 0.05, unit_model, dt=dx)


def test_zero_data_stays_zero(unit_model):
    profile = sample_initial_profile(InitialData(), 129)
    grid = oracle_fd.run(profile, unit_model, BoundarySpec(), 0.5, 65, 0.1)
    assert grid.t == pytest.approx([0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    for name in ("theta", "theta_t", "theta_x", "u", "J"):
        assert np.all(getattr(grid, name) == 0.0)


def test_equilibrium_stays_constant():
    model = MaterialModel(K1=1.0, K3=2.0)
    boundary = BoundarySpec(theta_left=(0.0, 1.0), theta_right=(0.0, 1.0))
    profile = sample_initial_profile(InitialData(theta0=ConstantPreset(value=0.4)), 129)
    grid = oracle_fd.run(profile, model, boundary, 0.5, 65, 0.1)
    assert np.allclose(grid.theta, 0.4, atol=1e-13)
    assert np.allclose(grid.u, 0.0, atol=1e-13)
    assert np.allclose(grid.J, 0.0, atol=1e-12)


def test_modal_wave_only(unit_model):
    initial = InitialData(theta0=TrigSeriesPreset(frequency=0.5, sine=[1.0]))
    profile = sample_initial_profile(initial, 513)
    grid = oracle_fd.run(profile, unit_model, BoundarySpec(), 1.0, 257, 0.05, couple_u=False)
    reference = ModalOracle.from_problem(initial, unit_model, BoundarySpec())
    assert grid.theta[-1, -1] == pytest.approx(0.93029, abs=5e-3)
    assert np.max(np.abs(grid.theta - reference(grid.x, grid.t))) < 5e-3
    # u-equation switched off: J is θ_t
    assert np.all(grid.u == 0.0)
    assert np.allclose(grid.J, grid.theta_t)


def test_nonslip_velocity_keeps_wall_values(unit_model):
    initial = InitialData(theta0=TrigSeriesPreset(sine=[0.1]), u0=TrigSeriesPreset(sine=[0.1]))
    profile = sample_initial_profile(initial, 257)
    grid = oracle_fd.run(profile, unit_model, BoundarySpec(theta_right=(1.0, 1.0)), 0.5, 129, 0.05)
    assert np.max(np.abs(grid.u[:, [0, -1]])) < 1e-14
    assert np.all(grid.theta[:, 0] == 0.0)
    assert np.all(np.isfinite(grid.J))
