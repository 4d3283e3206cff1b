import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import make_bundle, make_grid
from poiseuille_lc import diagnostics
from poiseuille_lc.model import (
    BoundarySpec,
    ConstantPreset,
    InitialData,
    InitialProfile,
    MaterialModel,
    ProblemSpec,
    TrigSeriesPreset,
)
from poiseuille_lc.solver.charwave import build_initial_curve, march


def test_zero_energy():
    bundle = make_bundle(make_grid())
    assert diagnostics.energy(bundle, 0.5) == (0.0, 0.0, 0.0)
    trace = diagnostics.dissipation_report(bundle)
    assert trace.max_residual == 0.0
    assert trace.passed
    assert trace.slack == diagnostics.DEFAULT_SLACK_ABS


def test_kinetic_energy_of_uniform_rotation():
    a = 0.3
    bundle = make_bundle(make_grid(theta_t=a))
    E, B0, Bpi = diagnostics.energy(bundle, 0.0)
    assert E == pytest.approx(0.5 * math.pi * a ** 2)
    assert B0 == 0.0 and Bpi == 0.0


def test_robin_boundary_energy():
    b = 0.6
    n_x = 65
    theta = np.zeros(n_x)
    theta[-1] = b
    spec = ProblemSpec(boundary=BoundarySpec(theta_right=(1.0, 1.0)))
    bundle = make_bundle(make_grid(n_x=n_x, theta=theta), spec)
    _, B0, Bpi = diagnostics.energy(bundle, 1.0)
    assert Bpi == pytest.approx(0.5 * b ** 2)
    assert B0 == 0.0


def test_dissipation_detects_energy_growth():
    times = np.array([0.0, 0.5, 1.0])
    theta_t = np.array([0.1, 0.2, 0.3])[:, None] * np.ones(65)[None, :]
    bundle = make_bundle(make_grid(times=times, theta_t=theta_t))
    trace = diagnostics.dissipation_report(bundle)
    assert not trace.passed
    assert trace.violations == pytest.approx([0.5, 1.0])


def test_dissipation_balances_exact_decay():
    """θ_t = e^{−t}·sin x with J ≡ 0: E + D is conserved up to quadrature error"""
    times = np.linspace(0.0, 1.0, 201)
    x = np.linspace(0.0, math.pi, 65)
    theta_t = np.exp(-times)[:, None] * np.sin(x)[None, :]
    bundle = make_bundle(make_grid(times=times, theta_t=theta_t))
    trace = diagnostics.dissipation_report(bundle, slack_rel=1e-3)
    # E = π/4·e^{−2t} and D = π/4·(1 − e^{−2t})
    assert np.max(np.abs(trace.residual)) < 1e-4
    assert trace.passed


def test_dissipation_uses_level_curve_theta_t_square():
    times = np.linspace(0.0, 1.0, 201)
    x = np.linspace(0.0, math.pi, 65)
    theta_t = np.exp(-times)[:, None] * np.sin(x)[None, :]
    # One-sided values next to a cusp spoil the lattice quadrature
    spoiled = theta_t.copy()
    spoiled[:, 32] += 5.0
    exact = 0.5 * math.pi * np.exp(-2.0 * times)
    grid = replace(make_grid(times=times, theta_t=spoiled), wave_energy=exact, theta_t_square=exact)
    trace = diagnostics.dissipation_report(make_bundle(grid), slack_rel=1e-3)
    assert np.max(np.abs(trace.residual)) < 1e-4
    assert not diagnostics.dissipation_report(make_bundle(replace(grid, theta_t_square=None))).passed


def test_weak_residual_vanishes_on_rest_states():
    assert diagnostics.weak_residual(make_bundle(make_grid())) == (0.0, 0.0)
    r_u, r_theta = diagnostics.weak_residual(make_bundle(make_grid(theta=0.4)))
    assert r_u == 0.0
    assert r_theta == pytest.approx(0.0, abs=1e-14)


def test_weak_residual_sees_inconsistent_fields():
    times = np.linspace(0.0, 1.0, 41)
    r_u, _ = diagnostics.weak_residual(make_bundle(make_grid(times=times, J=1.0, theta=0.0)))
    # Constant J carries no stress gradient
    assert r_u == pytest.approx(0.0, abs=1e-12)
    u = times[:, None] * np.sin(np.linspace(0.0, math.pi, 65))[None, :]
    r_u, _ = diagnostics.weak_residual(make_bundle(make_grid(times=times, u=u)))
    assert r_u > 1e-3


def test_holder_quotient():
    assert diagnostics.holder_quotient(make_grid(theta=0.7)) == 0.0
    x = np.linspace(0.0, math.pi, 65)
    quotient = diagnostics.holder_quotient(make_grid(theta=x))
    assert 0.0 < quotient <= math.sqrt(math.pi) + 1e-12
    assert diagnostics.holder_quotient(make_grid(theta=x), direction="t") == 0.0
    assert diagnostics.holder_quotient(make_grid(theta=x), direction="x") == quotient


def test_char_consistency_of_zero_grid(unit_model):
    x = np.linspace(0.0, math.pi, 129)
    zeros = np.zeros_like(x)
    profile = InitialProfile(x=x, theta=zeros, theta_t=zeros, theta_x=zeros, u=zeros, J=zeros)
    curve, _, _ = build_initial_curve(profile, unit_model, 16)
    metrics = diagnostics.char_consistency(march(curve, unit_model, BoundarySpec(), 0.5), unit_model)
    assert metrics.x_mismatch < 1e-12
    assert metrics.t_mismatch < 1e-12
    assert metrics.p_min == metrics.p_max == 1.0
    assert metrics.q_min == metrics.q_max == 1.0
    assert metrics.cusp_cells == 0 and metrics.degenerate_cells == 0
    assert metrics.as_dict()["dissipation"] == 0.0
    assert metrics.theta_x_max == 0.0


def test_boundary_and_initial_trace_reports():
    bundle = make_bundle(make_grid())
    report = diagnostics.boundary_report(bundle)
    assert set(report) == {"theta_left", "robin_right", "u_left", "u_right"}
    assert all(v == 0.0 for v in report.values())
    assert diagnostics.initial_trace_report(bundle) == {"theta_t_l1": 0.0, "theta_l1": 0.0}


def test_modal_oracle_value(unit_model):
    initial = InitialData(theta0=TrigSeriesPreset(frequency=0.5, sine=[1.0]))
    oracle = diagnostics.ModalOracle.from_problem(initial, unit_model, BoundarySpec())
    assert oracle is not None
    assert oracle(np.array([math.pi]), np.array([0.0, 1.0]))[:, 0] == pytest.approx([1.0, 0.930295], abs=2e-6)


def test_modal_oracle_scope(unit_model):
    initial = InitialData(theta0=TrigSeriesPreset(frequency=0.5, sine=[1.0]))
    assert diagnostics.ModalOracle.from_problem(initial, MaterialModel(K1=1.0, K3=2.0), BoundarySpec()) is None
    assert diagnostics.ModalOracle.from_problem(initial, unit_model, BoundarySpec(theta_right=(1.0, 1.0))) is None
    other = InitialData(theta0=TrigSeriesPreset(sine=[1.0]))
    assert diagnostics.ModalOracle.from_problem(other, unit_model, BoundarySpec()) is None
    rotating = InitialData(theta1=ConstantPreset(value=0.2))
    assert diagnostics.ModalOracle.from_problem(rotating, unit_model, BoundarySpec()) is None
    assert diagnostics.modal_reference(make_bundle(make_grid())) == 0.0


def test_summarize_char_metrics():
    first = {"p_min": 0.9, "p_max": 1.1, "q_min": 0.8, "q_max": 1.0, "cusp_cells": 1, "degenerate_cells": 0,
             "x_mismatch": 1e-4, "t_mismatch": 2e-4, "reflections": 1, "theta_x_max": 3.0}
    second = {**first, "p_min": 0.7, "cusp_cells": 2, "reflections": 2, "theta_x_max": 12.0}
    summary = diagnostics.summarize_char_metrics([first, second])
    assert summary["p_min"] == 0.7
    assert summary["cusp_cells"] == 3
    assert summary["reflections"] == 2
    assert summary["theta_x_max"] == 12.0
    assert diagnostics.summarize_char_metrics([]) == {}
