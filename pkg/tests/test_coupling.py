import math
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import simpson

from poiseuille_lc.commands.simulate import run_pipeline
from poiseuille_lc.config import apply_override, load_run_config, validate_run_config
from poiseuille_lc.diagnostics import dissipation_report, summarize_char_metrics, weak_residual
from poiseuille_lc.errors import WindowCollapsed
from poiseuille_lc.fields import PhysGrid, SolutionBundle
from poiseuille_lc.model import ProblemSpec, validate
from poiseuille_lc.solver import coupling

CONFIG_DIR = Path(__file__).parent.parent / "configs"


SMOOTH_PROBLEM = {
    "material": {"K1": 1.0, "K3": 1.2},
    "boundary": {"u_side": "nonslip", "theta_left": [1.0, 0.0], "theta_right": [1.0, 1.0]},
    "initial": {
        "theta0": {"kind": "trig", "sine": [0.1]},
        "u0": {"kind": "trig", "sine": [0.1]},
    },
}

# J0 = u0_x + θ1 vanishes at both walls
SMOOTH_STRESS_FREE = {
    "material": {"K1": 1.0, "K3": 1.2},
    "boundary": {"u_side": "stress_free", "theta_left": [1.0, 0.0], "theta_right": [1.0, 1.0]},
    "initial": {
        "theta0": {"kind": "trig", "sine": [0.1]},
        "u0": {"kind": "trig", "cosine": [0.1]},
    },
}

SMOOTH = {"nonslip": SMOOTH_PROBLEM, "stress_free": SMOOTH_STRESS_FREE}

# (char_resolution, n_phys, dt_phys) per refinement level
LEVELS = [(128, 17, 0.05), (256, 33, 0.025), (512, 65, 0.0125)]


def test_output_times():
    times = coupling.output_times(1.0, 0.3)
    assert times == pytest.approx([0.0, 0.25, 0.5, 0.75, 1.0])
    assert coupling.output_times(0.2, 0.05).size == 5


def test_zero_data_converges_at_once(small_config):
    problem = validate(small_config.problem, small_config.grids.n_initial)
    bundle = coupling.extend_to_horizon(problem, small_config)
    assert bundle.mode == "coupled"
    assert len(bundle.windows) == 2
    assert all(w.iterations == 1 and w.halvings == 0 for w in bundle.windows)
    assert bundle.horizon == pytest.approx(0.2)
    for name in ("theta", "theta_t", "theta_x", "u", "J"):
        assert np.all(getattr(bundle.fields, name) == 0.0)
    assert coupling.reconcile_J(bundle).sup == 0.0
    assert bundle.char_metrics[0]["p_min"] == pytest.approx(1.0)


def test_equilibrium_is_a_fixed_point(small_raw_config):
    raw = apply_override(small_raw_config, "problem", {
        "material": {"K1": 1.0, "K3": 2.0},
        "boundary": {"theta_left": [0.0, 1.0], "theta_right": [0.0, 1.0]},
        "initial": {"theta0": {"kind": "constant", "value": 0.4}},
    })
    config = validate_run_config(raw)
    problem = validate(config.problem, config.grids.n_initial)
    assert problem.extension
    bundle = coupling.solve(problem, config)
    assert np.allclose(bundle.fields.theta, 0.4, atol=1e-12)
    assert np.allclose(bundle.fields.J, 0.0, atol=1e-10)
    assert np.allclose(bundle.fields.u, 0.0, atol=1e-10)


def test_wave_only_zero_data(small_raw_config):
    config = validate_run_config({**small_raw_config, "mode": "wave-only"})
    bundle = coupling.solve(validate(config.problem, config.grids.n_initial), config)
    assert bundle.mode == "wave-only"
    assert len(bundle.windows) == 1
    assert np.all(bundle.fields.u == 0.0)
    assert np.all(bundle.fields.theta == 0.0)


def test_fd_mode(small_raw_config):
    config = validate_run_config({**small_raw_config, "mode": "fd-only"})
    bundle = coupling.solve(validate(config.problem, config.grids.n_initial), config)
    assert bundle.mode == "fd-only"
    assert bundle.fields.x.size == config.grids.n_fd
    assert bundle.fields.t == pytest.approx(coupling.output_times(0.2, 0.05))


def test_window_collapse_is_stamped(small_raw_config):
    raw = apply_override(small_raw_config, "problem", SMOOTH_PROBLEM)
    raw = apply_override(raw, "fixed_point", {"delta": 0.1, "tol": 1e-300, "max_iter": 1, "max_halvings": 0})
    config = validate_run_config(raw)
    problem = validate(config.problem, config.grids.n_initial)
    with pytest.raises(WindowCollapsed) as excinfo:
        coupling.extend_to_horizon(problem, config)
    assert excinfo.value.time == pytest.approx(0.0)
    assert "WindowCollapsed in coupling at t=0" in excinfo.value.describe()


def smooth_config(raw, u_side, level=(512, 65, 0.05)):
    resolution, n_phys, dt_phys = level
    raw = apply_override(raw, "problem", SMOOTH[u_side])
    raw = apply_override(raw, "horizon", 0.5)
    raw = apply_override(raw, "grids", {"char_resolution": resolution, "n_phys": n_phys, "dt_phys": dt_phys,
                                        "n_fd": 257, "n_initial": 2049})
    return validate_run_config(raw)


def test_stress_free_run_keeps_velocity_mean(small_raw_config):
    config = validate_run_config(apply_override(small_raw_config, "problem", SMOOTH_STRESS_FREE))
    bundle = coupling.extend_to_horizon(validate(config.problem, config.grids.n_initial), config)
    means = simpson(bundle.fields.u, x=bundle.fields.x, axis=1)
    assert means == pytest.approx(means[0], abs=1e-12)
    assert np.max(np.abs(bundle.fields.J[:, [0, -1]])) < 1e-10


def test_reconcile_is_second_order_on_exact_fields():
    x = np.linspace(0.0, math.pi, 33)
    times = np.linspace(0.0, 0.5, 6)
    decay = np.exp(-times)[:, None]
    u = decay * np.sin(x)[None, :]
    theta_t = decay * (0.3 * np.cos(2.0 * x))[None, :]
    J = decay * (np.cos(x) + 0.3 * np.cos(2.0 * x))[None, :]
    grids = [PhysGrid(x=x[::step], t=times, theta=np.zeros_like(u[:, ::step]), theta_t=theta_t[:, ::step],
                      theta_x=np.zeros_like(u[:, ::step]), u=u[:, ::step], J=J[:, ::step]) for step in (4, 2, 1)]
    problem = validate(ProblemSpec(), 129)
    l2 = [coupling.reconcile_J(SolutionBundle(fields=g, problem=problem, mode="coupled")).l2 for g in grids]
    assert l2[0] / l2[1] > 3.5 and l2[1] / l2[2] > 3.5


@pytest.mark.slow
@pytest.mark.parametrize("u_side", ["nonslip", "stress_free"])
def test_smooth_data_matches_fd_oracle(small_raw_config, u_side):
    config = smooth_config(small_raw_config, u_side)
    problem = validate(config.problem, config.grids.n_initial)
    bundle = coupling.extend_to_horizon(problem, config)
    assert coupling.fd_crosscheck(bundle, config) <= 5e-3
    assert coupling.reconcile_J(bundle).l2 <= bundle.fields.dx
    trace = dissipation_report(bundle)
    assert trace.slack == max(1e-6 * trace.E0, 1e-8)
    assert trace.passed


@pytest.mark.slow
@pytest.mark.parametrize("u_side", ["nonslip", "stress_free"])
def test_smooth_refinement_study(small_raw_config, u_side):
    reconcile, weak, pq = [], [], []
    for level in LEVELS:
        config = smooth_config(small_raw_config, u_side, level)
        bundle = coupling.extend_to_horizon(validate(config.problem, config.grids.n_initial), config)
        assert dissipation_report(bundle).passed
        reconcile.append(coupling.reconcile_J(bundle).l2)
        weak.append(max(weak_residual(bundle, config.diagnostics.test_family_size)))
        char = summarize_char_metrics(bundle.char_metrics)
        assert char["p_min"] > 0 and char["q_min"] > 0
        pq.append([char["p_min"], char["p_max"], char["q_min"], char["q_max"]])

    assert reconcile[0] / reconcile[1] >= 1.7
    assert reconcile[1] / reconcile[2] >= 1.7
    order = math.log2(weak[0] / weak[2]) / 2.0
    assert order >= 1.0
    finest = np.asarray(pq[-1])
    for coarse in pq[:-1]:
        assert np.all(np.abs(np.asarray(coarse) - finest) <= 0.2 * finest)


@pytest.mark.slow
@pytest.mark.parametrize("level", LEVELS)
def test_small_stress_free_bump_dissipates(level):
    resolution, n_phys, dt_phys = level
    config = load_run_config(CONFIG_DIR / "cusp.json", {
        "problem.initial.theta1.amplitude": 0.1,
        "horizon": 0.5,
        "grids.char_resolution": resolution,
        "grids.n_phys": n_phys,
        "grids.dt_phys": dt_phys,
    })
    bundle = coupling.extend_to_horizon(validate(config.problem, config.grids.n_initial), config)
    trace = dissipation_report(bundle)
    assert trace.slack == max(1e-6 * trace.E0, 1e-8)
    assert trace.passed


@pytest.mark.slow
def test_cusp_run_concentrates_without_losing_holder_bound():
    theta_x_max, holder = [], []
    for resolution, n_phys in ((256, 33), (1024, 129)):
        config = load_run_config(CONFIG_DIR / "cusp.json", {"grids.char_resolution": resolution, "grids.n_phys": n_phys})
        bundle, trace, summary = run_pipeline(config)
        assert trace.passed
        assert summary["flags"]["pq_positive"]
        assert summary["flags"]["holder"]
        theta_x_max.append(summary["char"]["theta_x_max"])
        holder.append(summary["holder_quotient"])
    assert theta_x_max[1] >= 4.0 * theta_x_max[0]
    assert holder[1] <= 1.1 * holder[0]
