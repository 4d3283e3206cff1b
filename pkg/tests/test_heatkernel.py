import math

import numpy as np
import pytest
from scipy.integrate import simpson

from poiseuille_lc.errors import NonpositiveTimeGap, WindowUnderResolved
from poiseuille_lc.model import InitialProfile, MaterialModel
from poiseuille_lc.solver import heatkernel
from poiseuille_lc.solver.heatkernel import WeightBank, WindowFields, duhamel_J, reconstruct_u


def profile_from(x, **fields) -> InitialProfile:
    values = {name: np.asarray(fields.get(name, np.zeros_like(x)), dtype=float)
              for name in ("theta", "theta_t", "theta_x", "u", "J")}
    return InitialProfile(x=x, **values)


def window_from(x, times, **fields) -> WindowFields:
    shape = (len(times), len(x))
    values = {name: np.broadcast_to(np.asarray(fields.get(name, 0.0), dtype=float), shape).copy()
              for name in ("theta", "theta_t", "theta_x", "J")}
    return WindowFields(x=x, times=np.asarray(times, dtype=float), **values)


def test_g0_values():
    assert heatkernel.g0(0.3, 1.0 / (4.0 * math.pi), 0.3, 0.0) == pytest.approx(1.0)
    assert heatkernel.g0(2.0, 1.0, 0.0, 0.0) == pytest.approx(0.103777, abs=1e-6)


def test_nonpositive_gap():
    with pytest.raises(NonpositiveTimeGap):
        heatkernel.neumann(1.0, 0.5, 1.0, 0.5)


def test_image_truncation_is_even_and_grows():
    small = heatkernel.image_truncation(0.01)
    large = heatkernel.image_truncation(10.0)
    assert small >= 2 and small % 2 == 0
    assert large > small


def test_green_vanishes_on_boundary():
    xi = np.linspace(0.05, math.pi - 0.05, 40)
    for gap in (1e-3, 0.1, 2.0):
        assert np.max(np.abs(heatkernel.green(0.0, gap, xi, 0.0))) < 1e-10
        assert np.max(np.abs(heatkernel.green(math.pi, gap, xi, 0.0))) < 1e-10


def test_neumann_matches_eigen_expansion():
    x = np.linspace(0.0, math.pi, 9)[:, None]
    xi = np.linspace(0.1, 3.0, 7)[None, :]
    images = heatkernel.neumann(x, 0.5, xi, 0.0)
    spectral = heatkernel.spectral_neumann(x, 0.5, xi, 0.0)
    assert np.allclose(images, spectral, atol=1e-9)


def test_neumann_long_time_limit():
    x = np.linspace(0.0, math.pi, 9)
    values = heatkernel.neumann(x, 10.0, 1.0, 0.0)
    assert np.allclose(values, 1.0 / math.pi, atol=1e-4)


def test_dneumann_dxi_symmetric_point():
    for gap in (0.01, 0.3, 3.0):
        assert abs(heatkernel.dneumann_dxi(math.pi / 2, gap, math.pi / 2, 0.0)) < 1e-10


def test_kernel_derivative_identity():
    rng = np.random.default_rng(7)
    x = rng.uniform(0.0, math.pi, 50)
    xi = rng.uniform(0.0, math.pi, 50)
    gap = rng.uniform(1e-3, 3.0, 50)
    residual = heatkernel.dgreen_dx(x, gap, xi, 0.0) + heatkernel.dneumann_dxi(x, gap, xi, 0.0)
    assert np.max(np.abs(residual)) < 1e-10


def test_weight_bank_conserves_mass():
    x = np.linspace(0.0, math.pi, 17)
    bank = WeightBank(x, np.linspace(0.0, math.pi, 65), "neumann")
    for gap in (1e-4, 0.05, 1.0):
        assert np.allclose(bank.weights(gap).sum(axis=1), 1.0, atol=1e-10)


def test_weight_bank_integrates_linear_data_exactly():
    x = np.linspace(0.0, math.pi, 9)
    xi = np.linspace(0.0, math.pi, 257)
    bank = WeightBank(x, xi, "green")
    f = 2.0 * xi + 1.0
    nodes, weights = np.polynomial.legendre.leggauss(400)
    nodes = 0.5 * math.pi * (nodes + 1.0)
    weights = 0.5 * math.pi * weights
    direct = heatkernel.green(x[:, None], 0.2, nodes[None, :], 0.0) @ (weights * (2.0 * nodes + 1.0))
    assert np.allclose(bank.weights(0.2) @ f, direct, atol=1e-9)


def test_heat_decay_of_velocity():
    x = np.linspace(0.0, math.pi, 33)
    seam = profile_from(np.linspace(0.0, math.pi, 2049), u=np.sin(np.linspace(0.0, math.pi, 2049)))
    times = np.linspace(0.0, 0.5, 11)
    u = reconstruct_u(window_from(x, times), seam, MaterialModel(), "nonslip")
    expected = np.exp(-times)[:, None] * np.sin(x)[None, :]
    assert np.max(np.abs(u - expected)) < 1e-5


def test_zero_data_gives_zero_map():
    x = np.linspace(0.0, math.pi, 17)
    times = np.linspace(0.0, 0.2, 5)
    seam = profile_from(x)
    for u_side in ("nonslip", "stress_free"):
        assert np.all(duhamel_J(window_from(x, times), seam, MaterialModel(), u_side) == 0.0)
        assert np.all(reconstruct_u(window_from(x, times), seam, MaterialModel(), u_side) == 0.0)


def test_equilibrium_gives_zero_map():
    x = np.linspace(0.0, math.pi, 17)
    times = np.linspace(0.0, 0.2, 5)
    model = MaterialModel(K1=1.0, K3=2.0)
    seam = profile_from(x, theta=np.full_like(x, 0.4))
    fields = window_from(x, times, theta=0.4)
    assert np.max(np.abs(duhamel_J(fields, seam, model, "nonslip"))) < 1e-12
    assert np.max(np.abs(reconstruct_u(fields, seam, model, "stress_free"))) < 1e-12


def test_stress_free_velocity_keeps_its_mean():
    x = np.linspace(0.0, math.pi, 33)
    times = np.linspace(0.0, 0.3, 7)
    seam = profile_from(x, u=0.2 + 0.1 * np.cos(x), theta_t=0.1 * np.sin(x), J=0.05 * np.sin(x))
    fields = window_from(x, times, theta=0.2 * np.sin(0.5 * x), theta_x=0.1 * np.cos(0.5 * x),
                         theta_t=0.1 * np.sin(x), J=0.05 * np.sin(x))
    u = reconstruct_u(fields, seam, MaterialModel(K1=1.0, K3=1.5), "stress_free")
    means = simpson(u, x=x, axis=1)
    assert means == pytest.approx(0.2 * math.pi, abs=1e-12)


def test_insulated_decay_of_constant_J():
    """J_t = J_xx − J with J0 ≡ 1 decays like e^{−t}"""
    x = np.linspace(0.0, math.pi, 17)
    times = np.linspace(0.0, 0.2, 5)
    seam = profile_from(x, J=np.ones_like(x))
    J_prev = np.exp(-times)[:, None] * np.ones_like(x)[None, :]
    J_next = duhamel_J(window_from(x, times, J=J_prev), seam, MaterialModel(), "nonslip")
    assert np.max(np.abs(J_next - J_prev)) < 1e-3


@pytest.mark.parametrize(
    "u_side, mode",
    [("nonslip", np.cos), ("stress_free", np.sin)],
)
def test_manufactured_fixed_point(u_side, mode):
    """e^{−2t}cos x (insulated) and e^{−2t}sin x (absorbing) are fixed points when θ ≡ 0"""
    x = np.linspace(0.0, math.pi, 129)
    times = np.linspace(0.0, 0.2, 9)
    seam = profile_from(x, J=mode(x))
    J = np.exp(-2.0 * times)[:, None] * mode(x)[None, :]
    J_next = duhamel_J(window_from(x, times, J=J), seam, MaterialModel(), u_side, n_s=32)
    assert np.max(np.abs(J_next - J)) < 2e-3


def test_boundary_traces_of_sine(unit_model):
    x = np.linspace(0.0, math.pi, 129)
    times = np.array([0.0, 0.1])
    fields = window_from(x, times, theta=np.sin(x))
    left, right = heatkernel.boundary_traces(fields, unit_model)
    assert np.allclose(left, 1.0, atol=1e-3)
    assert np.allclose(right, -1.0, atol=1e-3)


def test_s_grid_minimum():
    x = np.linspace(0.0, math.pi, 9)
    with pytest.raises(WindowUnderResolved):
        duhamel_J(window_from(x, [0.0, 0.1]), profile_from(x), MaterialModel(), "nonslip", n_s=4)
