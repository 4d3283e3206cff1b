import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy.integrate import quad

from poiseuille_lc.errors import CompatibilityViolation, InvalidCoefficients
from poiseuille_lc.model import (
    BoundarySpec,
    ConstantPreset,
    InitialData,
    MaterialModel,
    PolynomialPreset,
    ProblemSpec,
    TablePreset,
    TrigSeriesPreset,
    compress,
    decompress,
    fields_from_riemann,
    riemann_from_fields,
    sample_initial_profile,
    validate,
    wave_speed,
    wrap_angle,
)


@pytest.mark.parametrize(
    "K1, K3, theta, c, cprime",
    [
        (1.0, 1.0, 0.7, 1.0, 0.0),
        (1.0, 4.0, math.pi / 2, 2.0, 0.0),
        (1.0, 2.0, math.pi / 4, math.sqrt(1.5), 0.5 / math.sqrt(1.5)),
    ],
)
def test_wave_speed(K1, K3, theta, c, cprime):
    got_c, got_cprime = wave_speed(theta, MaterialModel(K1=K1, K3=K3))
    assert got_c == pytest.approx(c, abs=1e-12)
    assert got_cprime == pytest.approx(cprime, abs=1e-12)


def test_speed_bounds():
    model = MaterialModel(K1=1.0, K3=4.0)
    theta = np.linspace(-math.pi, math.pi, 1001)
    c, cprime = wave_speed(theta, model)
    assert model.C_L == 1.0 and model.C_U == 2.0
    assert np.all(c >= model.C_L - 1e-12) and np.all(c <= model.C_U + 1e-12)
    assert np.max(np.abs(cprime)) <= model.cprime_max + 1e-9
    assert model.cprime_max <= model.C1


def test_material_rejects_nonpositive():
    with pytest.raises(ValidationError):
        MaterialModel(K1=0.0, K3=1.0)


@pytest.mark.parametrize("K1, K3", [(1.0, 1.0), (1.0, 3.0), (2.5, 0.5)])
def test_boundary_integral_matches_quadrature(K1, K3):
    model = MaterialModel(K1=K1, K3=K3)
    for theta in (-1.2, 0.3, 2.0):
        expected, _ = quad(lambda s: float(model.speed(s)) ** 2 * s, 0.0, theta)
        assert float(model.boundary_integral(theta)) == pytest.approx(expected, rel=1e-10, abs=1e-12)


@pytest.mark.parametrize(
    "theta_t, theta_x, R, S",
    [(0.0, 0.0, 0.0, 0.0), (1.0, 0.0, 1.0, 1.0), (0.0, 2.0, 2.0, -2.0)],
)
def test_riemann_from_fields(unit_model, theta_t, theta_x, R, S):
    assert riemann_from_fields(theta_t, theta_x, 0.3, unit_model) == pytest.approx((R, S))


def test_fields_from_riemann_inverts():
    model = MaterialModel(K1=1.0, K3=2.0)
    theta = np.linspace(0.0, 1.0, 5)
    R, S = riemann_from_fields(np.full(5, 0.4), np.linspace(-1.0, 1.0, 5), theta, model)
    theta_t, theta_x = fields_from_riemann(R, S, theta, model)
    assert np.allclose(theta_t, 0.4)
    assert np.allclose(theta_x, np.linspace(-1.0, 1.0, 5))


@pytest.mark.parametrize("R, w", [(0.0, 0.0), (1.0, math.pi / 2), (math.tan(0.4), 0.8)])
def test_compress(R, w):
    assert compress(R, 0.0)[0] == pytest.approx(w, abs=1e-14)


def test_decompress_tags_cusps():
    R, S = decompress(np.array([0.8, math.pi]), np.array([-math.pi + 1e-9, 0.0]), tol=1e-6)
    assert list(R.cusp) == [False, True]
    assert list(S.cusp) == [True, False]
    assert R.value[0] == pytest.approx(math.tan(0.4))


def test_wrap_angle():
    assert float(wrap_angle(1.5 * math.pi)) == pytest.approx(-0.5 * math.pi)
    assert float(wrap_angle(-math.pi)) == pytest.approx(math.pi)


def test_presets():
    x = np.linspace(0.0, math.pi, 7)
    trig = TrigSeriesPreset(frequency=0.5, sine=[1.0], cosine=[0.0, 2.0])
    assert np.allclose(trig.value_at(x), np.sin(0.5 * x) + 2.0 * np.cos(x))
    assert np.allclose(trig.derivative_at(x), 0.5 * np.cos(0.5 * x) - 2.0 * np.sin(x))
    poly = PolynomialPreset(coefficients=[0.0, 1.0, 3.0])
    assert np.allclose(poly.derivative_at(x), 1.0 + 6.0 * x)
    table = TablePreset(xs=[0.0, 1.0, math.pi], ys=[0.0, 2.0, 0.0])
    assert float(table.value_at(0.5)) == pytest.approx(1.0)
    assert float(table.derivative_at(0.5)) == pytest.approx(2.0)


def test_table_must_cover_interval():
    with pytest.raises(ValidationError):
        TablePreset(xs=[0.0, 1.0], ys=[0.0, 1.0])


def test_validate_zero_data():
    problem = validate(ProblemSpec(), 65)
    assert not problem.extension
    assert np.all(problem.profile.J == 0.0)
    assert problem.warnings == []


def test_validate_robin_with_sine_data():
    spec = ProblemSpec(
        boundary=BoundarySpec(theta_right=(1.0, 1.0)),
        initial=InitialData(theta0=TrigSeriesPreset(sine=[1.0])),
    )
    problem = validate(spec, 65)
    assert problem.boundary.iota == 1.0
    # θ0'(π) = −1 breaks the natural corner condition
    assert any("Robin" in w for w in problem.warnings)


def test_validate_nonslip_violation():
    spec = ProblemSpec(initial=InitialData(u0=PolynomialPreset(coefficients=[0.0, 1.0])))
    with pytest.raises(CompatibilityViolation) as excinfo:
        validate(spec, 65)
    violations = excinfo.value.violations
    assert [v["endpoint"] for v in violations] == ["pi"]
    assert violations[0]["residual"] == pytest.approx(math.pi)
    assert excinfo.value.exit_code == 2


def test_validate_dirichlet_violation():
    spec = ProblemSpec(initial=InitialData(theta0=ConstantPreset(value=0.2)))
    with pytest.raises(CompatibilityViolation, match="theta0\\(0\\)=0"):
        validate(spec, 65)


@pytest.mark.parametrize("pair", [(-1.0, 1.0), (0.0, 0.0)])
def test_invalid_coefficients(pair):
    with pytest.raises(InvalidCoefficients):
        validate(ProblemSpec(boundary=BoundarySpec(theta_right=pair)), 65)


def test_extension_flag():
    boundary = BoundarySpec(theta_left=(0.0, 1.0), theta_right=(0.0, 1.0))
    assert boundary.is_extension
    assert not BoundarySpec().is_extension


def test_sample_initial_profile_builds_J0():
    initial = InitialData(
        u0=TrigSeriesPreset(sine=[0.5]),
        theta1=ConstantPreset(value=0.25),
    )
    profile = sample_initial_profile(initial, 33)
    assert np.allclose(profile.J, 0.5 * np.cos(profile.x) + 0.25)
    resampled = profile.resample(np.linspace(0.0, math.pi, 5))
    assert resampled.theta_t == pytest.approx(np.full(5, 0.25))
