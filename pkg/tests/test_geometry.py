import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import ellipe

from serrinlab import geometry
from serrinlab.errors import InvalidDomainError
from serrinlab.geometry import EllipseRadius, StarDomain, TrigRadius


# independent oracles ---------------------------------------------------------


def ellipse_perimeter(a, b):
    a, b = max(a, b), min(a, b)
    return 4 * a * ellipe(1 - (b / a) ** 2)


def prolate_area(a, b):
    """Spheroid with polar semi-axis a > equatorial semi-axis b."""
    e = math.sqrt(1 - (b / a) ** 2)
    return 2 * math.pi * b * b * (1 + a / (b * e) * math.asin(e))


def arclength_oracle(f, df):
    val, _ = quad(lambda t: math.hypot(f(t), df(t)), 0, 2 * math.pi, limit=400, epsabs=1e-13)
    return val


# measures ----------------------------------------------------------------------


def test_unit_disk_measures():
    d = StarDomain.ball(2)
    assert geometry.volume(d) == pytest.approx(math.pi, rel=1e-14)
    assert geometry.surface_measure(d) == pytest.approx(2 * math.pi, rel=1e-14)
    assert geometry.h0(d) == pytest.approx(1.0, rel=1e-14)


def test_sphere_radius_two():
    d = StarDomain.ball(3, 2.0)
    assert geometry.volume(d) == pytest.approx(32 * math.pi / 3, rel=1e-12)
    assert geometry.surface_measure(d) == pytest.approx(16 * math.pi, rel=1e-12)
    assert geometry.h0(d) == pytest.approx(0.5, abs=1e-10)


def test_ellipse_against_elliptic_integral():
    d = StarDomain.ellipse(2.0, 1.0)
    assert abs(geometry.volume(d) - 2 * math.pi) < 1e-10
    G = geometry.surface_measure(d)
    assert G == pytest.approx(ellipse_perimeter(2.0, 1.0), rel=1e-12)
    assert G == pytest.approx(9.688448, abs=1e-6)
    assert geometry.h0(d) == pytest.approx(G / (4 * math.pi), rel=1e-12)
    # the published five-digit figure 0.77095 is a truncation; the exact quotient is 0.770982
    assert geometry.h0(d) == pytest.approx(0.77095, abs=1e-4)
    assert geometry.isoperimetric_deficit(d) == pytest.approx(G**2 / (4 * math.pi) - 2 * math.pi, rel=1e-12)
    assert geometry.isoperimetric_deficit(d) == pytest.approx(1.186, abs=1e-3)


def test_spheroid_against_closed_form():
    d = StarDomain(3, (0.0, 0.0, 0.0), EllipseRadius(1.6, 1.0))
    assert geometry.volume(d) == pytest.approx(4 / 3 * math.pi * 1.6, rel=1e-9)
    assert geometry.surface_measure(d) == pytest.approx(prolate_area(1.6, 1.0), rel=1e-9)


def test_trig_domain_perimeter_against_adaptive_quadrature():
    d = StarDomain.from_coeffs(2, [1.0, 0.0, 0.2, 0.05], [0.0, 0.1])
    rho = lambda t: 1 + 0.2 * math.cos(2 * t) + 0.05 * math.cos(3 * t) + 0.1 * math.sin(t)
    drho = lambda t: -0.4 * math.sin(2 * t) - 0.15 * math.sin(3 * t) + 0.1 * math.cos(t)
    assert geometry.surface_measure(d) == pytest.approx(arclength_oracle(rho, drho), rel=1e-11)


def test_off_center_ball_measures_do_not_depend_on_center():
    d = StarDomain.ball(2, 1.5, center=(3.0, -1.0))
    assert geometry.volume(d) == pytest.approx(math.pi * 2.25, rel=1e-13)
    samples = geometry.boundary_samples(d, 64)
    assert np.allclose(np.linalg.norm(samples.points - np.array([3.0, -1.0]), axis=1), 1.5)


# boundary samples ---------------------------------------------------------------


def test_circle_samples():
    bs = geometry.boundary_samples(StarDomain.ball(2, 2.0), 64)
    assert np.allclose(bs.mean_curvature, 0.5, atol=1e-13)
    assert np.allclose(bs.normals, bs.points / 2.0, atol=1e-13)
    assert np.all(bs.weights > 0)


def test_sphere_samples():
    bs = geometry.boundary_samples(StarDomain.ball(3, 3.0), 64)
    assert np.allclose(bs.mean_curvature, 1 / 3, atol=1e-12)
    assert bs.weights.sum() == pytest.approx(36 * math.pi, rel=1e-12)
    assert np.allclose(np.linalg.norm(bs.normals, axis=1), 1.0, atol=1e-12)


def test_ellipse_vertex_curvature():
    bs = geometry.boundary_samples(StarDomain.ellipse(2.0, 1.0), 64)
    assert bs.angles[0] == 0.0
    assert bs.mean_curvature[0] == pytest.approx(2.0, rel=1e-12)
    # co-vertex: b / a^2
    j = int(np.argmin(np.abs(bs.angles - math.pi / 2)))
    assert bs.mean_curvature[j] == pytest.approx(0.25, rel=1e-12)


def test_spheroid_principal_curvatures_at_pole():
    # pole of a prolate spheroid (polar a, equatorial b): both curvatures a / b^2
    bs = geometry.boundary_samples(StarDomain(3, (0.0, 0.0, 0.0), EllipseRadius(1.6, 1.0)), 32)
    assert bs.mean_curvature[0] == pytest.approx(1.6, rel=1e-10)
    # equator: meridian curvature b / a^2, parallel curvature 1 / b
    j = len(bs) // 2
    assert bs.mean_curvature[j] == pytest.approx(0.5 * (1.0 / 1.6**2 + 1.0), rel=1e-10)


def test_boundary_samples_rejects_coarse_resolution():
    with pytest.raises(ValueError):
        geometry.boundary_samples(StarDomain.ball(2), 8)


def test_sample_records_and_csv(tmp_path):
    bs = geometry.boundary_samples(StarDomain.ellipse(1.5, 1.0), 32)
    first = bs[0]
    assert first.support == pytest.approx(1.5)
    assert len(list(bs)) == len(bs)
    path = tmp_path / "b.csv"
    bs.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "angle,x_x,x_y,nu_x,nu_y,H,w"
    assert len(lines) == len(bs) + 1


# identities --------------------------------------------------------------------


def observed_orders(values):
    """log2 ratios of successive halvings, ignoring pairs already at round-off."""
    return [math.log2(a / b) for a, b in zip(values, values[1:]) if b > 1e-13]


def test_minkowski_refinement_order():
    # trapezoid on periodic data converges spectrally; the perturbed disk hits round-off by n=32
    for d in (StarDomain.from_coeffs(2, [1.0, 0.0, 0.2]), StarDomain.ellipse(2.0, 1.0)):
        res = [abs(geometry.minkowski_residual(d, n)) for n in (16, 32, 64, 128)]
        orders = observed_orders(res)
        assert orders and min(orders) >= 2
        assert res[-1] < 1e-12


def test_ellipse_minkowski_at_1024():
    d = StarDomain.ellipse(2.0, 1.0)
    assert abs(geometry.minkowski_residual(d, 1024)) <= 1e-6 * geometry.surface_measure(d)


def test_minkowski_off_center_sphere():
    d = StarDomain.ball(3, 1.3, center=(0.2, -0.1, 0.4))
    assert abs(geometry.minkowski_residual(d, 256)) < 1e-12


def test_perturbed_disk_deficit_positive():
    assert geometry.isoperimetric_deficit(StarDomain.from_coeffs(2, [1.0, 0, 0, 0.1])) > 0


def test_support_minimum():
    assert geometry.star_support_min(StarDomain.ball(2, 1.7)) == pytest.approx(1.7)
    assert geometry.star_support_min(StarDomain.ellipse(2.0, 1.0)) > 0
    assert geometry.star_support_min(StarDomain.from_coeffs(2, [1.0, 0.9])) >= 0


def test_curvature_gap_signs():
    lo, hi = geometry.curvature_gap(StarDomain.ball(2, 3.0))
    assert abs(lo) < 1e-12 and abs(hi) < 1e-12
    lo, hi = geometry.curvature_gap(StarDomain.ellipse(2.0, 1.0))
    assert lo < 0 < hi


def test_unit_sphere_measure():
    assert geometry.unit_sphere_measure(2) == pytest.approx(2 * math.pi)
    assert geometry.unit_sphere_measure(3) == pytest.approx(4 * math.pi)
    for N in (2, 3):
        d = StarDomain.ball(N, 1.7)
        assert geometry.surface_measure(d) == pytest.approx(geometry.unit_sphere_measure(N) * 1.7 ** (N - 1))


# validation and config ---------------------------------------------------------------


@pytest.mark.parametrize(
    "cfg",
    [
        {"dimension": 2, "cos_coeffs": [-1.0]},
        {"dimension": 2, "cos_coeffs": [0.5, 1.0]},
        {"dimension": 4, "cos_coeffs": [1.0]},
        {"dimension": 3, "cos_coeffs": [1.0], "sin_coeffs": [0.0, 0.1]},
        {"dimension": 2, "cos_coeffs": []},
        {"dimension": 2},
        {"dimension": 2, "cos_coeffs": [1.0], "center": [0.0]},
        {"dimension": 2, "cos_coeffs": [float("nan")]},
    ],
)
def test_invalid_configs(cfg):
    with pytest.raises(InvalidDomainError):
        StarDomain.from_config(cfg)


def test_config_round_trip(tmp_path):
    import json

    d = StarDomain.from_coeffs(2, [1.0, 0.1, 0.05], [0.0, 0.02], center=(0.5, 0.0))
    path = tmp_path / "d.json"
    path.write_text(json.dumps(d.to_config()))
    assert StarDomain.load(path) == d
    e = StarDomain.ellipse(1.5, 1.0)
    assert StarDomain.from_config(e.to_config()) == e


def test_load_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    with pytest.raises(InvalidDomainError):
        StarDomain.load(bad)
    with pytest.raises(InvalidDomainError):
        StarDomain.load(tmp_path / "missing.json")


def test_perturbed_trig_domain_adds_coefficients():
    d = StarDomain.from_coeffs(3, [1.0, 0.0, 0.1]).perturbed(TrigRadius((0.0, 0.0, 1.0), ()), 0.01)
    assert d.radius.cos_coeffs[2] == pytest.approx(0.11)


# properties ----------------------------------------------------------------------------

coeff = st.floats(-0.06, 0.06, allow_nan=False)


@st.composite
def trig_domains(draw, dimension=None):
    N = draw(st.sampled_from([2, 3])) if dimension is None else dimension
    k = draw(st.integers(1, 5))
    cos = [1.0] + [draw(coeff) for _ in range(k)]
    sin = [0.0] + [draw(coeff) for _ in range(k)] if N == 2 else []
    return StarDomain.from_coeffs(N, cos, sin)


@given(trig_domains())
def test_weights_converge_to_surface(d):
    G = geometry.surface_measure(d)
    errs = [abs(geometry.boundary_samples(d, n).weights.sum() - G) for n in (16, 32)]
    assert errs[1] <= max(errs[0] / 4, 1e-12 * G)
    assert abs(geometry.boundary_samples(d, 256).weights.sum() - G) < 1e-10 * G


@given(trig_domains())
def test_isoperimetric_deficit_nonnegative(d):
    assert geometry.isoperimetric_deficit(d) >= -1e-8


@given(st.floats(0.2, 5.0), st.sampled_from([2, 3]))
def test_ball_quantities(R, N):
    d = StarDomain.ball(N, R)
    assert geometry.h0(d) == pytest.approx(1 / R, abs=1e-10)
    assert abs(geometry.isoperimetric_deficit(d)) < 1e-8 * max(1.0, R**N)


@given(trig_domains())
def test_normals_unit_and_minkowski(d):
    bs = geometry.boundary_samples(d, 128)
    assert np.allclose(np.linalg.norm(bs.normals, axis=1), 1.0, atol=1e-12)
    assert abs(geometry.minkowski_residual(d, 1024)) <= 1e-6 * geometry.surface_measure(d)


@given(st.integers(2, 6), st.floats(0.0, 1.0))
def test_convex_perturbation_has_positive_curvature(k, frac):
    # rho = 1 + a cos(k t) is convex when a (k^2 + 1) < 1 (check at t = pi / k)
    a = 0.95 * frac / (k * k + 1)
    bs = geometry.boundary_samples(StarDomain.from_coeffs(2, [1.0] + [0.0] * (k - 1) + [a]), 256)
    assert np.all(bs.mean_curvature > 0)


@given(trig_domains(dimension=2))
def test_deficit_zero_only_for_balls(d):
    deficit = geometry.isoperimetric_deficit(d)
    has_modes = any(abs(c) > 1e-3 for c in d.radius.cos_coeffs[1:] + d.radius.sin_coeffs[1:])
    if has_modes:
        assert deficit > 1e-8
