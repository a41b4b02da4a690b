import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from plasmacharge.errors import ConfigError, DomainError
from plasmacharge.geometry import (
    boundary_hit,
    distance_to_boundary,
    domain_from_config,
    ellipse,
    fourier_domain,
    local_frame,
    reflect,
    reflect_many,
    unit_disk,
)

DISK = unit_disk()
ELL = ellipse(2.0, 1.0)

angles = st.floats(0.0, 2 * math.pi, allow_nan=False)
radii = st.floats(0.0, 0.95, allow_nan=False)
comps = st.floats(-5.0, 5.0, allow_nan=False).filter(lambda c: abs(c) > 1e-3)


# ---------------------------------------------------------------- distance
def test_distance_disk_center():
    assert distance_to_boundary(DISK, [0.0, 0.0]) == pytest.approx(1.0, abs=1e-14)


def test_distance_disk_offcenter():
    assert distance_to_boundary(DISK, [0.5, 0.0]) == pytest.approx(0.5, abs=1e-14)


def test_distance_ellipse_center_matches_dense_scan():
    # oracle: brute-force minimum over a dense parameter scan
    mu = np.linspace(0, 2 * np.pi, 200001)
    pts = np.column_stack([2 * np.cos(mu), np.sin(mu)])
    oracle = float(np.min(np.linalg.norm(pts, axis=1)))
    assert oracle == pytest.approx(1.0, abs=1e-12)
    assert distance_to_boundary(ELL, [0.0, 0.0]) == pytest.approx(oracle, abs=1e-10)


def test_distance_ellipse_generic_point_matches_scan():
    x = np.array([0.7, 0.35])
    mu = np.linspace(0, 2 * np.pi, 400001)
    pts = np.column_stack([2 * np.cos(mu), np.sin(mu)])
    oracle = float(np.min(np.linalg.norm(pts - x, axis=1)))
    assert distance_to_boundary(ELL, x) == pytest.approx(oracle, abs=1e-9)


def test_distance_on_boundary_is_zero():
    assert distance_to_boundary(DISK, [0.0, 1.0]) == pytest.approx(0.0, abs=1e-12)


def test_distance_exterior_point_rejected():
    with pytest.raises(DomainError, match="exterior point"):
        distance_to_boundary(DISK, [1.2, 0.0])


# ---------------------------------------------------------------- reflect
def test_reflect_planar_mirror():
    n = np.array([[1.0, 0.0]])
    assert np.array_equal(reflect_many(n, np.array([[3.0, 2.0]])), [[-3.0, 2.0]])


def test_reflect_grazing_unchanged():
    n = np.array([[1.0, 0.0]])
    assert np.array_equal(reflect_many(n, np.array([[0.0, 5.0]])), [[0.0, 5.0]])


def test_reflect_on_disk():
    out = reflect(DISK, [1.0, 0.0], [1.0, 1.0])
    assert np.allclose(out, [-1.0, 1.0], atol=1e-15)


def test_reflect_off_boundary_rejected():
    with pytest.raises(DomainError):
        reflect(DISK, [0.5, 0.0], [1.0, 0.0])


@given(mu=angles, vx=comps, vy=comps)
def test_reflection_preserves_speed(mu, vx, vy):
    for dom in (DISK, ELL):
        x = dom.point(np.array([mu]))[0]
        v = np.array([vx, vy])
        w = reflect(dom, x, v)
        assert abs(np.linalg.norm(w) - np.linalg.norm(v)) <= 1e-14 * np.linalg.norm(v)


@given(mu=angles, vx=comps, vy=comps)
def test_reflection_is_an_involution(mu, vx, vy):
    # one final rounding: within one unit roundoff of the speed
    for dom in (DISK, ELL):
        x = dom.point(np.array([mu]))[0]
        v = np.array([vx, vy])
        back = reflect(dom, x, reflect(dom, x, v))
        assert np.linalg.norm(back - v) <= np.finfo(float).eps * np.linalg.norm(v)


@given(mu=angles, vx=comps, vy=comps)
def test_reflection_flips_normal_component(mu, vx, vy):
    x = ELL.point(np.array([mu]))[0]
    n = ELL.normal(np.array([mu]))[0]
    v = np.array([vx, vy])
    w = reflect(ELL, x, v)
    assert w @ n == pytest.approx(-(v @ n), abs=1e-12)


# ---------------------------------------------------------------- boundary_hit
def test_boundary_hit_radial_exit():
    t, x = boundary_hit(DISK, [0.0, 0.0], [1.0, 0.0], 2.0)
    assert t == pytest.approx(1.0, abs=1e-10)
    assert np.allclose(x, [1.0, 0.0], atol=1e-10)


def test_boundary_hit_none_inside():
    assert boundary_hit(DISK, [0.0, 0.0], [1.0, 0.0], 0.5) is None


def test_boundary_hit_offcenter():
    t, _ = boundary_hit(DISK, [0.5, 0.0], [1.0, 0.0], 1.0)
    assert t == pytest.approx(0.5, abs=1e-10)


@given(r=radii, th=angles, phi=angles, speed=st.floats(0.1, 10.0))
def test_boundary_hit_matches_quadratic_root(r, th, phi, speed):
    x = np.array([r * math.cos(th), r * math.sin(th)])
    v = speed * np.array([math.cos(phi), math.sin(phi)])
    # |x + t v|^2 = 1, positive root
    a, b, c = v @ v, 2 * (x @ v), x @ x - 1
    t_exact = (-b + math.sqrt(b * b - 4 * a * c)) / (2 * a)
    hit = boundary_hit(DISK, x, v, 4.0 / speed)
    assert hit is not None
    assert hit[0] == pytest.approx(t_exact, abs=1e-10)


def test_exit_time_agrees_with_boundary_hit(rng):
    x = rng.uniform(-0.6, 0.6, (50, 2))
    v = rng.normal(size=(50, 2))
    t = ELL.exit_time(x, v)
    for k in range(5):
        hit = boundary_hit(ELL, x[k], v[k], 10.0)
        assert hit[0] == pytest.approx(t[k], abs=1e-10)


# ---------------------------------------------------------------- local frame
def test_local_frame_radial_inward():
    f = local_frame(DISK, [0.9, 0.0], [-1.0, 0.0])
    assert f.x_perp == pytest.approx(0.1, abs=1e-12)
    assert f.v_perp == pytest.approx(1.0, abs=1e-14)
    assert f.v_tan == pytest.approx(0.0, abs=1e-14)


def test_local_frame_tangential():
    f = local_frame(DISK, [0.9, 0.0], [0.0, 2.0])
    assert f.v_perp == pytest.approx(0.0, abs=1e-14)
    assert abs(f.v_tan) == pytest.approx(2.0, abs=1e-14)


def test_local_frame_outgoing():
    f = local_frame(DISK, [0.0, 0.8], [0.0, 1.0])
    assert f.x_perp == pytest.approx(0.2, abs=1e-12)
    assert f.v_perp == pytest.approx(-1.0, abs=1e-14)


def test_local_frame_outside_collar_rejected():
    with pytest.raises(DomainError, match="outside boundary collar"):
        local_frame(DISK, [0.0, 0.0], [1.0, 0.0])


@given(mu=angles, depth=st.floats(0.0, 1.0))
def test_local_frame_reconstruction(mu, depth):
    for dom in (DISK, ELL):
        d = depth * dom.collar_width
        m = np.array([mu])
        x = dom.point(m)[0] - d * dom.normal(m)[0]
        f = local_frame(dom, x, [0.0, 0.0])
        fm = np.array([f.mu])
        rebuilt = dom.point(fm)[0] - f.x_perp * dom.normal(fm)[0]
        assert np.linalg.norm(rebuilt - x) <= 1e-10


# ---------------------------------------------------------------- shapes
def test_disk_curvature_is_one():
    mu = np.linspace(0, 2 * np.pi, 1000)
    assert np.max(np.abs(DISK.curvature(mu) - 1.0)) <= 1e-12


@pytest.mark.parametrize("dom", [unit_disk(), ellipse(2.0, 1.0), fourier_domain([1.0, 0.0, 0.0, 0.1, 0.05])])
def test_normals_unit_and_curvature_positive(dom):
    mu = np.linspace(0, 2 * np.pi, 512, endpoint=False)
    assert np.max(np.abs(np.linalg.norm(dom.normal(mu), axis=1) - 1)) <= 1e-12
    assert np.min(dom.curvature(mu)) > 0


@pytest.mark.parametrize("dom", [unit_disk(), ellipse(2.0, 1.0), fourier_domain([1.0, 0.0, 0.0, 0.1, 0.05])])
def test_nearest_point_lies_outward(dom, rng):
    x = 0.5 * dom.inradius * rng.uniform(-1, 1, (100, 2))
    mu, _ = dom.project(x)
    y = dom.point(mu)
    n = dom.normal(mu)
    assert np.all(np.sum((x - y) * n, axis=1) < 0)


def test_ellipse_area_and_perimeter():
    assert ELL.area == pytest.approx(2 * math.pi, rel=1e-14)
    # Ramanujan's second approximation is accurate to ~1e-9 for this ratio
    a, b = 2.0, 1.0
    h = ((a - b) / (a + b)) ** 2
    ram = math.pi * (a + b) * (1 + 3 * h / (10 + math.sqrt(4 - 3 * h)))
    assert ELL.perimeter == pytest.approx(ram, rel=1e-8)


def test_quadrature_integrates_perimeter_of_disk():
    q = DISK.quadrature(64)
    assert math.fsum(q.weights) == pytest.approx(2 * math.pi, abs=1e-13)


def test_collar_width_rule():
    assert DISK.collar_width == pytest.approx(min(0.2, 1 / 4))
    # ellipse 2x1: inradius 1, max curvature a/b^2 = 2
    assert ELL.collar_width == pytest.approx(min(0.2, 1 / 6))


def test_nonconvex_fourier_shape_rejected():
    with pytest.raises(ConfigError, match="convex"):
        fourier_domain([1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.2, 0.0])


@pytest.mark.parametrize(
    "spec,kind",
    [({"shape": "disk"}, "unit_disk"), ({"shape": "ellipse", "a": 1.5, "b": 1.0}, "ellipse"),
     ({"shape": "fourier", "coeffs": [1.0, 0.0, 0.0]}, "fourier")],
)
def test_domain_from_config(spec, kind):
    assert domain_from_config(spec).kind == kind


def test_domain_from_config_unknown_shape():
    with pytest.raises(ConfigError):
        domain_from_config({"shape": "square"})
