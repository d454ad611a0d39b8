"""Minimal enclosing balls: exact Euclidean solver and the geodesic 1-center."""

import math

import numpy as np
import pytest

from isodiam.geometry import EuclideanPlane, HyperbolicPlane, Sphere, WarpProfile, WarpedSurface
from isodiam.meb import brute_force_meb, geodesic_one_center, rad, rad_ambient, welzl
from isodiam.region import euclidean_circle, regular_polygon

EU = EuclideanPlane()
HY = HyperbolicPlane(-1.0)
SP = Sphere(1.0)


def test_two_points():
    ball = welzl(np.array([[0.0, 0.0], [2.0, 0.0]]))
    assert np.allclose(ball.center, [1.0, 0.0])
    assert ball.radius == pytest.approx(1.0)


def test_unit_square_corners():
    ball = welzl(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))
    assert np.allclose(ball.center, [0.5, 0.5])
    assert ball.radius == pytest.approx(math.sqrt(2) / 2)


def test_circle_plus_interior_points():
    rng = np.random.default_rng(0)
    ang = 2 * math.pi * np.arange(7) / 7
    rim = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    interior = rng.uniform(-0.5, 0.5, size=(10, 2))
    ball = welzl(np.vstack([rim, interior]), seed=1)
    oracle = brute_force_meb(np.vstack([rim, interior]))
    assert ball.radius == pytest.approx(oracle.radius, abs=1e-12)
    assert ball.radius == pytest.approx(1.0, abs=1e-12)


def test_welzl_matches_brute_force_200_instances():
    rng = np.random.default_rng(42)
    for i in range(200):
        n = int(rng.integers(3, 25))
        dim = 3 if i % 5 == 0 else 2
        pts = rng.normal(size=(n, dim)) * rng.uniform(0.5, 3.0)
        fast = welzl(pts, seed=i)
        oracle = brute_force_meb(pts)
        assert abs(fast.radius - oracle.radius) < 1e-10
        assert np.linalg.norm(fast.center - oracle.center) < 1e-10


def test_monotone_under_point_addition():
    rng = np.random.default_rng(9)
    pts = rng.normal(size=(30, 2))
    r_prev = 0.0
    for k in range(2, 31):
        r = welzl(pts[:k], seed=0).radius
        assert r >= r_prev - 1e-12
        r_prev = r


def test_deterministic_given_seed():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(64, 2))
    b1 = welzl(pts, seed=7)
    b2 = welzl(pts, seed=7)
    assert np.array_equal(b1.center, b2.center)
    assert b1.radius == b2.radius
    assert np.array_equal(b1.attainment, b2.attainment)


def test_one_center_single_point():
    ball = geodesic_one_center(np.array([[0.3, 0.2]]), HY)
    assert ball.radius == 0.0
    assert np.allclose(ball.center, [0.3, 0.2])


def test_one_center_sphere_symmetric_pair():
    p1 = SP.exp(np.zeros(2), np.array([0.4, 0.0]))
    p2 = SP.exp(np.zeros(2), np.array([-0.4, 0.0]))
    ball = geodesic_one_center(np.array([p1, p2]), SP)
    # metric speed at the origin is 2, so each point is at distance 0.8
    assert np.allclose(ball.center, 0.0, atol=1e-6)
    assert ball.radius == pytest.approx(0.8, abs=1e-6)


def test_one_center_hyperbolic_ball_reconstruction():
    c0 = np.array([0.25, -0.1])
    pts = HY.fan_points(c0, 1.0, n_fan=64)
    ball = geodesic_one_center(pts, HY)
    assert ball.radius == pytest.approx(1.0, abs=1e-4)
    assert np.linalg.norm(ball.center - c0) < 1e-4


def test_one_center_bounds():
    rng = np.random.default_rng(4)
    pts = rng.uniform(-0.4, 0.4, size=(12, 2))
    ball = geodesic_one_center(pts, HY)
    pairwise = max(HY.distance(p, q) for p in pts for q in pts)
    from_first = max(HY.distance(pts[0], q) for q in pts)
    assert ball.radius >= pairwise / 2 - 1e-9
    assert ball.radius <= from_first + 1e-9


def test_rad_euclidean_polygon():
    reg = euclidean_circle(EU, (0, 0), 1.0, 512)
    ball = rad(reg)
    assert ball.radius == pytest.approx(1.0, abs=1e-9)
    assert np.linalg.norm(ball.center) < 1e-9
    assert len(ball.attainment) >= 2


def test_rad_translation_equivariance():
    reg = euclidean_circle(EU, (0, 0), 1.0, 64)
    moved = reg.with_vertices(reg.vertices + np.array([2.0, 1.0]), check=False)
    b1, b2 = rad(reg), rad(moved)
    assert b2.radius == pytest.approx(b1.radius, abs=1e-12)
    assert np.allclose(b2.center - b1.center, [2.0, 1.0], atol=1e-9)


def test_rad_warped_isometry_invariance():
    backend = WarpedSurface(WarpProfile(0.6), geo_step=0.05)
    c0 = np.array([0.9, 0.0])
    pts = backend.fan_points(c0, 0.45, n_fan=16)
    from isodiam.region import Region

    reg = Region(pts, backend)
    theta = 0.9
    rot = np.array([[math.cos(theta), -math.sin(theta)],
                    [math.sin(theta), math.cos(theta)]])
    rotated = Region(pts @ rot.T, backend)
    b1 = rad(reg)
    b2 = rad(rotated)
    assert b2.radius == pytest.approx(b1.radius, rel=1e-5)


def test_ambient_radius_of_catenoid_rims():
    t0 = 1.2
    ang = 2 * math.pi * np.arange(48) / 48
    rim = np.stack([math.cosh(t0) * np.cos(ang), math.cosh(t0) * np.sin(ang)], axis=1)
    cloud = np.vstack([
        np.column_stack([rim, np.full(48, t0)]),
        np.column_stack([rim, np.full(48, -t0)]),
    ])
    ball = rad_ambient(cloud)
    assert ball.radius == pytest.approx(math.sqrt(math.cosh(t0) ** 2 + t0**2), rel=1e-9)
    assert np.linalg.norm(ball.center) < 1e-9


def test_enclosing_ball_serialization():
    ball = welzl(np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 1.0]]))
    d = ball.to_dict()
    assert set(d) == {"center", "radius", "attainment_indices"}
