"""Verification experiments: bounds on random regions, scans, reports."""

import json
import math

import numpy as np
import pytest

from isodiam.errors import WrongBackend
from isodiam.geometry import (
    ChannelSurface,
    EuclideanPlane,
    HyperbolicPlane,
    Sphere,
    WarpProfile,
    WarpedSurface,
)
from isodiam.region import euclidean_ellipse, regular_polygon, star_shaped_region
from isodiam.verify import (
    check_ch,
    check_euclidean,
    check_ricci_ball,
    constrained_run,
    infimum_scan,
    region_ratio,
    small_ball_volume_scan,
    sphere_cap_ratio,
)

EU = EuclideanPlane()
HY = HyperbolicPlane(-1.0)
SP = Sphere(1.0)


def test_euclidean_disk_report():
    from isodiam.region import euclidean_circle

    rep = check_euclidean(euclidean_circle(EU, (0, 0), 1.0, 4096))
    assert rep.passed and rep.extra["equality"]
    data = json.loads(rep.to_json())
    assert set(data) >= {"id", "backend", "V", "P", "rad", "ratio", "bound",
                         "margin", "tol", "pass", "refinement_delta"}


def test_euclidean_ellipse_strict():
    reg = euclidean_ellipse(EU, (0, 0), math.sqrt(3), 1 / math.sqrt(3), 1024)
    rep = check_euclidean(reg)
    assert rep.passed and rep.ratio > 1.25
    # elliptic-integral perimeter oracle
    from scipy.special import ellipe

    a, b = math.sqrt(3), 1 / math.sqrt(3)
    per = 4 * a * ellipe(1 - (b / a) ** 2)
    assert rep.ratio == pytest.approx(a * per / (2 * math.pi), rel=1e-4)


def test_square_ratio_closed_form():
    side = np.linspace(0.0, 1.0, 4, endpoint=False)
    verts = ([(s, 0.0) for s in side] + [(1.0, s) for s in side]
             + [(1.0 - s, 1.0) for s in side] + [(0.0, 1.0 - s) for s in side])
    from isodiam.region import Region

    rep = check_euclidean(Region(np.array(verts), EU))
    assert rep.ratio == pytest.approx(math.sqrt(2), rel=1e-9)


def test_random_euclidean_polygons_respect_bound():
    rng = np.random.default_rng(100)
    for _ in range(25):
        reg = star_shaped_region(EU, rng.uniform(-1, 1, 2), rng.uniform(0.5, 2.0),
                                 48, rng)
        rep = check_euclidean(reg, tol=1e-6)
        assert rep.ratio >= 1.0 - 1e-6 * rep.ratio


def test_check_ch_wrong_backend():
    with pytest.raises(WrongBackend):
        check_ch(regular_polygon(SP, (0, 0), 0.5, 64))


def test_hyperbolic_ball_values():
    rep = check_ch(regular_polygon(HY, (0, 0), 1.0, 1024), strictness=True)
    target = math.sinh(1.0) / (2 * (math.cosh(1.0) - 1.0))
    assert rep.ratio == pytest.approx(target, rel=2e-3)
    assert rep.extra["strict_beyond_discretization"]


def test_hyperbolic_small_ball_flat_limit():
    rep = check_ch(regular_polygon(HY, (0, 0), 0.1, 1024))
    # Taylor expansion of sinh r / (2 (cosh r - 1)): 1 + r^2 / 12 + O(r^4)
    assert rep.ratio == pytest.approx(1.0 + 0.01 / 12.0, abs=2e-5)


def test_random_hyperbolic_regions_respect_bound():
    rng = np.random.default_rng(7)
    for _ in range(12):
        reg = star_shaped_region(HY, rng.uniform(-0.15, 0.15, 2),
                                 rng.uniform(0.3, 0.8), 192, rng)
        rep = check_ch(reg, tol=1e-6)
        assert rep.ratio >= 1.0 - 1e-6 * rep.ratio


def test_warped_steep_apex_ball_above_one():
    backend = WarpedSurface(WarpProfile(1.5))
    prof = backend.profile
    r = 2.0
    ratio = r * prof(r) / (2 * prof.integral(r))
    v, p = backend.ball_measures((0, 0), r)
    assert r * p / (2 * v) == pytest.approx(ratio, rel=1e-10)
    assert ratio > 1.0


def test_ricci_ball_values():
    rep = check_ricci_ball(SP, (0, 0), 1.0)
    assert rep.ratio == pytest.approx(math.sin(1.0) / (2 * (1 - math.cos(1.0))),
                                      rel=1e-12)
    assert rep.passed
    with pytest.raises(WrongBackend):
        check_ricci_ball(HY, (0, 0), 1.0)


def test_ricci_rigidity_flat_profile():
    backend = WarpedSurface(WarpProfile(1.0))
    rep = check_ricci_ball(backend, (0, 0), 2.0)
    assert abs(rep.ratio - 1.0) < 1e-9


def test_random_sphere_regions_respect_cap_bound():
    # containment monotonicity gives rad(E) >= rad of the cap of equal volume,
    # and the spherical isoperimetric inequality bounds P the same way, so
    # every region's ratio dominates the equal-volume cap ratio
    rng = np.random.default_rng(17)
    for _ in range(10):
        reg = star_shaped_region(SP, rng.uniform(-0.1, 0.1, 2),
                                 rng.uniform(0.3, 0.7), 192, rng)
        v, p, r, ratio = region_ratio(reg)
        assert ratio >= sphere_cap_ratio(SP, v) - 1e-4


def test_infimum_scan_euclidean_constant():
    scan = infimum_scan(EU, math.pi, [0, 1, 2, 5])
    assert scan["passed"] and scan["constant"]


def test_infimum_scan_steep_warped():
    prof = WarpProfile(1.5)
    backend = WarpedSurface(prof, chart_radius=96.0)
    volume = 2 * math.pi * prof.integral(2.0)
    scan = infimum_scan(backend, volume, [0, 2, 4, 8, 16], n_fan=256)
    assert scan["passed"]
    assert scan["above_two_V"] and scan["decreasing"]
    assert scan["final_gap_rel"] < 0.02
    devs = [row["metric_deviation"] for row in scan["rows"] if "metric_deviation" in row]
    assert devs == sorted(devs, reverse=True)


def test_infimum_scan_shallow_warped():
    prof = WarpProfile(0.5)
    backend = WarpedSurface(prof)
    volume = 2 * math.pi * prof.integral(2.0)
    scan = infimum_scan(backend, volume, [0, 4, 6, 9], n_fan=256)
    assert scan["passed"]
    assert scan["below_two_V"] and scan["origin_beats_far"]


def test_infimum_scan_helicoid():
    backend = ChannelSurface.helicoid()
    scan = infimum_scan(backend, math.pi, [0, 3, 6, 9, 12], n_fan=192)
    assert scan["passed"]
    f = [row["f"] for row in scan["rows"]]
    assert all(x > scan["two_V"] for x in f)
    assert all(f[i + 1] < f[i] for i in range(len(f) - 1))


def test_small_ball_volume_scan():
    backend = WarpedSurface(WarpProfile(0.5))
    centers = [(0.0, 0.0), (2.0, 0.0), (5.0, 1.0)]
    report = small_ball_volume_scan(backend, centers, [0.4, 0.2, 0.1, 0.05])
    assert report["decreasing_to_zero"]
    assert report["sup_volumes"][-1] < report["sup_volumes"][0] / 10


def test_constrained_run_small_volume_free_disk():
    state, report = constrained_run(EU, math.pi / 16.0, (0, 0), 1.0, n=128,
                                    hand_off=False)
    assert report["contact_count"] == 0
    # curvature of the optimal disk: 2 / diameter = 1 / r
    r_v = math.sqrt((math.pi / 16.0) / math.pi)
    assert report["off_contact_curvature_mean"] == pytest.approx(1.0 / r_v,
                                                                 rel=0.01)


def test_constrained_run_full_volume_is_ball():
    v_ball = math.pi * 0.9999
    state, report = constrained_run(EU, v_ball, (0, 0), 1.0, n=128,
                                    hand_off=False)
    assert report["contact_fraction"] > 0.5
