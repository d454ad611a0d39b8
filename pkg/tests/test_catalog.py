"""Minimal-surface catalog: critical constants, ratio sweep, flat equality."""

import math

import numpy as np
import pytest

from isodiam.catalog import (
    TruncatedCatenoid,
    annulus_ratio,
    conormal_alignment,
    critical_catenoid_T0,
    critical_mobius_T0,
    equatorial_disk_check,
    intrinsic_radius_dominance,
    minimal_ratio,
    minimal_ratio_mesh,
    mobius_immersion,
    ratio_sweep,
)


def test_critical_catenoid_constant():
    t0 = critical_catenoid_T0()
    assert abs(t0 * math.tanh(t0) - 1.0) < 1e-10  # t = coth t
    assert t0 == pytest.approx(1.19968, abs=2e-5)
    # bracket signs
    assert 1.0 - 1.0 / math.tanh(1.0) < 0
    assert 1.5 - 1.0 / math.tanh(1.5) > 0


def test_critical_mobius_constant():
    t0 = critical_mobius_T0()
    assert abs(1.0 / math.tanh(t0) - 2.0 * math.tanh(2.0 * t0)) < 1e-10
    # bracket asymptotics: coth blows up at zero, saturates at 1 < 2
    assert 1.0 / math.tanh(0.05) > 2.0 * math.tanh(0.1)
    assert 1.0 / math.tanh(3.0) < 2.0 * math.tanh(6.0)


def test_mobius_immersion_shape():
    pts = mobius_immersion(np.array([0.1, 0.2]), np.array([0.0, 1.0]))
    assert pts.shape == (2, 4)


def test_catenoid_closed_forms():
    t0 = critical_catenoid_T0()
    cat = TruncatedCatenoid(t0)
    assert cat.area == pytest.approx(2 * math.pi * (t0 + math.sinh(t0) * math.cosh(t0)))
    assert cat.boundary_length == pytest.approx(4 * math.pi * math.cosh(t0))
    assert cat.ambient_radius == pytest.approx(math.sqrt(math.cosh(t0) ** 2 + t0**2))
    # the two sides of the equality case agree exactly at the critical height
    lhs = t0 + math.sinh(t0) * math.cosh(t0)
    rhs = math.cosh(t0) * math.sqrt(math.cosh(t0) ** 2 + t0 * t0)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_equality_at_critical_truncation():
    t0 = critical_catenoid_T0()
    assert float(minimal_ratio(t0)) == pytest.approx(1.0, abs=1e-6)
    assert float(minimal_ratio(0.8)) == pytest.approx(0.9537, abs=1e-4)


def test_strictly_below_one_off_critical():
    t0 = critical_catenoid_T0()
    ts = np.linspace(0.2, 3.0, 281)
    rho = np.asarray(minimal_ratio(ts))
    mask = np.abs(ts - t0) > 0.05
    assert np.all(rho[mask] < 1.0 - 1e-4)
    assert np.all(rho <= 1.0 + 1e-12)


def test_unique_interior_maximum():
    t0 = critical_catenoid_T0()
    ts = np.linspace(0.2, 3.0, 281)
    rho = np.asarray(minimal_ratio(ts))
    interior_maxima = np.where((rho[1:-1] > rho[:-2]) & (rho[1:-1] > rho[2:]))[0] + 1
    assert len(interior_maxima) == 1
    assert abs(ts[interior_maxima[0]] - t0) <= ts[1] - ts[0]


def test_mesh_cross_checks():
    t0 = critical_catenoid_T0()
    cat = TruncatedCatenoid(t0)
    area, length, radius, ball = cat.mesh_measures(n_t=64, n_s=1024)
    assert area == pytest.approx(cat.area, rel=1e-5)
    assert length == pytest.approx(cat.boundary_length, rel=1e-5)
    assert radius == pytest.approx(cat.ambient_radius, rel=1e-5)
    assert float(minimal_ratio_mesh(t0)) == pytest.approx(1.0, abs=1e-5)


def test_ratio_sweep_discrepancies_small():
    rows = ratio_sweep(np.linspace(0.5, 2.0, 7))
    assert all(row[2] < 5e-4 for row in rows)


def test_equatorial_disk_equality():
    report = equatorial_disk_check(n=4096)
    assert report["equality"]
    assert report["ratio"] == pytest.approx(1.0, abs=1e-6)


def test_off_center_disk_still_equality():
    report = equatorial_disk_check(n=4096, center=(0.7, -0.3), radius=0.5)
    assert report["ratio"] == pytest.approx(1.0, abs=1e-6)


def test_annulus_below_one():
    assert annulus_ratio(inner_frac=0.5) == pytest.approx(0.5)
    assert annulus_ratio(inner_frac=0.2) == pytest.approx(0.8)
    assert annulus_ratio(inner_frac=0.5) < 1.0


def test_intrinsic_radius_dominates_ambient():
    report = intrinsic_radius_dominance(1.0)
    assert report["dominates"]
    assert report["intrinsic"] >= report["ambient"]


def test_conormal_radial_alignment_at_critical():
    t0 = critical_catenoid_T0()
    assert conormal_alignment(t0) < 1e-3
    assert conormal_alignment(0.8) > 0.1
