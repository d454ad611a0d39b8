"""Closed-form minimal-surface examples: the truncated catenoid family, the
critical catenoid and Moebius band constants, and flat-disk equality checks.

Catenoid derivations (recorded so the oracle is auditable): with the
parametrization (cosh t cos s, cosh t sin s, t) one has
|d_t|^2 = |d_s|^2 = cosh^2 t and d_t . d_s = 0, hence

    area(T)            = 2 pi (T + sinh T cosh T)
    boundary length(T) = 4 pi cosh T
    ambient radius(T)  = sqrt(cosh^2 T + T^2)   (attained on the rims)

The mixed ratio  2 * area / (ambient radius * boundary length)  equals 1
exactly at the critical truncation T0 solving t = coth t (the free-boundary
configuration) and is strictly below 1 elsewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .meb import rad_ambient

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# critical constants
# ---------------------------------------------------------------------------


def critical_catenoid_T0(tol=1e-12):
    """Unique positive root of t = coth t, bracketed on [1, 1.5]."""
    return float(brentq(lambda t: t - 1.0 / math.tanh(t), 1.0, 1.5, xtol=tol,
                        rtol=4 * np.finfo(float).eps))


def critical_mobius_T0(tol=1e-12):
    """Unique positive root of coth t = 2 tanh 2t."""
    f = lambda t: 1.0 / math.tanh(t) - 2.0 * math.tanh(2.0 * t)
    return float(brentq(f, 0.05, 3.0, xtol=tol, rtol=4 * np.finfo(float).eps))


# ---------------------------------------------------------------------------
# truncated catenoid family
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TruncatedCatenoid:
    """Catenoid piece |t| <= T of the unit-waist catenoid."""

    T: float

    @property
    def area(self):
        T = self.T
        return TWO_PI * (T + math.sinh(T) * math.cosh(T))

    @property
    def boundary_length(self):
        return 4.0 * math.pi * math.cosh(self.T)

    @property
    def ambient_radius(self):
        T = self.T
        return math.sqrt(math.cosh(T) ** 2 + T * T)

    def immerse(self, t, s):
        t = np.asarray(t, float)
        s = np.asarray(s, float)
        return np.stack(
            [np.cosh(t) * np.cos(s), np.cosh(t) * np.sin(s), t], axis=-1
        )

    def mesh_measures(self, n_t=64, n_s=1024):
        """Quadrature/welzl cross-check of the closed forms on a sampled mesh.

        Area by composite Simpson of the area element cosh^2 t, boundary
        length by inscribed polygon chords, ambient radius by the exact
        minimal ball of the vertex cloud.
        """
        if n_t % 2 == 1:
            n_t += 1
        t = np.linspace(-self.T, self.T, n_t + 1)
        dens = TWO_PI * np.cosh(t) ** 2
        w = np.ones(n_t + 1)
        w[1:-1:2], w[2:-1:2] = 4.0, 2.0
        area = float(np.sum(w * dens)) * (t[1] - t[0]) / 3.0

        s = TWO_PI * np.arange(n_s) / n_s
        rim = self.immerse(np.full(n_s, self.T), s)
        chords = np.linalg.norm(np.roll(rim, -1, axis=0) - rim, axis=1)
        length = 2.0 * float(np.sum(chords))

        t_cloud = np.linspace(-self.T, self.T, 33)
        s_cloud = TWO_PI * np.arange(64) / 64
        tt, ss = np.meshgrid(t_cloud, s_cloud, indexing="ij")
        cloud = self.immerse(tt.ravel(), ss.ravel())
        ball = rad_ambient(cloud)
        return area, length, ball.radius, ball


def minimal_ratio(T):
    """Mixed ratio 2 area / (ambient radius * boundary length) of the piece.

    Equals (T + sinh T cosh T) / (cosh T sqrt(cosh^2 T + T^2)); exactly 1 at
    the critical truncation and < 1 elsewhere.
    """
    T = np.asarray(T, dtype=float)
    num = T + np.sinh(T) * np.cosh(T)
    den = np.cosh(T) * np.sqrt(np.cosh(T) ** 2 + T * T)
    return num / den


def minimal_ratio_mesh(T, n_t=64, n_s=1024):
    """Same ratio recomputed from mesh quadrature and the exact ambient ball."""
    cat = TruncatedCatenoid(T)
    area, length, radius, _ = cat.mesh_measures(n_t=n_t, n_s=n_s)
    return 2.0 * area / (radius * length)


def ratio_sweep(t_values):
    """CSV-ready sweep: (T, closed-form ratio, mesh ratio discrepancy)."""
    rows = []
    for T in t_values:
        closed = float(minimal_ratio(T))
        mesh = minimal_ratio_mesh(T, n_t=32, n_s=256)
        rows.append((float(T), closed, abs(closed - mesh)))
    return rows


# ---------------------------------------------------------------------------
# Moebius band
# ---------------------------------------------------------------------------


def mobius_immersion(t, s):
    """Minimal Moebius embedding into 4-space, for mesh sampling."""
    t = np.asarray(t, float)
    s = np.asarray(s, float)
    return np.stack(
        [
            2.0 * np.sinh(t) * np.cos(s),
            2.0 * np.sinh(t) * np.sin(s),
            np.cosh(2.0 * t) * np.cos(2.0 * s),
            np.cosh(2.0 * t) * np.sin(2.0 * s),
        ],
        axis=-1,
    )


# ---------------------------------------------------------------------------
# flat equality cases
# ---------------------------------------------------------------------------


def equatorial_disk_check(n=4096, center=(0.0, 0.0), radius=1.0):
    """Flat disk: 2 area / (rad * boundary length) = 1, the equality case."""
    from .geometry import EuclideanPlane
    from .meb import rad
    from .region import euclidean_circle

    backend = EuclideanPlane()
    reg = euclidean_circle(backend, center, radius, n)
    ball = rad(reg)
    ratio = 2.0 * reg.volume() / (ball.radius * reg.perimeter())
    return {
        "ratio": ratio,
        "rad": ball.radius,
        "area": reg.volume(),
        "length": reg.perimeter(),
        "equality": bool(abs(ratio - 1.0) < 1e-6),
    }


def annulus_ratio(outer=1.0, inner_frac=0.5):
    """Flat annulus closed form: ratio = 1 - inner_frac < 1 (not a disk)."""
    b = inner_frac * outer
    area = math.pi * (outer**2 - b**2)
    length = TWO_PI * (outer + b)
    return 2.0 * area / (outer * length)


# ---------------------------------------------------------------------------
# intrinsic-vs-ambient radius on the catenoid
# ---------------------------------------------------------------------------


def intrinsic_radius_dominance(T, n_t=5, n_s=6):
    """Check rad on the surface >= ambient rad for a sampled catenoid piece.

    The catenoid's intrinsic metric is isometric to ds^2 + (1 + s^2) dtheta^2
    under the meridian arclength substitution s = sinh t, so the intrinsic
    1-center runs on that rotational channel (theta periodic).  The waist
    point is the symmetric optimum and seeds the solve.
    """
    from .geometry import ChannelSurface
    from .meb import geodesic_one_center

    cat = TruncatedCatenoid(T)
    t = np.linspace(-T, T, n_t)
    s_ang = TWO_PI * np.arange(n_s) / n_s
    tt, ss = np.meshgrid(t, s_ang, indexing="ij")
    cloud3 = cat.immerse(tt.ravel(), ss.ravel())
    amb = rad_ambient(cloud3)

    chan = ChannelSurface.catenoid_intrinsic(u_extent=math.sinh(T) * 1.5,
                                             geo_step=0.05)
    pts = np.stack([np.sinh(tt.ravel()), np.where(ss.ravel() > math.pi,
                                                  ss.ravel() - TWO_PI,
                                                  ss.ravel())], axis=1)
    intr = geodesic_one_center(pts, chan, stages=1, stage_iters=6,
                               polish_iters=6, init=np.zeros(2))
    return {
        "ambient": amb.radius,
        "intrinsic": intr.radius,
        "dominates": bool(intr.radius >= amb.radius - 1e-6 * amb.radius),
    }


def conormal_alignment(T, n_s=64):
    """Angle between the boundary conormal and the radial direction.

    At the critical truncation the piece is free boundary in its ambient
    ball, so the outward conormal is radial; returns the max angle (radians)
    over sampled rim points.
    """
    cat = TruncatedCatenoid(T)
    s = TWO_PI * np.arange(n_s) / n_s
    rim = cat.immerse(np.full(n_s, T), s)
    # outward conormal along the surface at t = T: d/dt of the immersion,
    # normalized (it is orthogonal to the rim tangent since F = 0)
    dt = np.stack(
        [np.sinh(T) * np.cos(s), np.sinh(T) * np.sin(s), np.ones_like(s)],
        axis=-1,
    )
    dt /= np.linalg.norm(dt, axis=1, keepdims=True)
    radial = rim / np.linalg.norm(rim, axis=1, keepdims=True)
    cosang = np.clip(np.einsum("ni,ni->n", dt, radial), -1.0, 1.0)
    return float(np.max(np.arccos(cosang)))
