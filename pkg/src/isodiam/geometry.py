"""Model Riemannian surfaces: metric tensors, geodesics, distances, ball measures.

Every backend exposes one global 2-coordinate chart and is immutable after
construction; all operations are pure functions of their inputs.  Supported
geometries:

* ``EuclideanPlane`` -- flat reference backend, identity metric.
* ``HyperbolicPlane`` -- constant curvature K < 0 in the conformal disk chart.
* ``Sphere`` -- constant curvature K > 0 in the stereographic chart centered
  at the chart origin (the projection antipode is excluded from the chart).
* ``WarpedSurface`` -- rotationally symmetric metric dr^2 + phi(r)^2 dtheta^2
  written in the Cartesian-like chart x = (r cos t, r sin t), so polygons
  around the apex need no angular branch cuts.  Gauss curvature -phi''/phi.
* ``ChannelSurface`` -- metric du^2 + w(u)^2 dv^2 on a strip, u unrestricted
  in sign (no apex); used for induced metrics of ruled/rotational surfaces.
* ``EmbeddedSurface`` -- immersion into 3-space with the induced metric.

Closed forms are used wherever available (distances and ball measures on the
homogeneous backends, radial geodesics through the warped apex); everything
else goes through a 4th-order geodesic integrator and a two-point shooting
solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate as _sciint
from scipy.interpolate import CubicSpline

from .errors import NoConvergence, OutOfChart

TWO_PI = 2.0 * math.pi

# curvature sign tags
NONPOSITIVE = "NonPositive"
NONNEGATIVE = "NonNegative"
MIXED = "Mixed"

# degree-4 quadrature on the reference triangle (6 points, weights sum to 1)
_TRI_A1, _TRI_W1 = 0.445948490915965, 0.223381589678011
_TRI_A2, _TRI_W2 = 0.091576213509771, 0.109951743655322
_TRI_BARY = np.array(
    [
        [_TRI_A1, _TRI_A1, 1.0 - 2.0 * _TRI_A1],
        [_TRI_A1, 1.0 - 2.0 * _TRI_A1, _TRI_A1],
        [1.0 - 2.0 * _TRI_A1, _TRI_A1, _TRI_A1],
        [_TRI_A2, _TRI_A2, 1.0 - 2.0 * _TRI_A2],
        [_TRI_A2, 1.0 - 2.0 * _TRI_A2, _TRI_A2],
        [1.0 - 2.0 * _TRI_A2, _TRI_A2, _TRI_A2],
    ]
)
_TRI_W = np.array([_TRI_W1, _TRI_W1, _TRI_W1, _TRI_W2, _TRI_W2, _TRI_W2])


@dataclass(frozen=True)
class ChartDomain:
    """Rectangle or disk in chart coordinates."""

    kind: str  # "disk" | "rect"
    radius: float = 0.0
    bounds: tuple = ()  # (xmin, xmax, ymin, ymax)

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.kind == "disk":
            return np.hypot(pts[:, 0], pts[:, 1]) <= self.radius
        xmin, xmax, ymin, ymax = self.bounds
        return (
            (pts[:, 0] >= xmin)
            & (pts[:, 0] <= xmax)
            & (pts[:, 1] >= ymin)
            & (pts[:, 1] <= ymax)
        )


# ---------------------------------------------------------------------------
# warp profiles
# ---------------------------------------------------------------------------


class WarpProfile:
    """Closed-form warp family phi_a(r) = a*r + (1-a)*tanh(r), a > 0.

    a < 1 gives phi'' <= 0 hence Gauss curvature K = -phi''/phi >= 0;
    a > 1 gives K <= 0; a = 1 is the Euclidean plane exactly.
    """

    def __init__(self, a: float):
        a = float(a)
        if a <= 0.0:
            raise ValueError("warp parameter a must be positive")
        self.a = a

    def __call__(self, r):
        return self.a * np.asarray(r, dtype=float) + (1.0 - self.a) * np.tanh(r)

    def d1(self, r):
        return self.a + (1.0 - self.a) / np.cosh(r) ** 2

    def d2(self, r):
        c = np.cosh(r)
        return -2.0 * (1.0 - self.a) * np.tanh(r) / c**2

    def gauss_curvature(self, r):
        r = np.asarray(r, dtype=float)
        small = np.abs(r) < 1e-6
        safe = np.where(small, 1.0, r)
        k = -self.d2(safe) / self(safe)
        # limiting value -phi'''(0)/phi'(0) = 2*(1-a)
        return np.where(small, 2.0 * (1.0 - self.a), k)

    @property
    def curvature_sign(self) -> str:
        if self.a < 1.0:
            return NONNEGATIVE
        if self.a > 1.0:
            return NONPOSITIVE
        return NONNEGATIVE  # flat counts as both; tag is refined by caller

    def integral(self, r: float) -> float:
        """Integral of phi from 0 to r, closed form."""
        r = float(r)
        return 0.5 * self.a * r * r + (1.0 - self.a) * float(np.log(np.cosh(r)))


class TabulatedProfile:
    """Warp profile from samples (r_i, phi_i), cubic interpolation.

    Requires strictly increasing r starting at 0 with phi(0) = 0.
    """

    def __init__(self, r, phi):
        r = np.asarray(r, dtype=float)
        phi = np.asarray(phi, dtype=float)
        if r.ndim != 1 or r.shape != phi.shape or len(r) < 4:
            raise ValueError("need matching 1D arrays with >= 4 samples")
        if r[0] != 0.0 or np.any(np.diff(r) <= 0.0):
            raise ValueError("r grid must be strictly increasing from 0")
        if abs(phi[0]) > 1e-12:
            raise ValueError("profile must close at the apex: phi(0) = 0")
        self._spline = CubicSpline(r, phi)
        self._d1 = self._spline.derivative(1)
        self._d2 = self._spline.derivative(2)
        self.r_max = float(r[-1])
        if abs(self._d1(0.0) - 1.0) > 1e-6:
            raise ValueError("profile must satisfy phi'(0) = 1")

    def __call__(self, r):
        return self._spline(r)

    def d1(self, r):
        return self._d1(r)

    def d2(self, r):
        return self._d2(r)

    def gauss_curvature(self, r):
        r = np.asarray(r, dtype=float)
        small = np.abs(r) < 1e-6
        safe = np.where(small, 1e-6, r)
        return np.where(small, -self._d2(1e-4) / 1e-4, -self._d2(safe) / self._spline(safe))

    def integral(self, r: float) -> float:
        return float(self._spline.integrate(0.0, float(r)))


# ---------------------------------------------------------------------------
# geodesic integration
# ---------------------------------------------------------------------------


def geodesic_rk4(backend, x0, v0, t_total, n_steps, return_traj=False):
    """Integrate the geodesic ODE x'' = -Gamma(x)(x', x') with classical RK4.

    x0, v0 are (N, 2) batches; t_total is the common parameter span.  When
    return_traj is set, returns position and velocity arrays of shape
    (n_steps + 1, N, 2); otherwise just the final (x, v).
    """
    x = np.atleast_2d(np.asarray(x0, dtype=float)).copy()
    v = np.atleast_2d(np.asarray(v0, dtype=float)).copy()
    h = float(t_total) / int(n_steps)
    acc = backend.geodesic_acceleration_batch

    if return_traj:
        xs = np.empty((n_steps + 1,) + x.shape)
        vs = np.empty_like(xs)
        xs[0], vs[0] = x, v

    for step in range(n_steps):
        k1x, k1v = v, acc(x, v)
        k2x, k2v = v + 0.5 * h * k1v, acc(x + 0.5 * h * k1x, v + 0.5 * h * k1v)
        k3x, k3v = v + 0.5 * h * k2v, acc(x + 0.5 * h * k2x, v + 0.5 * h * k2v)
        k4x, k4v = v + h * k3v, acc(x + h * k3x, v + h * k3v)
        x = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        v = v + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        if return_traj:
            xs[step + 1], vs[step + 1] = x, v

    if return_traj:
        return xs, vs
    return x, v


def _hermite_sample(xs, vs, h, t):
    """Cubic Hermite interpolation of a stored trajectory at per-target times.

    xs, vs: (n+1, N, 2); t: (N,) parameter values in [0, n*h].
    Returns interpolated positions and velocities, each (N, 2).
    """
    n = xs.shape[0] - 1
    idx = np.clip((t / h).astype(int), 0, n - 1)
    s = (t - idx * h) / h
    cols = np.arange(xs.shape[1])
    x0, x1 = xs[idx, cols], xs[idx + 1, cols]
    v0, v1 = vs[idx, cols], vs[idx + 1, cols]
    s = s[:, None]
    h00 = 1.0 - 3.0 * s**2 + 2.0 * s**3
    h10 = s - 2.0 * s**2 + s**3
    h01 = 3.0 * s**2 - 2.0 * s**3
    h11 = -(s**2) + s**3
    pos = h00 * x0 + h10 * h * v0 + h01 * x1 + h11 * h * v1
    d00 = (-6.0 * s + 6.0 * s**2) / h
    d10 = 1.0 - 4.0 * s + 3.0 * s**2
    d01 = (6.0 * s - 6.0 * s**2) / h
    d11 = -2.0 * s + 3.0 * s**2
    vel = d00 * x0 + d10 * v0 + d01 * x1 + d11 * v1
    return pos, vel


# ---------------------------------------------------------------------------
# backend base class
# ---------------------------------------------------------------------------


class ManifoldBackend:
    """Base class: a model geometry in one global chart."""

    kind = "abstract"

    def __init__(self, chart_domain, curvature_sign, geo_step=0.02, n_fan=512):
        self.chart_domain = chart_domain
        self.curvature_sign = curvature_sign
        self.geo_step = float(geo_step)
        self.n_fan = int(n_fan)

    # -- tensors (subclasses implement the *_batch forms) -------------------

    def metric_batch(self, pts):
        raise NotImplementedError

    def metric_grad_batch(self, pts):
        """Partial derivatives of the metric: [n, k, i, j] = d_k g_ij."""
        raise NotImplementedError

    def christoffel_batch(self, pts):
        """Christoffel symbols: [n, k, i, j] = Gamma^k_ij."""
        g = self.metric_batch(pts)
        dg = self.metric_grad_batch(pts)
        ginv = np.linalg.inv(g)
        # Gamma^k_ij = 1/2 g^{kl} (d_i g_lj + d_j g_li - d_l g_ij)
        term = np.einsum("nilj->nijl", dg) + np.einsum("njli->nijl", dg) - np.einsum("nlij->nijl", dg)
        return 0.5 * np.einsum("nkl,nijl->nkij", ginv, term)

    def area_density_batch(self, pts):
        g = self.metric_batch(pts)
        return np.sqrt(np.linalg.det(g))

    def metric(self, p):
        return self.metric_batch(np.asarray(p, dtype=float)[None])[0]

    def area_density(self, p):
        return float(self.area_density_batch(np.asarray(p, dtype=float)[None])[0])

    def area_density_grad_batch(self, pts):
        """d_k sqrt(det g) = sqrt(det g) * Gamma^l_{kl}."""
        dens = self.area_density_batch(pts)
        gam = self.christoffel_batch(pts)
        return dens[:, None] * np.einsum("nlkl->nk", gam)

    def geodesic_acceleration_batch(self, pts, vel):
        """-Gamma(x)(v, v); overridden with closed forms where available."""
        gam = self.christoffel_batch(pts)
        return -np.einsum("nkij,ni,nj->nk", gam, vel, vel)

    def orthonormal_frame(self, p):
        """Positively oriented g-orthonormal frame (u1, u2) at p, chart rows."""
        g = self.metric(p)
        u1 = np.array([1.0, 0.0]) / math.sqrt(g[0, 0])
        w = np.array([-g[0, 1] / g[0, 0], 1.0])
        u2 = w * math.sqrt(g[0, 0] / (g[0, 0] * g[1, 1] - g[0, 1] ** 2))
        return u1, u2

    def norm(self, p, v):
        g = self.metric(p)
        v = np.asarray(v, dtype=float)
        return float(np.sqrt(v @ g @ v))

    # -- geodesics -----------------------------------------------------------

    def exp(self, p, v, n_steps=None):
        """Exponential map: follow the geodesic with initial velocity v for unit time."""
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        speed = self.norm(p, v)
        if speed < 1e-15:
            return p.copy()
        if n_steps is None:
            n_steps = max(8, int(math.ceil(speed / self.geo_step)))
        x, _ = geodesic_rk4(self, p[None], v[None], 1.0, n_steps)
        out = x[0]
        if not bool(self.chart_domain.contains(out[None])[0]):
            raise OutOfChart(f"exp left the chart at {out}")
        return out

    def geodesic_data_many(self, c, pts, warm=None, return_warm=False):
        """Minimal geodesics from c to each target point.

        Returns (dist, dep, arr): geodesic lengths, metric-unit departure
        directions at c, and metric-unit arrival directions at the targets
        (pointing away from c).  Solved by two-point shooting with Newton
        iteration on (initial angle, arclength); ``warm`` may carry the
        (alpha, t) solution of a nearby previous solve.
        """
        out = self._shooting_bvp(c, pts, warm=warm)
        if return_warm:
            return out
        return out[:3]

    def distance(self, p, q):
        d, _, _ = self.geodesic_data_many(np.asarray(p, float), np.asarray(q, float)[None])
        return float(d[0])

    def distance_many(self, c, pts):
        d, _, _ = self.geodesic_data_many(c, pts)
        return d

    def departure_directions(self, c, pts):
        _, dep, _ = self.geodesic_data_many(c, pts)
        return dep

    def arrival_directions(self, c, pts):
        _, _, arr = self.geodesic_data_many(c, pts)
        return arr

    def _shooting_bvp(self, c, pts, tol=1e-10, max_iter=30, warm=None,
                      allow_fail=False):
        c = np.asarray(c, dtype=float)
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        n = len(pts)
        u1, u2 = self.orthonormal_frame(c)
        gmid = self.metric_batch(0.5 * (pts + c))
        w = pts - c
        t = np.sqrt(np.einsum("ni,nij,nj->n", w, gmid, w))
        degenerate = t < 1e-14
        gc = self.metric(c)
        a1 = np.einsum("i,ij,nj->n", u1, gc, w)
        a2 = np.einsum("i,ij,nj->n", u2, gc, w)
        alpha = np.arctan2(a2, a1)

        dist = np.zeros(n)
        dep = np.zeros((n, 2))
        arr = np.zeros((n, 2))
        alpha_out = np.zeros(n)
        solved = np.zeros(n, dtype=bool) | degenerate
        if not np.any(~solved):
            return dist, dep, arr, (alpha_out, dist.copy())

        if warm is not None:
            idx = np.where(~solved)[0]
            ok, d_i, a_i, dep_i, arr_i = self._newton_shoot(
                c, pts[idx], warm[0][idx], np.maximum(warm[1][idx], 1e-8),
                u1, u2, tol, 12
            )
            hit = idx[ok]
            dist[hit], dep[hit], arr[hit] = d_i[ok], dep_i[ok], arr_i[ok]
            alpha_out[hit] = a_i[ok]
            solved[hit] = True

        offsets = [0.0, 0.35, -0.35, 0.9, -0.9, math.pi]
        for off in offsets:
            idx = np.where(~solved)[0]
            if len(idx) == 0:
                break
            ok, d_i, a_i, dep_i, arr_i = self._newton_shoot(
                c, pts[idx], alpha[idx] + off, t[idx], u1, u2, tol, max_iter
            )
            hit = idx[ok]
            dist[hit], dep[hit], arr[hit] = d_i[ok], dep_i[ok], arr_i[ok]
            alpha_out[hit] = a_i[ok]
            solved[hit] = True

        if not np.all(solved):
            if not allow_fail:
                raise NoConvergence(
                    f"two-point geodesic solve failed for {int(np.sum(~solved))} targets"
                )
            dist[~solved] = np.inf
        return dist, dep, arr, (alpha_out, dist.copy())

    def _newton_shoot(self, c, pts, alpha, t, u1, u2, tol, max_iter):
        m = len(pts)
        alpha = alpha.copy()
        t = np.maximum(t.copy(), 1e-8)
        ok = np.zeros(m, dtype=bool)
        scale = 1.0 + np.linalg.norm(pts - c, axis=1)
        h = self.geo_step
        d_alpha = 1e-6
        for _ in range(max_iter):
            dirs = np.cos(alpha)[:, None] * u1 + np.sin(alpha)[:, None] * u2
            dirs2 = (
                np.cos(alpha + d_alpha)[:, None] * u1
                + np.sin(alpha + d_alpha)[:, None] * u2
            )
            t_cap = float(np.max(t)) * 1.05 + 4.0 * h
            n_steps = max(8, int(math.ceil(t_cap / h)))
            starts = np.broadcast_to(c, (m, 2))
            xs, vs = geodesic_rk4(self, starts, dirs, t_cap, n_steps, return_traj=True)
            xs2, vs2 = geodesic_rk4(self, starts, dirs2, t_cap, n_steps, return_traj=True)
            hh = t_cap / n_steps
            pos, vel = _hermite_sample(xs, vs, hh, t)
            pos2, _ = _hermite_sample(xs2, vs2, hh, t)
            res = pos - pts
            rnorm = np.linalg.norm(res, axis=1)
            ok = rnorm <= tol * scale
            if np.all(ok):
                break
            jac = np.stack([vel, (pos2 - pos) / d_alpha], axis=2)
            det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
            bad = np.abs(det) < 1e-14
            det = np.where(bad, 1.0, det)
            dt = -(jac[:, 1, 1] * res[:, 0] - jac[:, 0, 1] * res[:, 1]) / det
            da = -(-jac[:, 1, 0] * res[:, 0] + jac[:, 0, 0] * res[:, 1]) / det
            dt = np.where(bad | ok, 0.0, dt)
            da = np.where(bad | ok, 0.0, np.clip(da, -0.5, 0.5))
            t = np.maximum(t + np.clip(dt, -0.5 * t, 0.5 * t + 0.1), 1e-8)
            alpha = alpha + da
        dirs = np.cos(alpha)[:, None] * u1 + np.sin(alpha)[:, None] * u2
        gq = self.metric_batch(pos)
        speed = np.sqrt(np.einsum("ni,nij,nj->n", vel, gq, vel))
        arr = vel / np.maximum(speed, 1e-300)[:, None]
        return ok, t, alpha, dirs, arr

    # -- ball measures (generic fan route) -----------------------------------

    def fan_points(self, center, r, n_fan=None, n_steps=None):
        """Boundary of the geodesic ball: points at arclength r along a fan."""
        center = np.asarray(center, dtype=float)
        n_fan = n_fan or self.n_fan
        if n_steps is None:
            n_steps = max(16, int(math.ceil(r / self.geo_step)))
        u1, u2 = self.orthonormal_frame(center)
        ang = TWO_PI * np.arange(n_fan) / n_fan
        dirs = np.cos(ang)[:, None] * u1 + np.sin(ang)[:, None] * u2
        starts = np.broadcast_to(center, (n_fan, 2))
        x, _ = geodesic_rk4(self, starts, r * dirs, 1.0, n_steps)
        inside = self.chart_domain.contains(x)
        if not np.all(inside):
            raise OutOfChart("geodesic ball exits the chart domain")
        return x

    def ball_measures(self, center, r):
        """(volume, perimeter) of the geodesic ball, fan shooting route."""
        pts = self.fan_points(center, r)
        return self._polygon_measures(np.asarray(center, dtype=float), pts)

    def _polygon_measures(self, anchor, pts):
        """Signed fan quadrature of the area density plus chord perimeter."""
        nxt = np.roll(pts, -1, axis=0)
        # signed triangle areas of (anchor, p_i, p_{i+1})
        d1 = pts - anchor
        d2 = nxt - anchor
        tri = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        quad_pts = (
            _TRI_BARY[None, :, 0, None] * anchor[None, None, :]
            + _TRI_BARY[None, :, 1, None] * pts[:, None, :]
            + _TRI_BARY[None, :, 2, None] * nxt[:, None, :]
        )
        dens = self.area_density_batch(quad_pts.reshape(-1, 2)).reshape(len(pts), 6)
        vol = float(np.sum(tri * (dens @ _TRI_W)))
        mids = 0.5 * (pts + nxt)
        g = self.metric_batch(mids)
        seg = nxt - pts
        per = float(np.sum(np.sqrt(np.einsum("ni,nij,nj->n", seg, g, seg))))
        return vol, per

    def ball_boundary_curvature(self, center, r):
        """Geodesic curvature of the ball boundary: P'(r)/P(r), central FD."""
        dr = max(1e-4, 1e-4 * r)
        _, p_plus = self.ball_measures(center, r + dr)
        _, p_minus = self.ball_measures(center, r - dr)
        _, p0 = self.ball_measures(center, r)
        return (p_plus - p_minus) / (2.0 * dr) / p0


# ---------------------------------------------------------------------------
# Euclidean plane
# ---------------------------------------------------------------------------


class EuclideanPlane(ManifoldBackend):
    kind = "euclidean"

    def __init__(self, extent=1e6, **kw):
        dom = ChartDomain("rect", bounds=(-extent, extent, -extent, extent))
        super().__init__(dom, NONNEGATIVE, **kw)

    def metric_batch(self, pts):
        pts = np.atleast_2d(pts)
        out = np.zeros((len(pts), 2, 2))
        out[:, 0, 0] = out[:, 1, 1] = 1.0
        return out

    def metric_grad_batch(self, pts):
        pts = np.atleast_2d(pts)
        return np.zeros((len(pts), 2, 2, 2))

    def christoffel_batch(self, pts):
        pts = np.atleast_2d(pts)
        return np.zeros((len(pts), 2, 2, 2))

    def area_density_batch(self, pts):
        pts = np.atleast_2d(pts)
        return np.ones(len(pts))

    def geodesic_acceleration_batch(self, pts, vel):
        return np.zeros_like(np.atleast_2d(vel))

    def geodesic_data_many(self, c, pts, warm=None, return_warm=False):
        c = np.asarray(c, dtype=float)
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        w = pts - c
        d = np.linalg.norm(w, axis=1)
        unit = np.divide(w, np.maximum(d, 1e-300)[:, None])
        if return_warm:
            return d, unit, unit.copy(), None
        return d, unit, unit.copy()

    def exp(self, p, v, n_steps=None):
        return np.asarray(p, dtype=float) + np.asarray(v, dtype=float)

    def ball_measures(self, center, r):
        return math.pi * r * r, TWO_PI * r

    def ball_boundary_curvature(self, center, r):
        return 1.0 / r


# ---------------------------------------------------------------------------
# conformal backends: hyperbolic plane and sphere
# ---------------------------------------------------------------------------


class _ConformalBackend(ManifoldBackend):
    """Metric lambda(x)^2 * identity; subclasses provide lambda and its gradient."""

    def _lam(self, pts):
        raise NotImplementedError

    def _dlog_lam(self, pts):
        """Gradient of log(lambda), shape (N, 2)."""
        raise NotImplementedError

    def metric_batch(self, pts):
        pts = np.atleast_2d(pts)
        lam2 = self._lam(pts) ** 2
        out = np.zeros((len(pts), 2, 2))
        out[:, 0, 0] = lam2
        out[:, 1, 1] = lam2
        return out

    def metric_grad_batch(self, pts):
        pts = np.atleast_2d(pts)
        lam = self._lam(pts)
        s = self._dlog_lam(pts)
        out = np.zeros((len(pts), 2, 2, 2))
        d_lam2 = 2.0 * lam[:, None] ** 2 * s  # (N, 2) gradient of lambda^2
        out[:, :, 0, 0] = d_lam2
        out[:, :, 1, 1] = d_lam2
        return out

    def christoffel_batch(self, pts):
        pts = np.atleast_2d(pts)
        s = self._dlog_lam(pts)
        n = len(pts)
        out = np.zeros((n, 2, 2, 2))
        eye = np.eye(2)
        # Gamma^k_ij = delta_ik s_j + delta_jk s_i - delta_ij s_k
        out += np.einsum("ki,nj->nkij", eye, s)
        out += np.einsum("kj,ni->nkij", eye, s)
        out -= np.einsum("ij,nk->nkij", eye, s)
        return out

    def area_density_batch(self, pts):
        pts = np.atleast_2d(pts)
        return self._lam(pts) ** 2

    def geodesic_acceleration_batch(self, pts, vel):
        s = self._dlog_lam(np.atleast_2d(pts))
        sv = np.einsum("ni,ni->n", s, vel)
        v2 = np.einsum("ni,ni->n", vel, vel)
        return v2[:, None] * s - 2.0 * sv[:, None] * vel


class HyperbolicPlane(_ConformalBackend):
    """Constant curvature K < 0 in the conformal unit-disk chart."""

    kind = "hyperbolic"

    def __init__(self, curvature=-1.0, **kw):
        if curvature >= 0.0:
            raise ValueError("hyperbolic curvature must be negative")
        self.curvature = float(curvature)
        self.k = math.sqrt(-self.curvature)
        dom = ChartDomain("disk", radius=1.0 - 1e-9)
        super().__init__(dom, NONPOSITIVE, **kw)

    def _lam(self, pts):
        r2 = np.einsum("ni,ni->n", pts, pts)
        return (2.0 / self.k) / (1.0 - r2)

    def _dlog_lam(self, pts):
        r2 = np.einsum("ni,ni->n", pts, pts)
        return 2.0 * pts / (1.0 - r2)[:, None]

    def distance_many(self, c, pts):
        c = np.asarray(c, dtype=float)
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        diff = pts - c
        num = 2.0 * np.einsum("ni,ni->n", diff, diff)
        den = (1.0 - c @ c) * (1.0 - np.einsum("ni,ni->n", pts, pts))
        return np.arccosh(1.0 + np.maximum(num / den, 0.0)) / self.k

    def distance(self, p, q):
        return float(self.distance_many(np.asarray(p, float), np.asarray(q, float)[None])[0])

    @staticmethod
    def _chart_direction(pz, qz):
        """Chart directions at points pz toward qz (Moebius transport to 0).

        Works because the Moebius map sending p to the origin has a positive
        real derivative at p, so chart directions are preserved.
        """
        w = (qz - pz) / (1.0 - np.conj(pz) * qz)
        w = np.where(np.abs(w) < 1e-300, 1.0, w)
        w = w / np.abs(w)
        return np.stack([w.real, w.imag], axis=-1)

    def geodesic_data_many(self, c, pts, warm=None, return_warm=False):
        c = np.asarray(c, dtype=float)
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        d = self.distance_many(c, pts)
        cz = c[0] + 1j * c[1]
        qz = pts[:, 0] + 1j * pts[:, 1]
        lam_c = self._lam(c[None])[0]
        dep = self._chart_direction(np.full_like(qz, cz), qz) / lam_c
        lam_q = self._lam(pts)
        arr = -self._chart_direction(qz, np.full_like(qz, cz)) / lam_q[:, None]
        if return_warm:
            return d, dep, arr, None
        return d, dep, arr

    def ball_measures(self, center, r):
        k = self.k
        vol = TWO_PI * (math.cosh(k * r) - 1.0) / k**2
        per = TWO_PI * math.sinh(k * r) / k
        return vol, per

    def ball_boundary_curvature(self, center, r):
        return self.k / math.tanh(self.k * r)


class Sphere(_ConformalBackend):
    """Round sphere of the given radius in the stereographic chart.

    The chart origin is the point of tangency; its antipode (the projection
    pole) is excluded.  Experiments keep regions within a hemisphere, i.e.
    chart radius <= 1.
    """

    kind = "sphere"

    def __init__(self, radius=1.0, chart_radius=40.0, **kw):
        if radius <= 0.0:
            raise ValueError("sphere radius must be positive")
        self.radius = float(radius)
        dom = ChartDomain("disk", radius=chart_radius)
        super().__init__(dom, NONNEGATIVE, **kw)

    def _lam(self, pts):
        r2 = np.einsum("ni,ni->n", pts, pts)
        return 2.0 * self.radius / (1.0 + r2)

    def _dlog_lam(self, pts):
        r2 = np.einsum("ni,ni->n", pts, pts)
        return -2.0 * pts / (1.0 + r2)[:, None]

    def embed(self, pts):
        """Chart -> points on the sphere of radius R in 3-space."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        r2 = np.einsum("ni,ni->n", pts, pts)
        out = np.empty((len(pts), 3))
        out[:, 0] = 2.0 * pts[:, 0]
        out[:, 1] = 2.0 * pts[:, 1]
        out[:, 2] = 1.0 - r2
        return self.radius * out / (1.0 + r2)[:, None]

    def _embed_jac_batch(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        s = 1.0 + x * x + y * y
        jac = np.empty((len(pts), 3, 2))
        jac[:, 0, 0] = 2.0 * s - 4.0 * x * x
        jac[:, 0, 1] = -4.0 * x * y
        jac[:, 1, 0] = -4.0 * x * y
        jac[:, 1, 1] = 2.0 * s - 4.0 * y * y
        jac[:, 2, 0] = -4.0 * x
        jac[:, 2, 1] = -4.0 * y
        return self.radius * jac / (s * s)[:, None, None]

    def distance_many(self, c, pts):
        c3 = self.embed(np.asarray(c, float)[None])[0] / self.radius
        q3 = self.embed(pts) / self.radius
        dots = np.clip(q3 @ c3, -1.0, 1.0)
        cross = np.linalg.norm(np.cross(np.broadcast_to(c3, q3.shape), q3), axis=1)
        return self.radius * np.arctan2(cross, dots)

    def distance(self, p, q):
        return float(self.distance_many(np.asarray(p, float), np.asarray(q, float)[None])[0])

    @staticmethod
    def _tangent_toward(base3, target3):
        """Unit tangents at unit-vectors base3 toward unit-vectors target3."""
        proj = target3 - np.einsum("ni,ni->n", target3, base3)[:, None] * base3
        nrm = np.linalg.norm(proj, axis=1)
        return proj / np.maximum(nrm, 1e-300)[:, None]

    def _pullback_batch(self, pts, w3):
        """Chart tangents v with J(p) v = w3 (normal-equation solve)."""
        jac = self._embed_jac_batch(pts)
        g = np.einsum("nai,naj->nij", jac, jac)
        rhs = np.einsum("nai,na->ni", jac, w3)
        return np.einsum("nij,nj->ni", np.linalg.inv(g), rhs)

    def geodesic_data_many(self, c, pts, warm=None, return_warm=False):
        c = np.asarray(c, dtype=float)
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        d = self.distance_many(c, pts)
        c3 = self.embed(c[None])[0] / self.radius
        q3 = self.embed(pts) / self.radius
        c3b = np.broadcast_to(c3, q3.shape)
        dep3 = self._tangent_toward(c3b.copy(), q3)
        dep = self._pullback_batch(np.broadcast_to(c, pts.shape).copy(), dep3)
        arr3 = -self._tangent_toward(q3, c3b.copy())
        arr = self._pullback_batch(pts, arr3)
        if return_warm:
            return d, dep, arr, None
        return d, dep, arr

    def ball_measures(self, center, r):
        R = self.radius
        if r >= math.pi * R:
            raise OutOfChart("ball radius exceeds the sphere diameter chart limit")
        vol = TWO_PI * R * R * (1.0 - math.cos(r / R))
        per = TWO_PI * R * math.sin(r / R)
        return vol, per

    def ball_boundary_curvature(self, center, r):
        return 1.0 / (self.radius * math.tan(r / self.radius))


# ---------------------------------------------------------------------------
# warped rotational surface
# ---------------------------------------------------------------------------


class WarpedSurface(ManifoldBackend):
    """Metric dr^2 + phi(r)^2 dtheta^2 in the Cartesian-like chart.

    Chart point x corresponds to geodesic polar (|x|, atan2(x2, x1)); radial
    lines through the apex are unit-speed geodesics, so chart radii are
    geodesic distances to the apex.
    """

    kind = "warped"

    def __init__(self, profile, chart_radius=64.0, curvature_sign=None, **kw):
        self.profile = profile
        if curvature_sign is None:
            curvature_sign = getattr(profile, "curvature_sign", MIXED)
        dom = ChartDomain("disk", radius=chart_radius)
        super().__init__(dom, curvature_sign, **kw)
        self.validate_curvature_sign()

    # beta(r) = (phi(r)/r)^2 is the tangential metric eigenvalue
    def _beta(self, r):
        small = r < 1e-6
        safe = np.where(small, 1.0, r)
        b = (self.profile(safe) / safe) ** 2
        return np.where(small, 1.0, b)

    def _beta_prime(self, r):
        small = r < 1e-6
        safe = np.where(small, 1.0, r)
        phi = self.profile(safe)
        dphi = self.profile.d1(safe)
        bp = 2.0 * (phi / safe) * (dphi * safe - phi) / safe**2
        return np.where(small, 0.0, bp)

    def metric_batch(self, pts):
        pts = np.atleast_2d(pts)
        r = np.linalg.norm(pts, axis=1)
        beta = self._beta(r)
        small = r < 1e-12
        safe = np.where(small, 1.0, r)
        u = pts / safe[:, None]
        uu = np.einsum("ni,nj->nij", u, u)
        eye = np.eye(2)[None]
        out = beta[:, None, None] * eye + (1.0 - beta)[:, None, None] * uu
        out[small] = eye
        return out

    def metric_grad_batch(self, pts):
        pts = np.atleast_2d(pts)
        n = len(pts)
        r = np.linalg.norm(pts, axis=1)
        small = r < 1e-6
        safe = np.where(small, 1.0, r)
        u = pts / safe[:, None]
        beta = self._beta(r)
        bp = self._beta_prime(r)
        gamma = 1.0 - beta
        eye = np.eye(2)
        uu = np.einsum("ni,nj->nij", u, u)
        du = (eye[None] - uu) / safe[:, None, None]  # d_k u_i = (delta_ik - u_i u_k)/r
        out = np.zeros((n, 2, 2, 2))
        out += np.einsum("nk,ij->nkij", bp[:, None] * u, eye)
        out += np.einsum("nk,nij->nkij", -bp[:, None] * u, uu)
        out += gamma[:, None, None, None] * (
            np.einsum("nik,nj->nkij", du, u) + np.einsum("ni,njk->nkij", u, du)
        )
        out[small] = 0.0
        return out

    def area_density_batch(self, pts):
        pts = np.atleast_2d(pts)
        r = np.linalg.norm(pts, axis=1)
        small = r < 1e-6
        safe = np.where(small, 1.0, r)
        dens = self.profile(safe) / safe
        return np.where(small, 1.0, dens)

    def geodesic_acceleration_batch(self, pts, vel):
        # polar geodesic equations pushed to the Cartesian-like chart:
        # a = (phi phi' - r) tdot^2 u + 2 rdot tdot (1 - r phi'/phi) u_perp
        pts = np.atleast_2d(pts)
        r = np.linalg.norm(pts, axis=1)
        small = r < 1e-9
        safe = np.where(small, 1.0, r)
        u = pts / safe[:, None]
        uperp = np.stack([-u[:, 1], u[:, 0]], axis=1)
        rdot = np.einsum("ni,ni->n", vel, u)
        tdot = np.einsum("ni,ni->n", vel, uperp) / safe
        phi = self.profile(safe)
        dphi = self.profile.d1(safe)
        rad_comp = (phi * dphi - safe) * tdot**2
        tan_comp = 2.0 * rdot * tdot * (1.0 - safe * dphi / phi)
        acc = rad_comp[:, None] * u + tan_comp[:, None] * uperp
        acc[small] = 0.0
        return acc

    def validate_curvature_sign(self, n_samples=64):
        """Sampled Gauss curvature must match the declared tag."""
        rr = np.linspace(1e-3, self.chart_domain.radius * 0.98, n_samples)
        kk = self.profile.gauss_curvature(rr)
        tol = 1e-10 * (1.0 + float(np.max(np.abs(kk))))
        if self.curvature_sign == NONNEGATIVE and np.any(kk < -tol):
            raise ValueError("declared NonNegative but sampled curvature is negative")
        if self.curvature_sign == NONPOSITIVE and np.any(kk > tol):
            raise ValueError("declared NonPositive but sampled curvature is positive")

    def asymptotic_deviation(self, d):
        """Deviation of the metric at radius d from its asymptotic cone values."""
        r_far = self.chart_domain.radius * 0.98
        slope = float(self.profile.d1(r_far))
        offset = float(self.profile(r_far)) - slope * r_far
        phi_d = float(self.profile(d))
        cone = slope * d + offset
        return abs(phi_d - cone) / max(abs(phi_d), 1e-300) + abs(
            float(self.profile.d1(d)) - slope
        )

    def geodesic_data_many(self, c, pts, warm=None, return_warm=False):
        c = np.asarray(c, dtype=float)
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        rc = float(np.linalg.norm(c))
        rq = np.linalg.norm(pts, axis=1)
        if rc < 1e-12:
            # radial geodesics from the apex are chart-straight
            d = rq.copy()
            unit = np.divide(pts, np.maximum(rq, 1e-300)[:, None])
            if return_warm:
                return d, unit, unit.copy(), None
            return d, unit, unit.copy()
        d, dep, arr, warm_out = super().geodesic_data_many(
            c, pts, warm=warm, return_warm=True
        )
        # through-apex candidate: radial in, radial out
        d_apex = rc + rq
        better = d_apex < d - 1e-12
        if np.any(better):
            d = np.where(better, d_apex, d)
            cu = c / rc
            dep[better] = -cu
            arr[better] = pts[better] / np.maximum(rq[better], 1e-300)[:, None]
        if return_warm:
            return d, dep, arr, warm_out
        return d, dep, arr

    def ball_measures(self, center, r):
        center = np.asarray(center, dtype=float)
        if float(np.linalg.norm(center)) < 1e-12:
            if r > self.chart_domain.radius:
                raise OutOfChart("apex ball exceeds the chart")
            if hasattr(self.profile, "integral"):
                vol = TWO_PI * self.profile.integral(r)
            else:
                vol = TWO_PI * _sciint.quad(self.profile, 0.0, r, limit=200)[0]
            per = TWO_PI * float(self.profile(r))
            return vol, per
        return super().ball_measures(center, r)

    def ball_boundary_curvature(self, center, r):
        center = np.asarray(center, dtype=float)
        if float(np.linalg.norm(center)) < 1e-12:
            return float(self.profile.d1(r) / self.profile(r))
        return super().ball_boundary_curvature(center, r)


# ---------------------------------------------------------------------------
# channel surface (no apex)
# ---------------------------------------------------------------------------


class ChannelSurface(ManifoldBackend):
    """Metric du^2 + w(u)^2 dv^2 on a strip; u may take both signs.

    With ``periodic=2*pi`` the v coordinate is an angle and distances take the
    shortest representative.  Used for induced metrics of minimal surfaces
    such as the helicoid (w(u) = sqrt(1 + u^2)) and, via the meridian
    arclength substitution, the catenoid.
    """

    kind = "channel"

    def __init__(self, w, dw, u_extent=64.0, v_extent=1e6, periodic=None,
                 curvature_sign=MIXED, **kw):
        self.w = w
        self.dw = dw
        self.periodic = periodic
        dom = ChartDomain("rect", bounds=(-u_extent, u_extent, -v_extent, v_extent))
        super().__init__(dom, curvature_sign, **kw)

    @classmethod
    def helicoid(cls, **kw):
        kw.setdefault("curvature_sign", NONPOSITIVE)
        return cls(
            w=lambda u: np.sqrt(1.0 + np.asarray(u, float) ** 2),
            dw=lambda u: np.asarray(u, float) / np.sqrt(1.0 + np.asarray(u, float) ** 2),
            **kw,
        )

    @classmethod
    def catenoid_intrinsic(cls, **kw):
        # catenoid metric cosh^2 t (dt^2 + dtheta^2) equals ds^2 + (1+s^2) dtheta^2
        # after the meridian arclength substitution s = sinh t
        kw.setdefault("periodic", TWO_PI)
        kw.setdefault("curvature_sign", NONPOSITIVE)
        return cls(
            w=lambda u: np.sqrt(1.0 + np.asarray(u, float) ** 2),
            dw=lambda u: np.asarray(u, float) / np.sqrt(1.0 + np.asarray(u, float) ** 2),
            **kw,
        )

    def metric_batch(self, pts):
        pts = np.atleast_2d(pts)
        out = np.zeros((len(pts), 2, 2))
        out[:, 0, 0] = 1.0
        out[:, 1, 1] = self.w(pts[:, 0]) ** 2
        return out

    def metric_grad_batch(self, pts):
        pts = np.atleast_2d(pts)
        out = np.zeros((len(pts), 2, 2, 2))
        out[:, 0, 1, 1] = 2.0 * self.w(pts[:, 0]) * self.dw(pts[:, 0])
        return out

    def christoffel_batch(self, pts):
        pts = np.atleast_2d(pts)
        out = np.zeros((len(pts), 2, 2, 2))
        ww = self.w(pts[:, 0])
        dww = self.dw(pts[:, 0])
        out[:, 0, 1, 1] = -ww * dww
        out[:, 1, 0, 1] = dww / ww
        out[:, 1, 1, 0] = dww / ww
        return out

    def area_density_batch(self, pts):
        pts = np.atleast_2d(pts)
        return np.abs(self.w(pts[:, 0]))

    def geodesic_acceleration_batch(self, pts, vel):
        pts = np.atleast_2d(pts)
        ww = self.w(pts[:, 0])
        dww = self.dw(pts[:, 0])
        acc = np.empty_like(vel)
        acc[:, 0] = ww * dww * vel[:, 1] ** 2
        acc[:, 1] = -2.0 * (dww / ww) * vel[:, 0] * vel[:, 1]
        return acc

    def geodesic_data_many(self, c, pts, warm=None, return_warm=False):
        if self.periodic is None:
            return super().geodesic_data_many(c, pts, warm=warm, return_warm=return_warm)
        # the metric is independent of v, so the minimal geodesic never winds
        # the long way around: wrap the angular offset into (-T/2, T/2]
        c = np.asarray(c, dtype=float)
        pts = np.atleast_2d(np.asarray(pts, dtype=float)).copy()
        dv = pts[:, 1] - c[1]
        pts[:, 1] = c[1] + dv - self.periodic * np.round(dv / self.periodic)
        return super().geodesic_data_many(c, pts, warm=warm, return_warm=return_warm)


# ---------------------------------------------------------------------------
# embedded surface
# ---------------------------------------------------------------------------


class EmbeddedSurface(ManifoldBackend):
    """Immersion of a chart region into 3-space with the induced metric.

    ``immersion`` maps (N, 2) chart points to (N, 3); supply ``jacobian``
    (N, 3, 2) where available, else it is approximated by central finite
    differences.  ``metric_fn`` may override the induced metric with a closed
    form (e.g. a conformal factor).
    """

    kind = "embedded"

    def __init__(self, immersion, chart_domain, jacobian=None, metric_fn=None,
                 curvature_sign=MIXED, fd_step=1e-5, **kw):
        self.immersion = immersion
        self.jacobian = jacobian
        self.metric_fn = metric_fn
        self.fd_step = float(fd_step)
        super().__init__(chart_domain, curvature_sign, **kw)

    def embed(self, pts):
        return self.immersion(np.atleast_2d(np.asarray(pts, dtype=float)))

    def _jac(self, pts):
        pts = np.atleast_2d(pts)
        if self.jacobian is not None:
            return self.jacobian(pts)
        h = self.fd_step
        out = np.empty((len(pts), 3, 2))
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            out[:, :, k] = (self.immersion(pts + e) - self.immersion(pts - e)) / (2 * h)
        return out

    def metric_batch(self, pts):
        pts = np.atleast_2d(pts)
        if self.metric_fn is not None:
            return self.metric_fn(pts)
        jac = self._jac(pts)
        return np.einsum("nai,naj->nij", jac, jac)

    def metric_grad_batch(self, pts):
        pts = np.atleast_2d(pts)
        h = self.fd_step * 10.0
        out = np.empty((len(pts), 2, 2, 2))
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            out[:, k] = (self.metric_batch(pts + e) - self.metric_batch(pts - e)) / (2 * h)
        return out


# ---------------------------------------------------------------------------
# descriptors (JSON experiment configs)
# ---------------------------------------------------------------------------


def load_profile_csv(path):
    """Two-column CSV (r, phi(r)), strictly increasing r starting at 0."""
    data = np.loadtxt(path, delimiter=",")
    return TabulatedProfile(data[:, 0], data[:, 1])


def backend_from_descriptor(desc):
    """Build a backend from a JSON descriptor like {"kind": "warped", "a": 0.5}."""
    if not isinstance(desc, dict) or "kind" not in desc:
        raise ValueError("backend descriptor needs a 'kind' key")
    kind = desc["kind"]
    if kind == "euclidean":
        return EuclideanPlane()
    if kind == "hyperbolic":
        return HyperbolicPlane(curvature=desc.get("curvature", -1.0))
    if kind == "sphere":
        return Sphere(radius=desc.get("radius", 1.0))
    if kind == "warped":
        if "profile_csv" in desc:
            profile = load_profile_csv(desc["profile_csv"])
        else:
            profile = WarpProfile(desc["a"])
        return WarpedSurface(profile, chart_radius=desc.get("chart_radius", 64.0))
    if kind == "helicoid":
        return ChannelSurface.helicoid(u_extent=desc.get("u_extent", 64.0))
    raise ValueError(f"unknown backend kind: {kind!r}")


def backend_to_descriptor(backend):
    if backend.kind == "euclidean":
        return {"kind": "euclidean"}
    if backend.kind == "hyperbolic":
        return {"kind": "hyperbolic", "curvature": backend.curvature}
    if backend.kind == "sphere":
        return {"kind": "sphere", "radius": backend.radius}
    if backend.kind == "warped":
        prof = backend.profile
        if isinstance(prof, WarpProfile):
            return {"kind": "warped", "a": prof.a, "chart_radius": backend.chart_domain.radius}
        return {"kind": "warped", "a": None, "chart_radius": backend.chart_domain.radius}
    if backend.kind == "channel":
        return {"kind": "helicoid"}
    return {"kind": backend.kind}
