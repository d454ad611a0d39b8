"""Minimal enclosing balls: exact Welzl in Euclidean 2/3-space, geodesic
1-center on curved backends, and the extrinsic radius of a Region.

The Euclidean solver is the randomized incremental construction with the
boundary set carried explicitly (recursion depth bounded by the dimension),
deterministic for a fixed shuffle seed.  The curved solver minimizes the
smoothed maximum of geodesic distances with an annealed log-sum-exp, then
polishes with exact minimax subgradient steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyAttainment, NoConvergence

ATTAIN_TOL_FACTOR = 1e-6  # membership band for the attainment set, times radius


@dataclass
class EnclosingBall:
    center: np.ndarray
    radius: float
    attainment: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))

    def to_dict(self):
        return {
            "center": [float(c) for c in self.center],
            "radius": float(self.radius),
            "attainment_indices": [int(i) for i in self.attainment],
        }


# ---------------------------------------------------------------------------
# exact Euclidean minimal ball (n = 2 or 3)
# ---------------------------------------------------------------------------


def _ball_from(points):
    """Smallest ball with all given points (<= dim + 1 of them) on its boundary."""
    pts = np.asarray(points, dtype=float)
    k = len(pts)
    if k == 0:
        return np.zeros(2), -1.0
    if k == 1:
        return pts[0].copy(), 0.0
    if k == 2:
        c = 0.5 * (pts[0] + pts[1])
        return c, float(np.linalg.norm(pts[0] - c))
    # circumcenter of k points in dim-d space: solve in the affine span
    base = pts[0]
    rows = pts[1:] - base
    rhs = 0.5 * np.einsum("ij,ij->i", rows, rows)
    gram = rows @ rows.T
    try:
        coef = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        return base.copy(), math.inf
    c = base + coef @ rows
    return c, float(np.linalg.norm(pts[0] - c))


def _in_ball(p, c, r, slack):
    return np.linalg.norm(p - c) <= r + slack


def welzl(points, seed=0):
    """Exact smallest enclosing ball of Euclidean points (2D or 3D).

    Randomized incremental construction; deterministic given the shuffle seed.
    Falls back to brute force below 16 points.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] not in (2, 3):
        raise ValueError("points must be (N, 2) or (N, 3)")
    if len(pts) == 0:
        raise ValueError("need at least one point")
    if len(pts) < 16:
        c, r = _brute_force_ball(pts)
    else:
        rng = np.random.default_rng(seed)
        order = rng.permutation(len(pts))
        shuffled = pts[order]
        c, r = _msw(shuffled, pts.shape[1])
    scale = max(r, 1e-30)
    d = np.linalg.norm(pts - c, axis=1)
    attain = np.where(d >= r - ATTAIN_TOL_FACTOR * scale)[0]
    return EnclosingBall(center=c, radius=float(r), attainment=attain)


def _msw(pts, dim):
    slack = 1e-12 * max(float(np.max(np.abs(pts))), 1e-300)
    c, r = _ball_from(pts[:1])
    for i in range(1, len(pts)):
        if _in_ball(pts[i], c, r, slack):
            continue
        c, r = _with_one_on_boundary(pts[:i], pts[i], dim, slack)
    return c, r


def _with_one_on_boundary(pts, q, dim, slack):
    c, r = _ball_from([q])
    for i in range(len(pts)):
        if _in_ball(pts[i], c, r, slack):
            continue
        c, r = _with_two_on_boundary(pts[:i], pts[i], q, dim, slack)
    return c, r


def _with_two_on_boundary(pts, q1, q2, dim, slack):
    c, r = _ball_from([q1, q2])
    for i in range(len(pts)):
        if _in_ball(pts[i], c, r, slack):
            continue
        if dim == 2:
            c, r = _ball_from([pts[i], q1, q2])
        else:
            c, r = _with_three_on_boundary(pts[:i], pts[i], q1, q2, slack)
    return c, r


def _with_three_on_boundary(pts, q1, q2, q3, slack):
    c, r = _ball_from([q1, q2, q3])
    for i in range(len(pts)):
        if _in_ball(pts[i], c, r, slack):
            continue
        c, r = _ball_from([pts[i], q1, q2, q3])
    return c, r


def _brute_force_ball(pts):
    """All pair/triple (and quadruple in 3D) candidate balls; the oracle path."""
    n, dim = pts.shape
    if n == 1:
        return pts[0].copy(), 0.0
    slack = 1e-10 * max(float(np.max(np.abs(pts))), 1e-300)
    best_c, best_r = None, math.inf

    def consider(subset):
        nonlocal best_c, best_r
        c, r = _ball_from(subset)
        if r < best_r and np.all(np.linalg.norm(pts - c, axis=1) <= r + slack):
            best_c, best_r = c, r

    for i in range(n):
        for j in range(i + 1, n):
            consider(pts[[i, j]])
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                consider(pts[[i, j, k]])
    if dim == 3:
        for i in range(n):
            for j in range(i + 1, n):
                for k in range(j + 1, n):
                    for m in range(k + 1, n):
                        consider(pts[[i, j, k, m]])
    return best_c, best_r


def brute_force_meb(points):
    """Reference oracle: exhaustive candidate enumeration."""
    pts = np.asarray(points, dtype=float)
    c, r = _brute_force_ball(pts)
    d = np.linalg.norm(pts - c, axis=1)
    attain = np.where(d >= r - ATTAIN_TOL_FACTOR * max(r, 1e-30))[0]
    return EnclosingBall(center=c, radius=float(r), attainment=attain)


# ---------------------------------------------------------------------------
# geodesic 1-center
# ---------------------------------------------------------------------------


def geodesic_one_center(points, backend, beta0=None, stages=6, stage_iters=40,
                        polish_iters=50, init=None, tol=1e-9):
    """Minimax center of geodesic distances by annealed softmax descent.

    Minimizes c -> (1/beta) log sum exp(beta d_i(c)), doubling beta each
    stage, then runs exact minimax subgradient steps; the returned radius is
    the exact maximum distance at the final center.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(pts)
    if n == 1:
        return EnclosingBall(center=pts[0].copy(), radius=0.0,
                             attainment=np.array([0]))

    c = np.mean(pts, axis=0) if init is None else np.asarray(init, dtype=float)
    d, dep, _, warm = backend.geodesic_data_many(c, pts, return_warm=True)
    if beta0 is None:
        far = pts[int(np.argmax(d))]
        diam = float(np.max(backend.distance_many(far, pts)))
        beta0 = 32.0 / max(diam, 1e-12)

    def smoothed(dists, beta):
        m = float(np.max(dists))
        return m + math.log(float(np.sum(np.exp(beta * (dists - m))))) / beta

    beta = beta0
    best_c, best_r = c.copy(), float(np.max(d))
    for _ in range(stages):
        step = max(best_r, 1e-9) * 0.25
        f_val = smoothed(d, beta)
        for _ in range(stage_iters):
            w = np.exp(beta * (d - np.max(d)))
            w /= np.sum(w)
            # riemannian gradient of the softmax: minus the weighted departure dirs
            direction = np.einsum("n,ni->i", w, dep)
            moved = False
            s = step
            for _ in range(12):
                trial = c + s * direction
                if not bool(backend.chart_domain.contains(trial[None])[0]):
                    s *= 0.5
                    continue
                d_t, dep_t, _, warm_t = backend.geodesic_data_many(
                    trial, pts, warm=warm, return_warm=True
                )
                if smoothed(d_t, beta) < f_val - 1e-14:
                    c, d, dep, warm = trial, d_t, dep_t, warm_t
                    f_val = smoothed(d, beta)
                    moved = True
                    break
                s *= 0.5
            step = min(s * 2.0, max(best_r, 1e-9) * 0.25)
            r_now = float(np.max(d))
            if r_now < best_r:
                best_c, best_r = c.copy(), r_now
            if not moved:
                break
        beta *= 2.0
    # exact minimax polish
    c, last_move = best_c.copy(), math.inf
    d, dep, _, warm = backend.geodesic_data_many(c, pts, warm=warm, return_warm=True)
    for it in range(1, polish_iters + 1):
        r_now = float(np.max(d))
        if r_now < best_r:
            best_c, best_r = c.copy(), r_now
        active = d >= r_now - ATTAIN_TOL_FACTOR * max(r_now, 1e-30) * 1e3
        sub = np.mean(dep[active], axis=0)
        nrm = float(np.linalg.norm(sub))
        if nrm < 1e-14:
            last_move = 0.0
            break
        s = 0.5 * r_now / it
        trial = c + s * sub / max(nrm, 1e-30)
        if not bool(backend.chart_domain.contains(trial[None])[0]):
            continue
        last_move = s
        c = trial
        d, dep, _, warm = backend.geodesic_data_many(c, pts, warm=warm, return_warm=True)
    r_now = float(np.max(d))
    if r_now < best_r:
        best_c, best_r = c.copy(), r_now
    if not np.isfinite(best_r):
        raise NoConvergence("geodesic 1-center produced a non-finite radius")
    d_fin = backend.distance_many(best_c, pts)
    radius = float(np.max(d_fin))
    attain = np.where(d_fin >= radius - ATTAIN_TOL_FACTOR * max(radius, 1e-30))[0]
    if len(attain) == 0:
        raise EmptyAttainment("no attainment vertices at the final center")
    return EnclosingBall(center=best_c, radius=radius, attainment=attain)


def polish_one_center(points, backend, init_center, iters=30):
    """Cheap warm-started refinement used inside optimization loops."""
    return geodesic_one_center(points, backend, stages=0, polish_iters=iters,
                               init=init_center)


# ---------------------------------------------------------------------------
# extrinsic radius of a Region
# ---------------------------------------------------------------------------


def rad(region, seed=0, warm_center=None, polish_only=False):
    """Extrinsic radius of a region: minimal ball enclosing its vertices.

    Euclidean backends use the exact Welzl solve; curved backends the geodesic
    1-center (optionally warm-started for use inside optimizer loops).
    """
    verts = region.vertices
    backend = region.backend
    if backend.kind == "euclidean":
        return welzl(verts, seed=seed)
    if warm_center is not None and polish_only:
        return polish_one_center(verts, backend, warm_center)
    init = warm_center
    return geodesic_one_center(verts, backend, init=init)


def rad_ambient(points3d, seed=0):
    """Ambient 3-space radius of an embedded vertex cloud (exact Welzl)."""
    return welzl(np.asarray(points3d, dtype=float), seed=seed)
