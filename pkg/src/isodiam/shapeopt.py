"""Shape optimization of the mixed functional rad(E) * P(E) at fixed volume.

The descent direction combines the exact discrete perimeter gradient, the
max-type radius subgradient supported on the enclosing-ball attainment set,
and a projection removing the volume-normal component; volume is restored
after every trial step by a Newton-scaled normal displacement on a boundary
patch chosen away from the attainment set.  All gradients are exact
derivatives of the discrete measures, so central finite differences reproduce
them to roundoff; the classical geometric interpretation (curvature times
inward normal times dual length, boundary flux) holds up to O(1/N^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyAttainment,
    LineSearchFailed,
    NonSimplePolygon,
    PatchUnavailable,
    SelfIntersection,
)
from .meb import EnclosingBall, rad
from .region import Region

VOL_TOL = 1e-8  # relative volume tolerance after projection


@dataclass
class Perturbation:
    """Per-vertex displacement field in chart coordinates."""

    displacement: np.ndarray

    def sup_norm(self, region) -> float:
        g = region.backend.metric_batch(region.vertices)
        d = self.displacement
        return float(np.max(np.sqrt(np.einsum("ni,nij,nj->n", d, g, d))))

    def dot(self, other) -> float:
        return float(np.sum(self.displacement * other.displacement))


@dataclass
class ShapeState:
    region: Region
    ball: EnclosingBall
    target_volume: float
    multiplier_H0: float = 0.0
    prev_attainment: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))

    @property
    def functional_value(self) -> float:
        return self.ball.radius * self.region.perimeter()

    @property
    def ratio(self) -> float:
        return self.functional_value / (2.0 * self.region.volume())


def make_state(region, target_volume=None, seed=0):
    ball = rad(region, seed=seed)
    tv = region.volume() if target_volume is None else float(target_volume)
    return ShapeState(region=region, ball=ball, target_volume=tv)


def evaluate(state: ShapeState) -> float:
    """rad(E) * P(E), recomputed from the region (not trusted from caches)."""
    return state.ball.radius * state.region.perimeter()


# ---------------------------------------------------------------------------
# first variations
# ---------------------------------------------------------------------------


def perimeter_gradient(state: ShapeState) -> Perturbation:
    """Exact gradient of the discrete perimeter (pairs with plain dot product)."""
    return Perturbation(state.region.d_perimeter())


def volume_gradient(state: ShapeState) -> Perturbation:
    """Exact gradient of the discrete volume: the discrete boundary flux form."""
    return Perturbation(state.region.d_volume())


def radius_subgradient(state: ShapeState, eps_active=0.0) -> Perturbation:
    """Max-type subgradient of rad, supported on the attainment set.

    At each attaining vertex the chart covector of the outward radial
    direction, weighted by one over the support size; the support is the
    union of the current and previous attainment sets, which damps the
    discontinuous jumps of nonsmooth max-type terms.  A positive
    ``eps_active`` widens the support to all vertices within that distance of
    the maximum (any of them can become the maximum after a step of
    comparable size, by the one-sided bound |d rad| <= step sup norm); the
    optimizer shrinks it with the step size, so the exact attainment
    subgradient is recovered at convergence.
    """
    region, ball = state.region, state.ball
    support = np.union1d(ball.attainment, state.prev_attainment).astype(int)
    if len(support) == 0 and eps_active <= 0.0:
        raise EmptyAttainment("radius subgradient needs a nonempty attainment set")
    out = np.zeros_like(region.vertices)
    if eps_active > 0.0:
        # smooth convex weights over the eps-active band; they concentrate on
        # the exact attainment set as eps shrinks with the step size
        d = region.backend.distance_many(ball.center, region.vertices)
        w = np.exp((d - ball.radius) * (4.0 / eps_active))
        keep = w >= 1e-12
        idx = np.where(keep)[0]
        w = w[idx] / np.sum(w[idx])
        arr = region.backend.arrival_directions(ball.center, region.vertices[idx])
        g = region.backend.metric_batch(region.vertices[idx])
        cov = np.einsum("nij,nj->ni", g, arr)
        out[idx] = w[:, None] * cov
        return Perturbation(out)
    verts = region.vertices[support]
    arr = region.backend.arrival_directions(ball.center, verts)
    g = region.backend.metric_batch(verts)
    cov = np.einsum("nij,nj->ni", g, arr)
    out[support] = cov / len(support)
    return Perturbation(out)


def estimate_h0(state: ShapeState) -> float:
    """Least-squares multiplier from grad P ~ H0 grad V on the boundary."""
    gp = state.region.d_perimeter()
    gv = state.region.d_volume()
    denom = float(np.sum(gv * gv))
    return float(np.sum(gp * gv)) / denom if denom > 0 else 0.0


# ---------------------------------------------------------------------------
# volume projection
# ---------------------------------------------------------------------------


@dataclass
class ProjectionReport:
    deficit: float
    perimeter_before: float
    perimeter_after: float
    c1_bound: float
    perimeter_bound_ok: bool
    used_fallback: bool = False


def _choose_patch(n, exclude, frac=0.25):
    """Contiguous arc of ceil(frac*N) vertices avoiding the excluded indices."""
    m = max(4, int(math.ceil(frac * n)))
    excluded = np.zeros(n, dtype=bool)
    excluded[np.asarray(exclude, dtype=int) % n] = True
    best_start, best_score = None, -1.0
    ex_idx = np.where(excluded)[0]
    for start in range(n):
        idx = (start + np.arange(m)) % n
        if np.any(excluded[idx]):
            continue
        if len(ex_idx) == 0:
            score = 1.0
        else:
            mid = (start + m // 2) % n
            ring = np.minimum(np.abs(ex_idx - mid), n - np.abs(ex_idx - mid))
            score = float(np.min(ring))
        if score > best_score:
            best_start, best_score = start, score
    if best_start is None:
        raise PatchUnavailable("every candidate arc intersects the attainment set")
    return (best_start + np.arange(m)) % n


def project_volume(state: ShapeState, exclude=None, vol_tol=VOL_TOL, patch_frac=0.25,
                   max_newton=40):
    """Restore the target volume by a bump-shaped normal displacement.

    The displacement is supported on a contiguous boundary arc away from the
    attainment set and scaled by Newton iteration on the exact volume.  The
    report records the perimeter increase against the bound C1 * |deficit|
    with C1 = (max |curvature| + 1) * patch factor.
    """
    region = state.region
    target = state.target_volume
    v0 = region.volume()
    deficit = target - v0
    if abs(deficit) > 0.10 * target:
        raise ValueError("volume deficit exceeds 10% of the target")
    p_before = region.perimeter()
    if abs(deficit) <= vol_tol * target:
        return state, ProjectionReport(deficit, p_before, p_before, 0.0, True)

    n = len(region)
    if exclude is None:
        exclude = state.ball.attainment
    try:
        patch = _choose_patch(n, exclude, patch_frac)
        fallback = False
    except PatchUnavailable:
        if region.backend.kind != "euclidean":
            raise
        # global scaling toward the area centroid, flat backend only
        centroid = np.mean(region.vertices, axis=0)
        lam = math.sqrt(target / v0)
        verts = centroid + lam * (region.vertices - centroid)
        new_region = region.with_vertices(verts)
        new_state = ShapeState(new_region, state.ball, target, state.multiplier_H0,
                               state.prev_attainment)
        p_after = new_region.perimeter()
        kmax = float(np.max(np.abs(region.mean_curvature())))
        c1 = (kmax + 1.0) * 1.5
        return new_state, ProjectionReport(
            deficit, p_before, p_after, c1,
            p_after <= p_before + c1 * abs(deficit) + 1e-12, used_fallback=True,
        )

    m = len(patch)
    bump = np.sin(math.pi * (np.arange(m) + 0.5) / m) ** 2
    normals = region.inward_normals()
    field_dir = np.zeros_like(region.vertices)
    field_dir[patch] = -bump[:, None] * normals[patch]  # outward bump

    verts0 = region.vertices
    s = 0.0
    cur = region
    for _ in range(max_newton):
        vol = cur.volume()
        if abs(vol - target) <= vol_tol * target:
            break
        dvol = cur.d_volume()
        slope = float(np.sum(dvol * field_dir))
        if abs(slope) < 1e-300:
            raise PatchUnavailable("volume projection direction is degenerate")
        s += (target - vol) / slope
        cur = region.with_vertices(verts0 + s * field_dir, check=False)
    if abs(cur.volume() - target) > vol_tol * target:
        raise PatchUnavailable("volume projection Newton did not converge")
    if not cur.is_simple():
        raise NonSimplePolygon("volume projection produced a self-intersection")

    p_after = cur.perimeter()
    kmax = float(np.max(np.abs(region.mean_curvature()[patch])))
    c1 = (kmax + 1.0) * 1.5 * p_before / max(
        float(np.sum(region.edge_lengths()[patch])), 1e-300
    )
    report = ProjectionReport(
        deficit, p_before, p_after, c1,
        p_after <= p_before + c1 * abs(deficit) + 1e-10 * p_before,
    )
    new_state = ShapeState(cur, state.ball, target, state.multiplier_H0,
                           state.prev_attainment)
    return new_state, report


# ---------------------------------------------------------------------------
# descent loop
# ---------------------------------------------------------------------------


def _restore_volume_smooth(state, vol_tol=1e-12, max_newton=40):
    """Newton volume restoration along a band-limited outward field.

    Used inside the descent loop where the deficit is second order in the
    step; a smooth global field keeps vertex-scale roughness out of the
    iteration (the patch-based project_volume is the public operation for
    sizeable deficits).
    """
    region = state.region
    target = state.target_volume
    cur = region
    field = _smooth_direction(region.d_volume(), region)
    s = 0.0
    verts0 = region.vertices
    for _ in range(max_newton):
        vol = cur.volume()
        if abs(vol - target) <= vol_tol * target:
            break
        slope = float(np.sum(cur.d_volume() * field))
        if abs(slope) < 1e-300:
            raise PatchUnavailable("volume restoration field is degenerate")
        s += (target - vol) / slope
        cur = region.with_vertices(verts0 + s * field, check=False)
    if abs(cur.volume() - target) > vol_tol * target:
        raise PatchUnavailable("volume restoration did not converge")
    if cur is not region and not cur.is_simple():
        raise NonSimplePolygon("volume restoration produced a self-intersection")
    return ShapeState(cur, state.ball, target, state.multiplier_H0,
                      state.prev_attainment)


def _smooth_direction(direction, region, alpha=0.5, kcut_frac=0.125):
    """H1-type Riesz smoothing of a descent direction along the curve.

    Damps circular mode k by 1/(1 + alpha k^2) and cuts modes above a fixed
    fraction of the Nyquist band.  This removes the parabolic step-size
    restriction of raw curvature-flow descent and keeps vertex-scale sawtooth
    modes out of the update entirely (explicit steps would otherwise amplify
    them while the functional still decreases).  Assumes near-uniform
    arclength spacing, which the periodic redistribution maintains.
    """
    if alpha <= 0.0:
        return direction
    n = len(direction)
    k = np.fft.rfftfreq(n, d=1.0 / n)
    damp = 1.0 / (1.0 + alpha * k**2)
    kcut = max(16.0, kcut_frac * n)
    damp[k > kcut] = 0.0
    out = np.empty_like(direction)
    for c in range(2):
        out[:, c] = np.fft.irfft(np.fft.rfft(direction[:, c]) * damp, n)
    return out


def _redistribute(region):
    """Resample the closed polyline to near-equal metric arclength."""
    verts = region.vertices
    n = len(verts)
    ell = region.edge_lengths()
    cum = np.concatenate([[0.0], np.cumsum(ell)])
    total = cum[-1]
    targets = total * np.arange(n) / n
    closed = np.vstack([verts, verts[:1]])
    seg = np.searchsorted(cum, targets, side="right") - 1
    seg = np.clip(seg, 0, n - 1)
    frac = (targets - cum[seg]) / np.maximum(ell[seg], 1e-300)
    new_verts = closed[seg] + frac[:, None] * (closed[seg + 1] - closed[seg])
    return region.with_vertices(new_verts, check=False)


def _mollify(region, kkeep):
    """Equal-arclength resample, then truncate the vertex curve to low modes.

    Keeping the polygon band-limited removes the marginal high-mode
    amplification of explicit curve evolution: wrinkles cannot accumulate in
    modes the curve does not carry.  Applied inside the trial pipeline, so
    the line search gates its effect on the exact functional.
    """
    red = _redistribute(region)
    verts = red.vertices
    n = len(verts)
    keep = int(min(kkeep, n // 2 - 1))
    out = np.empty_like(verts)
    for c in range(2):
        spec = np.fft.rfft(verts[:, c])
        spec[keep + 1:] = 0.0
        out[:, c] = np.fft.irfft(spec, n)
    return region.with_vertices(out, check=False)


def _rad_for(region, prev_ball, seed, full=False):
    if region.backend.kind == "euclidean" or prev_ball is None or full:
        return rad(region, seed=seed)
    return rad(region, seed=seed, warm_center=prev_ball.center, polish_only=True)


@dataclass
class MinimizeParams:
    max_iters: int = 2000
    seed: int = 0
    plateau_rel: float = 1e-8
    plateau_window: int = 20
    redistribute_every: int = 10
    full_rad_every: int = 25
    max_backtracks: int = 40
    max_consecutive_rejections: int = 100
    initial_step_frac: float = 0.05
    vol_tol: float = VOL_TOL
    smooth_alpha: float = 0.5
    curvature_cap_factor: float = 3.0
    mollify_modes: int = 24


def minimize(backend, target_volume, init_region, params=None):
    """Projected subgradient descent on rad(E) * P(E) at fixed volume.

    Returns the final ShapeState and a trace (list of per-iteration dicts:
    iteration, functional, ratio, rad, P, V, H0, step, rejected).
    """
    params = params or MinimizeParams()
    region = init_region
    if abs(region.volume() - target_volume) > 0.10 * target_volume:
        raise ValueError("initial volume must be within 10% of the target")
    ball = _rad_for(region, None, params.seed, full=True)
    state = ShapeState(region, ball, float(target_volume))
    state = _restore_volume_smooth(state, vol_tol=min(params.vol_tol, 1e-12))
    state.ball = _rad_for(state.region, state.ball, params.seed)

    trace = []
    f_hist = [evaluate(state)]
    step = params.initial_step_frac
    consecutive_rejections = 0
    last_disp = params.initial_step_frac * state.ball.radius
    # regularity guard: trial shapes may not sharpen beyond a fixed multiple of
    # the initial curvature scale; keeps the descent on shapes the polygon
    # discretization resolves (folding otherwise runs away while the
    # functional still decreases)
    kappa_cap = params.curvature_cap_factor * max(
        float(np.max(np.abs(state.region.mean_curvature()))),
        2.0 / state.ball.radius,
    )

    prefer_composite = True
    for it in range(params.max_iters):
        region, ball = state.region, state.ball
        f0 = evaluate(state)
        grad_p = region.d_perimeter()
        grad_v = region.d_volume()
        gv2 = float(np.sum(grad_v * grad_v))
        sub_r = radius_subgradient(state, eps_active=2.0 * last_disp).displacement

        normals = region.inward_normals()
        g_at = region.backend.metric_batch(region.vertices)

        def projected(raw):
            d = _smooth_direction(raw, region, params.smooth_alpha)
            # normal part only: tangential motion is reparametrization and
            # merely clusters vertices
            coef = np.einsum("ni,nij,nj->n", d, g_at, normals)
            d = coef[:, None] * normals
            return d - (float(np.sum(d * grad_v)) / gv2) * grad_v

        composite = projected(-(ball.radius * grad_p + region.perimeter() * sub_r))
        # fallback: pure perimeter descent at fixed volume (the radius factor
        # held fixed); the exact functional still gates acceptance, so this is
        # an alternative descent attempt on rad*P, not a different objective
        pure_p = projected(-grad_p)
        candidates = [composite, pure_p] if prefer_composite else [pure_p, composite]
        if it % 10 == 0:
            candidates = [composite, pure_p]

        disp_cap = min(ball.radius, 4.0 * float(np.min(region.edge_lengths())))
        h0 = estimate_h0(state)
        accepted = False
        rejected_here = 0
        used_composite = True
        t = step
        for ci, direction in enumerate(candidates):
            dnorm = Perturbation(direction).sup_norm(region)
            if dnorm < 1e-300:
                continue
            scale = disp_cap / dnorm
            t = step
            for _ in range(params.max_backtracks // 2):
                try:
                    trial_region = region.with_vertices(
                        _mollify(
                            region.with_vertices(
                                region.vertices + (t * scale) * direction,
                                check=False,
                            ),
                            params.mollify_modes,
                        ).vertices
                    )
                except Exception:
                    t *= 0.5
                    rejected_here += 1
                    continue
                trial_ball = _rad_for(trial_region, ball, params.seed)
                trial = ShapeState(trial_region, trial_ball, state.target_volume,
                                   h0, ball.attainment)
                try:
                    trial = _restore_volume_smooth(
                        trial, vol_tol=min(params.vol_tol, 1e-12))
                except (PatchUnavailable, NonSimplePolygon, ValueError):
                    t *= 0.5
                    rejected_here += 1
                    continue
                trial.ball = _rad_for(trial.region, trial_ball, params.seed)
                f1 = evaluate(trial)
                k_trial = float(np.max(np.abs(trial.region.mean_curvature())))
                k_state = float(np.max(np.abs(region.mean_curvature())))
                if f1 < f0 - 1e-12 * abs(f0) and k_trial <= max(kappa_cap, k_state):
                    state = trial
                    accepted = True
                    used_composite = (candidates[ci] is composite)
                    last_disp = t * scale * dnorm
                    break
                t *= 0.5
                rejected_here += 1
            if accepted:
                break
        if accepted:
            consecutive_rejections = 0
            step = min(t * 2.0, 0.25)
            prefer_composite = used_composite
        else:
            consecutive_rejections += rejected_here
            if consecutive_rejections >= params.max_consecutive_rejections:
                raise SelfIntersection("too many consecutive rejected steps")
            if t * disp_cap < 1e-14 * ball.radius:
                break  # stationary: no admissible decrease left at this resolution
            step = t

        f_now = evaluate(state)
        f_hist.append(f_now)
        trace.append({
            "iteration": it,
            "functional": f_now,
            "ratio": state.ratio,
            "rad": state.ball.radius,
            "P": state.region.perimeter(),
            "V": state.region.volume(),
            "H0_estimate": h0,
            "step": t if accepted else 0.0,
            "rejected_steps": rejected_here,
            "redistributed": False,
        })

        if (it + 1) % params.redistribute_every == 0:
            try:
                red = _redistribute(state.region)
                red_state = ShapeState(red, state.ball, state.target_volume,
                                       h0, state.ball.attainment)
                red_state.ball = _rad_for(red, state.ball, params.seed)
                red_state = _restore_volume_smooth(
                    red_state, vol_tol=min(params.vol_tol, 1e-12))
                red_state.ball = _rad_for(red_state.region, red_state.ball, params.seed)
                k_old = float(np.max(np.abs(state.region.mean_curvature())))
                k_new = float(np.max(np.abs(red_state.region.mean_curvature())))
                if k_new <= 1.05 * max(k_old, 1e-12):
                    state = red_state
                    trace[-1]["redistributed"] = True
            except Exception:
                pass
        if (it + 1) % params.full_rad_every == 0:
            state.ball = _rad_for(state.region, state.ball, params.seed, full=True)

        if len(f_hist) > params.plateau_window:
            recent = f_hist[-params.plateau_window:]
            if (recent[0] - recent[-1]) < params.plateau_rel * abs(recent[0]):
                break

    state.ball = _rad_for(state.region, state.ball, params.seed, full=True)
    state.multiplier_H0 = estimate_h0(state)
    return state, trace


# ---------------------------------------------------------------------------
# curvature bound diagnostics
# ---------------------------------------------------------------------------


@dataclass
class CurvatureBoundReport:
    contact_count: int
    off_contact_count: int
    eta: float
    h0: float
    eps: float
    contact_ok: bool
    off_contact_ok: bool
    max_contact_violation: float
    max_off_contact_violation: float


def curvature_bound_check(state: ShapeState, ball_curvature=None, contact_tol=None,
                          eps=None):
    """Check the contact-region curvature bounds of a converged state.

    On vertices touching the enclosing sphere: eta - eps <= kappa <= H0 + eps
    with eta the sphere's own boundary curvature; off contact the curvature
    must be constant: |kappa - H0| <= eps.  Report only, never raises.
    """
    region, ball = state.region, state.ball
    if contact_tol is None:
        contact_tol = 1e-4 * ball.radius
    d = region.backend.distance_many(ball.center, region.vertices)
    contact = d >= ball.radius - contact_tol
    kappa = region.mean_curvature()
    h0 = state.multiplier_H0 if state.multiplier_H0 else estimate_h0(state)
    if ball_curvature is None:
        ball_curvature = region.backend.ball_boundary_curvature(ball.center, ball.radius)
    eta = float(ball_curvature)
    if eps is None:
        eps = 0.05 * max(abs(h0), abs(eta), 1e-12)

    viol_contact = 0.0
    if np.any(contact):
        kc = kappa[contact]
        viol_contact = float(max(np.max(eta - kc, initial=0.0),
                                 np.max(kc - h0, initial=0.0)))
    viol_off = 0.0
    if np.any(~contact):
        viol_off = float(np.max(np.abs(kappa[~contact] - h0)))
    return CurvatureBoundReport(
        contact_count=int(np.sum(contact)),
        off_contact_count=int(np.sum(~contact)),
        eta=eta,
        h0=h0,
        eps=float(eps),
        contact_ok=bool(viol_contact <= eps),
        off_contact_ok=bool(viol_off <= eps),
        max_contact_violation=viol_contact,
        max_off_contact_violation=viol_off,
    )


# ---------------------------------------------------------------------------
# perimeter descent inside a fixed ball (frozen radius)
# ---------------------------------------------------------------------------


def _clip_to_ball(backend, center, radius, verts):
    d, dep, _ = backend.geodesic_data_many(center, verts)
    outside = d > radius
    if not np.any(outside):
        return verts, d
    out = verts.copy()
    if backend.kind == "euclidean":
        out[outside] = center + radius * dep[outside]
    else:
        idx = np.where(outside)[0]
        from .geometry import geodesic_rk4

        starts = np.broadcast_to(center, (len(idx), 2)).copy()
        x, _ = geodesic_rk4(backend, starts, radius * dep[idx], 1.0,
                            max(8, int(math.ceil(radius / backend.geo_step))))
        out[idx] = x
    d2 = backend.distance_many(center, out)
    return out, d2


def _free_arcs(free_mask):
    """Contiguous index runs of free vertices on the closed polygon."""
    n = len(free_mask)
    if not np.any(free_mask):
        return []
    if np.all(free_mask):
        return [np.arange(n)]
    arcs = []
    idx = np.where(free_mask)[0]
    # rotate so a pinned vertex starts the scan
    start = int(np.where(~free_mask)[0][0])
    order = (np.arange(n) + start) % n
    run = []
    for i in order:
        if free_mask[i]:
            run.append(i)
        elif run:
            arcs.append(np.array(run))
            run = []
    if run:
        arcs.append(np.array(run))
    return arcs


def _smooth_on_arcs(raw, arcs, alpha=4.0):
    """Solve (I - alpha L) d = raw on each free arc with pinned endpoints.

    alpha is in squared vertex units: large enough to damp vertex-scale
    sawtooth modes, small enough to leave the arc-scale motion intact.
    """
    out = np.zeros_like(raw)
    for arc in arcs:
        m = len(arc)
        if m == 1:
            out[arc] = raw[arc]
            continue
        main = np.full(m, 1.0 + 2.0 * alpha)
        off = np.full(m - 1, -alpha)
        mat = np.diag(main) + np.diag(off, 1) + np.diag(off, -1)
        out[arc] = np.linalg.solve(mat, raw[arc])
    return out


def minimize_in_ball(backend, target_volume, center, ball_radius, init_region,
                     params=None, contact_tol_frac=1e-4, allow_release=False):
    """Perimeter descent at fixed volume with the region confined to a ball.

    The radius factor of the functional is frozen at the ball radius.  The
    active set of sphere-contact vertices is pinned; a pinned vertex is
    released only when its unconstrained descent direction points strictly
    inward (on contact arcs with wall curvature below the multiplier the net
    force presses outward, so the contact survives -- the frozen-radius
    regime the diagnostics need).  Directions are smoothed per free arc with
    fixed junction endpoints, and volume is restored by a Newton step along
    the free-arc field.
    """
    params = params or MinimizeParams()
    center = np.asarray(center, dtype=float)
    contact_tol = contact_tol_frac * ball_radius
    region = init_region

    verts, d = _clip_to_ball(backend, center, ball_radius, region.vertices)
    region = region.with_vertices(verts, check=False)
    if abs(region.volume() - target_volume) > 0.10 * target_volume:
        raise ValueError("initial volume must be within 10% of the target")
    contact_mask = d >= ball_radius - contact_tol

    def mk_state(reg, mask, h0=0.0):
        ball = EnclosingBall(center=center, radius=ball_radius,
                             attainment=np.where(mask)[0])
        return ShapeState(reg, ball, float(target_volume), h0)

    vol_tol_eff = min(params.vol_tol, 1e-12)

    def restore_volume(reg, mask):
        free = ~mask
        if not np.any(free):
            return reg
        gv = reg.d_volume()
        field = np.zeros_like(gv)
        arcs = _free_arcs(free)
        field = _smooth_on_arcs(gv * free[:, None], arcs)
        cur, s = reg, 0.0
        base = reg.vertices
        for _ in range(40):
            vol = cur.volume()
            if abs(vol - target_volume) <= vol_tol_eff * target_volume:
                return cur
            slope = float(np.sum(cur.d_volume() * field))
            if abs(slope) < 1e-300:
                raise PatchUnavailable("volume restoration field degenerate")
            s += (target_volume - vol) / slope
            cur = reg.with_vertices(base + s * field, check=False)
        raise PatchUnavailable("in-ball volume restoration did not converge")

    def fit_h0(reg, free):
        gp = reg.d_perimeter()[free]
        gv = reg.d_volume()[free]
        denom = float(np.sum(gv * gv))
        return float(np.sum(gp * gv)) / denom if denom > 0 else 0.0

    region = restore_volume(region, contact_mask)
    state = mk_state(region, contact_mask)
    trace = []
    f_hist = [region.perimeter()]
    step = params.initial_step_frac

    for it in range(params.max_iters):
        region = state.region
        f0 = region.perimeter()
        grad_p = region.d_perimeter()
        grad_v = region.d_volume()
        normals = region.inward_normals()
        g_at = backend.metric_batch(region.vertices)

        # unconstrained volume-projected direction decides releases
        raw = -grad_p
        gv2 = float(np.sum(grad_v * grad_v))
        raw_proj = raw - (float(np.sum(raw * grad_v)) / gv2) * grad_v
        if allow_release:
            _, outward_dir, _ = backend.geodesic_data_many(center, region.vertices)
            press_in = np.einsum("ni,ni->n", raw_proj, outward_dir) < -1e-12
            free = ~contact_mask | (contact_mask & press_in)
        else:
            # pinned active set: the frozen-radius surrogate keeps the contact
            # arc; with release the full-perimeter flow erodes any interior
            # dent toward the contact-free disk
            free = ~contact_mask

        arcs = _free_arcs(free)
        if not arcs:
            break
        gv_free = grad_v * free[:, None]
        gg = float(np.sum(gv_free * gv_free))
        if gg <= 0:
            break

        def compose(alpha):
            if alpha > 0:
                d = _smooth_on_arcs(raw * free[:, None], arcs, alpha=alpha)
            else:
                d = raw * free[:, None]
            coef = np.einsum("ni,nij,nj->n", d, g_at, normals)
            d = coef[:, None] * normals
            d -= (float(np.sum(d * gv_free)) / gg) * gv_free
            d[~free] = 0.0
            return d

        # smoothing is annealed across candidates: heavy smoothing moves the
        # arc-scale shape, lighter passes resolve the residual fine structure
        candidates = [compose(a) for a in (4.0, 1.0, 0.0)]
        h0 = fit_h0(region, ~contact_mask)
        k_state = float(np.max(np.abs(region.mean_curvature())))

        accepted = False
        t = step
        for direction in candidates:
            dnorm = Perturbation(direction).sup_norm(region)
            if dnorm < 1e-300:
                continue
            scale = min(ball_radius,
                        4.0 * float(np.min(region.edge_lengths()))) / dnorm
            t = step
            for _ in range(params.max_backtracks // 2):
                verts = region.vertices + (t * scale) * direction
                verts, dd = _clip_to_ball(backend, center, ball_radius, verts)
                try:
                    trial_region = region.with_vertices(verts)
                except Exception:
                    t *= 0.5
                    continue
                new_mask = dd >= ball_radius - contact_tol
                try:
                    trial_region = restore_volume(trial_region, new_mask)
                except (PatchUnavailable, NonSimplePolygon, ValueError):
                    t *= 0.5
                    continue
                if not trial_region.is_simple():
                    t *= 0.5
                    continue
                k_trial = float(np.max(np.abs(trial_region.mean_curvature())))
                if (trial_region.perimeter() < f0 - 1e-13 * abs(f0)
                        and k_trial <= max(3.0 * k_state, k_state + 1.0)):
                    dd_final = backend.distance_many(center, trial_region.vertices)
                    contact_mask = dd_final >= ball_radius - contact_tol
                    state = mk_state(trial_region, contact_mask, h0)
                    accepted = True
                    break
                t *= 0.5
            if accepted:
                break
        if accepted:
            step = min(t * 2.0, 0.25)
        else:
            step = max(t, 1e-12)

        f_now = state.region.perimeter()
        f_hist.append(f_now)
        trace.append({
            "iteration": it,
            "functional": ball_radius * f_now,
            "ratio": ball_radius * f_now / (2.0 * state.region.volume()),
            "rad": ball_radius,
            "P": f_now,
            "V": state.region.volume(),
            "H0_estimate": h0,
            "step": t if accepted else 0.0,
            "rejected_steps": 0,
            "redistributed": False,
        })
        if not accepted and t * scale * dnorm < 1e-14 * ball_radius:
            break
        if len(f_hist) > params.plateau_window:
            recent = f_hist[-params.plateau_window:]
            if (recent[0] - recent[-1]) < params.plateau_rel * abs(recent[0]):
                break

    state.multiplier_H0 = fit_h0(state.region, ~contact_mask)
    return state, trace
