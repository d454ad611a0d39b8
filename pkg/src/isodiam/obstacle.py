"""Obstacle-problem variational inequality on a graph chart.

Assembles the quasilinear operator governing a constrained boundary graph
u >= psi (the region's boundary pressed against its enclosing sphere), solves
the discrete variational inequality

    u >= psi,   L_h u <= 0,   L_h u = 0 off the contact set,

by projected SOR sweeps inside a frozen-coefficient Picard loop, and runs the
regularity diagnostics: quadratic detachment  u - psi <= C |x - x0|^2  at
free-boundary points, bounded second difference quotients (the discrete
shadow of C^{1,1} regularity), and growing third differences (evidence the
curvature jumps across the free boundary, so C^{1,1} is optimal).

Conventions: the chart height axis points toward the interior of the region,
so stationary graphs satisfy (sum of principal curvatures) = H0 at the chart
origin with respect to the upward normal; the forcing constant enters the
zeroth-order coefficient with the sign that realizes this.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyContactSet, NoConvergence, SingularMetric

DEFAULT_SOLVER_TOL = 1e-10


# ---------------------------------------------------------------------------
# charts and problems
# ---------------------------------------------------------------------------


class GraphChart:
    """Uniform grid over [-r0, r0]^dim with ambient metric callables.

    ``metric(x, z)`` returns the (dim+1) x (dim+1) ambient metric at chart
    point x and height z; identity when omitted (normal chart).  ``dim`` is 1
    for boundary curves in a surface, 2 for boundary surfaces in 3-space.
    """

    def __init__(self, r0, n, dim=1, metric=None, metric_grad=None, christoffel=None):
        self.r0 = float(r0)
        self.n = int(n)
        self.dim = int(dim)
        self.metric = metric
        self.metric_grad = metric_grad
        self.christoffel = christoffel
        self.axis = np.linspace(-self.r0, self.r0, self.n)
        self.h = self.axis[1] - self.axis[0]
        if dim == 1:
            self.points = self.axis[:, None]
        elif dim == 2:
            xx, yy = np.meshgrid(self.axis, self.axis, indexing="ij")
            self.points = np.stack([xx, yy], axis=-1)
        else:
            raise ValueError("dim must be 1 or 2")

    @property
    def shape(self):
        return (self.n,) if self.dim == 1 else (self.n, self.n)

    def is_flat(self):
        return self.metric is None


@dataclass
class ObstacleProblem:
    chart: GraphChart
    psi: np.ndarray
    dirichlet: np.ndarray
    h0: float = 0.0
    operator: str = "geometric"  # "geometric" | "laplace"
    forcing: np.ndarray | None = None  # rhs for the laplace mode: L = lap(u) - f
    solver_tol: float = DEFAULT_SOLVER_TOL
    contact_tol: float | None = None
    grad_bound: float = 0.2

    def __post_init__(self):
        shape = self.chart.shape
        self.psi = np.broadcast_to(np.asarray(self.psi, float), shape).copy()
        self.dirichlet = np.broadcast_to(np.asarray(self.dirichlet, float), shape).copy()
        if self.forcing is not None:
            self.forcing = np.broadcast_to(np.asarray(self.forcing, float), shape).copy()
        if self.contact_tol is None:
            self.contact_tol = 10.0 * self.solver_tol
        mask = _boundary_mask(shape)
        if np.any(self.psi[mask] > self.dirichlet[mask] + 1e-12):
            raise ValueError("obstacle exceeds the Dirichlet data on the boundary")


@dataclass
class ObstacleSolution:
    problem: ObstacleProblem
    u: np.ndarray
    contact: np.ndarray
    residual: np.ndarray  # L_h u at interior nodes
    complementarity: np.ndarray  # min(-L_h u, u - psi)
    diagnostics: dict = field(default_factory=dict)


def _boundary_mask(shape):
    mask = np.zeros(shape, dtype=bool)
    if len(shape) == 1:
        mask[0] = mask[-1] = True
    else:
        mask[0, :] = mask[-1, :] = True
        mask[:, 0] = mask[:, -1] = True
    return mask


# ---------------------------------------------------------------------------
# metric and operator assembly
# ---------------------------------------------------------------------------


def _grad(u, h):
    """Central differences, one-sided at the boundary; shape + (dim,)."""
    if u.ndim == 1:
        g = np.gradient(u, h)
        return g[:, None]
    gx = np.gradient(u, h, axis=0)
    gy = np.gradient(u, h, axis=1)
    return np.stack([gx, gy], axis=-1)


def graph_metric_tilde(g_amb, p):
    """h_ij = g_ij + p_i g_nj + p_j g_ni + p_i p_j g_nn, batched.

    g_amb: (..., m+1, m+1) ambient metric; p: (..., m) graph gradient.
    """
    m = p.shape[-1]
    gij = g_amb[..., :m, :m]
    gin = g_amb[..., :m, m]
    gnn = g_amb[..., m, m]
    out = (
        gij
        + p[..., :, None] * gin[..., None, :]
        + p[..., None, :] * gin[..., :, None]
        + p[..., :, None] * p[..., None, :] * gnn[..., None, None]
    )
    return out


def assemble_metric_on_graph(chart, u, grad_u=None):
    """Induced metric h_ij of the graph of u over the chart."""
    if grad_u is None:
        grad_u = _grad(u, chart.h)
    g_amb = _ambient_metric(chart, u)
    h = graph_metric_tilde(g_amb, grad_u)
    det = np.linalg.det(h)
    if np.any(det < 1e-10):
        raise SingularMetric("graph metric determinant below tolerance")
    return h


def _ambient_metric(chart, u):
    m = chart.dim
    shape = chart.shape
    if chart.is_flat():
        g = np.zeros(shape + (m + 1, m + 1))
        idx = np.arange(m + 1)
        g[..., idx, idx] = 1.0
        return g
    out = np.empty(shape + (m + 1, m + 1))
    pts = chart.points.reshape(-1, m)
    uu = u.reshape(-1)
    for k, (x, z) in enumerate(zip(pts, uu)):
        out.reshape(-1, m + 1, m + 1)[k] = chart.metric(x, z)
    return out


def _ambient_metric_grad(chart, u):
    """d_a g_ij for a = 1..m (chart) and a = m (height); FD if not supplied."""
    m = chart.dim
    shape = chart.shape
    if chart.is_flat():
        return np.zeros(shape + (m + 1, m + 1, m + 1))
    out = np.empty(shape + (m + 1, m + 1, m + 1))
    pts = chart.points.reshape(-1, m)
    uu = u.reshape(-1)
    flat = out.reshape(-1, m + 1, m + 1, m + 1)
    step = 1e-5
    for k, (x, z) in enumerate(zip(pts, uu)):
        if chart.metric_grad is not None:
            flat[k] = chart.metric_grad(x, z)
            continue
        for a in range(m):
            e = np.zeros(m)
            e[a] = step
            flat[k, a] = (chart.metric(x + e, z) - chart.metric(x - e, z)) / (2 * step)
        flat[k, m] = (chart.metric(x, z + step) - chart.metric(x, z - step)) / (2 * step)
    return out


def _ambient_christoffel(chart, u):
    """Gamma^k_ij of the ambient metric at (x, u(x)); zeros on flat charts."""
    m = chart.dim
    shape = chart.shape
    if chart.is_flat():
        return np.zeros(shape + (m + 1, m + 1, m + 1))
    if chart.christoffel is not None:
        out = np.empty(shape + (m + 1, m + 1, m + 1))
        flat = out.reshape(-1, m + 1, m + 1, m + 1)
        pts = chart.points.reshape(-1, m)
        uu = u.reshape(-1)
        for k, (x, z) in enumerate(zip(pts, uu)):
            flat[k] = chart.christoffel(x, z)
        return out
    g = _ambient_metric(chart, u)
    dg = _ambient_metric_grad(chart, u)
    ginv = np.linalg.inv(g)
    term = (
        np.einsum("...ilj->...ijl", dg)
        + np.einsum("...jli->...ijl", dg)
        - np.einsum("...lij->...ijl", dg)
    )
    return 0.5 * np.einsum("...kl,...ijl->...kij", ginv, term)


def _tilde_inverse_and_pgrad(g_amb, p):
    """h_tilde^{ij} and its p-derivatives d h^{il} / d p_j.

    Uses the inverse-matrix derivative: d(h^-1) = -h^-1 (dh) h^-1 with
    d h_kl / d p_j = delta_kj g_ln + delta_lj g_kn + (delta_kj p_l +
    delta_lj p_k) g_nn.
    """
    m = p.shape[-1]
    h = graph_metric_tilde(g_amb, p)
    hinv = np.linalg.inv(h)
    gin = g_amb[..., :m, m]
    gnn = g_amb[..., m, m]
    eye = np.eye(m)
    dh = (
        np.einsum("kj,...l->...jkl", eye, gin + p * gnn[..., None])
        + np.einsum("lj,...k->...jkl", eye, gin + p * gnn[..., None])
    )
    dhinv = -np.einsum("...ka,...jab,...bl->...jkl", hinv, dh, hinv)
    return hinv, dhinv


def assemble_operator(problem: ObstacleProblem, u):
    """Coefficient fields (a, b, f, c, d) of the graph operator at state u.

    The operator acts as  L u = c^{ij} d_ij u + d  with c the uniformly
    elliptic second-order coefficients and d collecting all lower-order
    contributions (including the mean-curvature forcing).  On a flat chart
    with u = 0 this reduces to the Laplacian: c = Id, d = -f.
    """
    chart = problem.chart
    m = chart.dim
    h = chart.h
    p = _grad(u, h)
    g_amb = _ambient_metric(chart, u)
    gnn = g_amb[..., m, m]
    gin = g_amb[..., :m, m]
    hinv, dhinv = _tilde_inverse_and_pgrad(g_amb, p)

    a = gnn[..., None, None] * hinv
    b = np.einsum("...ij,...j->...i", hinv, gin)

    gam = _ambient_christoffel(chart, u)
    # f = h^{ij} du_i Gamma^k_nn g_jk + h^{ij} du_j du_i Gamma^k_nn g_kn
    #   + h^{ij} Gamma^k_in g_jk + h^{ij} du_j Gamma^k_in g_kn
    #   + H0 * g(e_n, nu_E)    [sign fixed by kappa = H0 at the chart origin]
    gam_nn = gam[..., :, m, m]  # Gamma^k_nn
    gam_in = gam[..., :, :m, m]  # Gamma^k_in, k x i
    gfull = g_amb
    f = (
        np.einsum("...ij,...i,...k,...jk->...", hinv, p, gam_nn, gfull[..., :m, :])
        + np.einsum("...ij,...j,...i,...k,...k->...", hinv, p, p, gam_nn,
                    gfull[..., m, :])
        + np.einsum("...ij,...ki,...jk->...", hinv, gam_in, gfull[..., :m, :])
        + np.einsum("...ij,...j,...ki,...k->...", hinv, p, gam_in, gfull[..., m, :])
    )
    # g(e_n, nu_E) for the g-unit graph normal: with the annihilating covector
    # omega = (-p, 1) this is 1 / sqrt(omega . g^{-1} omega); flat: 1/sqrt(1+|p|^2)
    omega = np.concatenate([-p, np.ones(p.shape[:-1] + (1,))], axis=-1)
    ginv_full = np.linalg.inv(g_amb)
    nu_factor = 1.0 / np.sqrt(np.einsum("...i,...ij,...j->...", omega, ginv_full,
                                        omega))
    f = f + problem.h0 * gnn * nu_factor

    # c^{ij} = a^{ij} + g_nn du_l dh^{il}/dp_j + g_ln dh^{il}/dp_j
    c = (
        a
        + gnn[..., None, None] * np.einsum("...l,...jil->...ij", p, dhinv)
        + np.einsum("...l,...jil->...ij", gin, dhinv)
    )

    if chart.is_flat():
        d = -f
    else:
        # explicit-x and height derivatives of h^{ij} by finite differences of
        # the assembled field (4th-order stencils are overkill at the grids
        # used; central differences keep the O(h^2) budget)
        dg = _ambient_metric_grad(chart, u)
        d = _lower_order_terms(problem, u, p, hinv, dg, gnn, gin) - f
    return a, b, f, c, d


def _lower_order_terms(problem, u, p, hinv, dg, gnn, gin):
    """First-order terms of the divergence expansion (curved charts only).

    d = g_nn d_i h^{ij} d_j u + g_nn d_z h^{ij} d_i u d_j u
      + d_i g_nn h^{ij} d_j u + d_z g_nn h^{ij} d_i u d_j u
      + g_jn d_i h^{ij} + g_jn d_z h^{ij} d_i u
      + d_i g_jn h^{ij} + d_z g_jn h^{ij} d_i u        (minus f, added by caller)

    where d_i/d_z act on the explicit chart/height slots of h_tilde at frozen
    gradient argument; dg carries the ambient metric derivatives with the
    derivative index first (m chart slots then the height slot).
    """
    m = problem.chart.dim
    dgnn = dg[..., :, m, m]  # (..., a) with a over m chart dirs + height
    dgin = dg[..., :, :m, m]  # (..., a, j)
    # dh_kl/dx_a = dg_kl/dx_a + p_k dg_ln/dx_a + p_l dg_kn/dx_a + p_k p_l dg_nn
    dh = (
        dg[..., :, :m, :m]
        + np.einsum("...k,...al->...akl", p, dgin)
        + np.einsum("...l,...ak->...akl", p, dgin)
        + np.einsum("...k,...l,...a->...akl", p, p, dgnn)
    )
    dhinv = -np.einsum("...ka,...cab,...bl->...ckl", hinv, dh, hinv)
    dhinv_chart = dhinv[..., :m, :, :]  # derivative slot a = chart directions
    dhinv_z = dhinv[..., m, :, :]
    dgnn_chart, dgnn_z = dgnn[..., :m], dgnn[..., m]
    dgin_chart, dgin_z = dgin[..., :m, :], dgin[..., m, :]
    return (
        gnn * np.einsum("...iij,...j->...", dhinv_chart, p)
        + gnn * np.einsum("...ij,...i,...j->...", dhinv_z, p, p)
        + np.einsum("...i,...ij,...j->...", dgnn_chart, hinv, p)
        + dgnn_z * np.einsum("...ij,...i,...j->...", hinv, p, p)
        + np.einsum("...j,...iij->...", gin, dhinv_chart)
        + np.einsum("...j,...ij,...i->...", gin, dhinv_z, p)
        + np.einsum("...ij,...ij->...", dgin_chart, hinv)
        + np.einsum("...j,...ij,...i->...", dgin_z, hinv, p)
    )


# ---------------------------------------------------------------------------
# projected SOR variational-inequality solver
# ---------------------------------------------------------------------------


def _apply_operator(c, d, u, h):
    """L_h u = c^{ij} D2_ij u + d at interior nodes (NaN on the boundary)."""
    out = np.full(u.shape, np.nan)
    h2 = h * h
    if u.ndim == 1:
        uxx = (u[2:] - 2 * u[1:-1] + u[:-2]) / h2
        out[1:-1] = c[1:-1, 0, 0] * uxx + d[1:-1]
        return out
    uxx = (u[2:, 1:-1] - 2 * u[1:-1, 1:-1] + u[:-2, 1:-1]) / h2
    uyy = (u[1:-1, 2:] - 2 * u[1:-1, 1:-1] + u[1:-1, :-2]) / h2
    uxy = (u[2:, 2:] - u[2:, :-2] - u[:-2, 2:] + u[:-2, :-2]) / (4 * h2)
    ci = c[1:-1, 1:-1]
    out[1:-1, 1:-1] = (
        ci[..., 0, 0] * uxx + ci[..., 1, 1] * uyy + 2.0 * ci[..., 0, 1] * uxy
        + d[1:-1, 1:-1]
    )
    return out


def _complementarity(u, psi, c, d, h, boundary):
    res = _apply_operator(c, d, u, h)
    comp = np.minimum(-res, u - psi)
    return res, comp, float(np.max(np.abs(comp[~boundary])))


def _psor_sweeps(u, psi, c, d, h, omega, tol, max_sweeps, boundary,
                 check_every=64):
    """Red-black projected SOR on the frozen linear operator.

    The two-color ordering gives the same fixed point as lexicographic sweeps
    and vectorizes; the mixed-derivative term (2D) is lagged within a sweep.
    Stops when the complementarity residual min(-L_h u, u - psi) is below
    tolerance at every interior node.
    """
    h2 = h * h
    shape = u.shape
    sweep = 0
    if u.ndim == 1:
        idx = np.arange(len(u))
        colors = [
            idx[1:-1][(idx[1:-1] % 2) == 0],
            idx[1:-1][(idx[1:-1] % 2) == 1],
        ]
        cc = c[:, 0, 0]
        for sweep in range(1, max_sweeps + 1):
            for nodes in colors:
                gs = 0.5 * (u[nodes + 1] + u[nodes - 1]) + d[nodes] * h2 / (2 * cc[nodes])
                u[nodes] = np.maximum((1 - omega) * u[nodes] + omega * gs, psi[nodes])
            if sweep % check_every == 0:
                _, _, comp_sup = _complementarity(u, psi, c, d, h, boundary)
                if comp_sup < tol:
                    return sweep, comp_sup
        _, _, comp_sup = _complementarity(u, psi, c, d, h, boundary)
        return sweep, comp_sup
    # 2D
    ii, jj = np.meshgrid(np.arange(shape[0]), np.arange(shape[1]), indexing="ij")
    interior = (ii > 0) & (ii < shape[0] - 1) & (jj > 0) & (jj < shape[1] - 1)
    red = interior & (((ii + jj) % 2) == 0)
    black = interior & (((ii + jj) % 2) == 1)
    c11, c22, c12 = c[..., 0, 0], c[..., 1, 1], c[..., 0, 1]
    diag = 2.0 * (c11 + c22) / h2
    for sweep in range(1, max_sweeps + 1):
        for mask in (red, black):
            nb = (
                c11 * (np.roll(u, -1, 0) + np.roll(u, 1, 0)) / h2
                + c22 * (np.roll(u, -1, 1) + np.roll(u, 1, 1)) / h2
            )
            uxy = (
                np.roll(np.roll(u, -1, 0), -1, 1)
                - np.roll(np.roll(u, -1, 0), 1, 1)
                - np.roll(np.roll(u, 1, 0), -1, 1)
                + np.roll(np.roll(u, 1, 0), 1, 1)
            ) / (4 * h2)
            gs = (nb + 2.0 * c12 * uxy + d) / diag
            new = np.maximum((1 - omega) * u + omega * gs, psi)
            u[mask] = new[mask]
        if sweep % check_every == 0:
            _, _, comp_sup = _complementarity(u, psi, c, d, h, boundary)
            if comp_sup < tol:
                return sweep, comp_sup
    _, _, comp_sup = _complementarity(u, psi, c, d, h, boundary)
    return sweep, comp_sup


def solve_vi(problem: ObstacleProblem, omega=1.8, max_picard=200, max_sweeps=10000):
    """Solve the obstacle VI: frozen-coefficient Picard around projected SOR.

    Converged when both the sup-norm sweep update and the complementarity
    residual min(-L_h u, u - psi) are below solver_tol at every interior node.
    """
    chart = problem.chart
    shape = chart.shape
    boundary = _boundary_mask(shape)
    u = np.where(boundary, problem.dirichlet, np.maximum(problem.psi, 0.0))
    u = np.maximum(u, problem.psi)
    u[boundary] = problem.dirichlet[boundary]
    tol = problem.solver_tol

    for picard in range(max_picard):
        if problem.operator == "laplace":
            m = chart.dim
            c = np.zeros(shape + (m, m))
            idx = np.arange(m)
            c[..., idx, idx] = 1.0
            d = -problem.forcing if problem.forcing is not None else np.zeros(shape)
        else:
            _, _, _, c, d = assemble_operator(problem, u)
        u_prev = u.copy()
        sweeps, comp_sup = _psor_sweeps(u, problem.psi, c, d, chart.h, omega, tol,
                                        max_sweeps, boundary)
        picard_delta = float(np.max(np.abs(u - u_prev)))
        res, comp, comp_sup = _complementarity(u, problem.psi, c, d, chart.h,
                                               boundary)
        comp_interior = comp[~boundary]
        converged = comp_sup < tol and (
            problem.operator == "laplace" or picard_delta < 1e4 * tol
        )
        if converged:
            break
    else:
        raise NoConvergence("obstacle VI did not meet tolerance within budget")

    contact = (u - problem.psi) <= problem.contact_tol
    contact[boundary] = False
    grad_sup = float(np.max(np.abs(_grad(u, chart.h))))
    diagnostics = {
        "picard_iterations": picard + 1,
        "final_sweeps": sweeps,
        "complementarity_sup": float(np.max(np.abs(comp_interior))),
        "grad_sup": grad_sup,
        "grad_bound_ok": bool(grad_sup <= problem.grad_bound),
        "contact_count": int(np.sum(contact)),
    }
    return ObstacleSolution(problem=problem, u=u, contact=contact, residual=res,
                            complementarity=comp, diagnostics=diagnostics)


def unconstrained_solve(problem: ObstacleProblem, omega=1.8, max_picard=200,
                        max_sweeps=10000):
    """Plain linear solve (no obstacle projection), comparison-principle oracle."""
    unconstrained = ObstacleProblem(
        chart=problem.chart,
        psi=np.full(problem.chart.shape, -1e30),
        dirichlet=problem.dirichlet,
        h0=problem.h0,
        operator=problem.operator,
        forcing=problem.forcing,
        solver_tol=problem.solver_tol,
    )
    return solve_vi(unconstrained, omega=omega, max_picard=max_picard,
                    max_sweeps=max_sweeps)


# ---------------------------------------------------------------------------
# regularity diagnostics
# ---------------------------------------------------------------------------


def free_boundary_nodes(sol: ObstacleSolution):
    """Contact nodes with at least one non-contact interior neighbor."""
    contact = sol.contact
    if contact.ndim == 1:
        left = np.roll(contact, 1)
        right = np.roll(contact, -1)
        fb = contact & (~left | ~right)
        fb[0] = fb[-1] = False
        return np.where(fb)[0]
    fb = contact & (
        ~np.roll(contact, 1, 0) | ~np.roll(contact, -1, 0)
        | ~np.roll(contact, 1, 1) | ~np.roll(contact, -1, 1)
    )
    fb[0, :] = fb[-1, :] = False
    fb[:, 0] = fb[:, -1] = False
    return np.argwhere(fb)


def quadratic_growth(sol: ObstacleSolution):
    """Detachment constant: sup (u - psi)(x) / d(x, x0)^2 near free-boundary x0."""
    chart = sol.problem.chart
    fb = free_boundary_nodes(sol)
    if len(fb) == 0:
        if not np.any(sol.contact):
            raise EmptyContactSet("no contact nodes; quadratic growth undefined")
        return {"global": 0.0, "per_point": [], "free_boundary_nodes": []}
    gap = sol.u - sol.problem.psi
    pts = chart.points
    window = chart.r0 / 2.0
    per_point = []
    for node in np.atleast_1d(fb) if chart.dim == 1 else fb:
        x0 = pts[node] if chart.dim == 1 else pts[tuple(node)]
        dist = np.linalg.norm(pts - x0, axis=-1)
        mask = (dist > 0.5 * chart.h) & (dist <= window)
        if not np.any(mask):
            continue
        per_point.append(float(np.max(gap[mask] / dist[mask] ** 2)))
    return {
        "global": max(per_point) if per_point else 0.0,
        "per_point": per_point,
        "free_boundary_nodes": fb.tolist() if hasattr(fb, "tolist") else list(fb),
    }


def c11_check(sol: ObstacleSolution, window_frac=0.25):
    """Second-order remainder quotient and plain difference bounds.

    C_bar = sup over node pairs within a grid window of
    2 |u(y) - u(x) - grad u(x) . (y - x)| / |x - y|^2 (central-difference
    gradient), plus the plain second-difference sup and the third-difference
    sup (which grows like 1/h when the curvature jumps, the signature of
    C^{1,1} being optimal).
    """
    chart = sol.problem.chart
    u = sol.u
    h = chart.h
    grad = _grad(u, h)
    window = max(2, int(round(window_frac * chart.r0 / h)))

    if chart.dim == 1:
        n = len(u)
        cbar = 0.0
        for off in range(1, window + 1):
            x = np.arange(0, n - off)
            y = x + off
            rem = np.abs(u[y] - u[x] - grad[x, 0] * (y - x) * h)
            cbar = max(cbar, float(np.max(2.0 * rem / ((off * h) ** 2))))
        d2 = np.abs(u[2:] - 2 * u[1:-1] + u[:-2]) / h**2
        d3 = np.abs(u[3:] - 3 * u[2:-1] + 3 * u[1:-2] - u[:-3]) / h**3
        return {
            "c_bar": cbar,
            "second_difference_sup": float(np.max(d2)),
            "third_difference_sup": float(np.max(d3)),
        }

    cbar = 0.0
    offsets = [(o, 0) for o in range(1, window + 1)]
    offsets += [(0, o) for o in range(1, window + 1)]
    offsets += [(o, o) for o in range(1, window + 1)]
    offsets += [(o, -o) for o in range(1, window + 1)]
    for ox, oy in offsets:
        sx = slice(max(0, -ox), u.shape[0] - max(0, ox))
        sy = slice(max(0, -oy), u.shape[1] - max(0, oy))
        tx = slice(max(0, ox), u.shape[0] - max(0, -ox))
        ty = slice(max(0, oy), u.shape[1] - max(0, -oy))
        ux, uy = u[sx, sy], u[tx, ty]
        gx = grad[sx, sy]
        dvec = np.array([ox * h, oy * h])
        rem = np.abs(uy - ux - gx[..., 0] * dvec[0] - gx[..., 1] * dvec[1])
        cbar = max(cbar, float(np.max(2.0 * rem / (dvec @ dvec))))
    d2x = np.abs(u[2:, :] - 2 * u[1:-1, :] + u[:-2, :]) / h**2
    d2y = np.abs(u[:, 2:] - 2 * u[:, 1:-1] + u[:, :-2]) / h**2
    d3x = np.abs(u[3:, :] - 3 * u[2:-1, :] + 3 * u[1:-2, :] - u[:-3, :]) / h**3
    return {
        "c_bar": cbar,
        "second_difference_sup": float(max(np.max(d2x), np.max(d2y))),
        "third_difference_sup": float(np.max(d3x)),
    }


# ---------------------------------------------------------------------------
# bridging from a constrained shape-optimization run
# ---------------------------------------------------------------------------


def from_shape_run(state, ball_center, ball_radius, window=0.35, n=129,
                   mode="free-arc"):
    """Build a 1D obstacle problem from a converged in-ball perimeter run.

    Local frame anchored on the sphere: chart axis along the sphere tangent,
    heights measured inward from the tangent line, so the sphere reads
    psi(x) = R - sqrt(R^2 - x^2) and the region boundary resamples as the
    graph u(x) >= psi(x).  Dirichlet data comes from the sampled graph, the
    forcing constant from the run's multiplier estimate.

    mode "free-arc" centers the window at the midpoint of the off-contact
    arc, where the boundary solves the unconstrained graph equation (the
    obstacle is present but inactive); mode "junction" centers it at a
    contact-arc endpoint.
    """
    region = state.region
    center = np.asarray(ball_center, dtype=float)
    d = np.linalg.norm(region.vertices - center, axis=1)
    contact = d >= ball_radius * (1.0 - 1e-3)
    if not np.any(contact) or np.all(contact):
        raise ValueError("need a proper contact arc to extract a graph")
    nxt = np.roll(contact, -1)
    if mode == "junction":
        j = int(np.where(contact & ~nxt)[0][0])
    else:
        off = np.where(~contact)[0]
        runs = np.where(np.diff(off) > 1)[0]
        if len(runs):
            off = np.roll(off, -(runs[0] + 1))
        j = int(off[len(off) // 2])
    x0 = region.vertices[j]
    radial = (x0 - center) / np.linalg.norm(x0 - center)
    tangent = np.array([-radial[1], radial[0]])
    anchor = center + ball_radius * radial

    # walk the polygon outward from the junction so only the local graph-like
    # branch of the boundary enters the sample
    n_verts = len(region.vertices)
    idx = [j]
    for sgn in (1, -1):
        for k in range(1, n_verts // 2):
            i = (j + sgn * k) % n_verts
            rel_i = region.vertices[i] - anchor
            if abs(rel_i @ tangent) > 1.25 * window or -(rel_i @ radial) > 0.5 * ball_radius:
                break
            idx.append(i)
    rel = region.vertices[np.array(sorted(set(idx)))] - anchor
    xs = rel @ tangent
    zs = -(rel @ radial)  # inward heights
    order = np.argsort(xs)
    xs, zs = xs[order], zs[order]
    keep = (xs >= -1.25 * window) & (xs <= 1.25 * window)
    if np.sum(keep) < 8 or xs[keep][0] > -window or xs[keep][-1] < window:
        raise ValueError("window too small for the sampled boundary")
    chart = GraphChart(r0=window, n=n, dim=1)
    u_sample = np.interp(chart.axis, xs[keep], zs[keep])
    psi = ball_radius - np.sqrt(ball_radius**2 - chart.axis**2)
    # the sampled boundary is a polygon: between on-sphere vertices its chords
    # dip below the analytic circle by the sagitta, so the discrete obstacle
    # is the pointwise minimum (contact is then exact where the run touched)
    psi = np.minimum(psi, u_sample)
    dirichlet = np.zeros(chart.n)
    dirichlet[0], dirichlet[-1] = u_sample[0], u_sample[-1]
    problem = ObstacleProblem(
        chart=chart,
        psi=psi,
        dirichlet=dirichlet,
        h0=abs(state.multiplier_H0),
        operator="geometric",
    )
    return problem, u_sample
