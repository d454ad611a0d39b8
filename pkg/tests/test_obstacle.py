"""Graph metric, operator coefficients, the VI solver, and the regularity
diagnostics, with closed-form and symbolic oracles."""

import math

import numpy as np
import pytest

from isodiam.errors import EmptyContactSet, NoConvergence
from isodiam.obstacle import (
    GraphChart,
    ObstacleProblem,
    assemble_metric_on_graph,
    assemble_operator,
    c11_check,
    free_boundary_nodes,
    quadratic_growth,
    solve_vi,
    unconstrained_solve,
)


def flat_chart_1d(n=129, r0=1.0):
    return GraphChart(r0=r0, n=n, dim=1)


# ---------------------------------------------------------------------------
# metric on the graph
# ---------------------------------------------------------------------------


def test_graph_metric_flat_zero():
    chart = flat_chart_1d()
    h = assemble_metric_on_graph(chart, np.zeros(chart.shape))
    assert np.allclose(h, 1.0)


def test_graph_metric_linear_slope():
    chart = flat_chart_1d()
    alpha = 0.3
    h = assemble_metric_on_graph(chart, alpha * chart.axis)
    assert np.allclose(h[5:-5, 0, 0], 1 + alpha**2, atol=1e-12)


def test_graph_metric_paraboloid_2d():
    chart = GraphChart(r0=0.5, n=33, dim=2)
    pts = chart.points
    u = 0.5 * np.einsum("...i,...i->...", pts, pts)
    h = assemble_metric_on_graph(chart, u)
    for i, j in ((16, 16), (20, 11), (5, 28)):
        x = pts[i, j]
        assert np.allclose(h[i, j], np.eye(2) + np.outer(x, x), atol=1e-10)


# ---------------------------------------------------------------------------
# operator coefficients
# ---------------------------------------------------------------------------


def test_coefficients_reduce_to_laplacian():
    chart = flat_chart_1d()
    prob = ObstacleProblem(chart, psi=-1.0, dirichlet=0.0, h0=0.0)
    a, b, f, c, d = assemble_operator(prob, np.zeros(chart.shape))
    assert np.allclose(a, 1.0) and np.allclose(b, 0.0)
    assert np.allclose(f, 0.0) and np.allclose(c, 1.0) and np.allclose(d, 0.0)


def test_coefficients_laplacian_2d():
    chart = GraphChart(r0=0.5, n=17, dim=2)
    prob = ObstacleProblem(chart, psi=-1.0, dirichlet=0.0, h0=0.25)
    a, b, f, c, d = assemble_operator(prob, np.zeros(chart.shape))
    assert np.allclose(c, np.eye(2)[None, None])
    assert np.allclose(d, -f)
    assert np.allclose(f, 0.25)  # forcing term only


def test_ellipticity_small_gradient():
    chart = flat_chart_1d(n=257)
    prob = ObstacleProblem(chart, psi=-1.0, dirichlet=0.0, h0=0.0)
    u = 0.2 * np.sin(math.pi * chart.axis) / math.pi  # |u'| <= 0.2
    _, _, _, c, _ = assemble_operator(prob, u)
    assert np.all(c[..., 0, 0] >= 0.5) and np.all(c[..., 0, 0] <= 2.0)


def test_stationary_arc_annihilates_operator_at_origin():
    chart = GraphChart(r0=0.2, n=201, dim=1)
    R = 2.0
    u = R - np.sqrt(R * R - chart.axis**2)
    prob = ObstacleProblem(chart, psi=-1.0, dirichlet=float(u[0]), h0=1.0 / R)
    _, _, _, c, d = assemble_operator(prob, u)
    uxx = np.gradient(np.gradient(u, chart.h), chart.h)
    lu = c[:, 0, 0] * uxx + d
    mid = chart.n // 2
    assert abs(lu[mid]) < 1e-5


def test_operator_matches_symbolic_expansion():
    """Independent symbolic expansion of div(A grad u + b) - f at one point."""
    sympy = pytest.importorskip("sympy")
    x, z, p = sympy.symbols("x z p", real=True)

    g11 = 1 + sympy.Rational(1, 10) * x**2 + sympy.Rational(1, 20) * z
    g12 = sympy.Rational(1, 50) * x * z
    g22 = 1 + sympy.Rational(2, 25) * z**2
    u_expr = sympy.Rational(1, 10) * x + sympy.Rational(1, 20) * x**2
    h0 = sympy.Rational(3, 10)

    htilde = g11 + 2 * p * g12 + p**2 * g22
    a_sym = g22 / htilde
    b_sym = g12 / htilde
    gmat = sympy.Matrix([[g11, g12], [g12, g22]])
    ginv = gmat.inv()
    # Christoffels of the ambient metric in (x, z)
    coords = [x, z]
    gam = {}
    for k in range(2):
        for i in range(2):
            for j in range(2):
                s = 0
                for l in range(2):
                    s += ginv[k, l] * (sympy.diff(gmat[l, j], coords[i])
                                       + sympy.diff(gmat[l, i], coords[j])
                                       - sympy.diff(gmat[i, j], coords[l]))
                gam[(k, i, j)] = sympy.simplify(s / 2)

    du = sympy.diff(u_expr, x)
    subs_graph = {z: u_expr, p: du}
    hinv = (1 / htilde).subs(subs_graph)
    gm = {k: v.subs(z, u_expr) for k, v in
          {"g11": g11, "g12": g12, "g22": g22}.items()}
    # f per the coefficient catalog (indices i=j=1, n=2 in 1D)
    f_sym = (
        hinv * du * gam[(0, 1, 1)].subs(subs_graph) * gm["g11"]
        + hinv * du * gam[(1, 1, 1)].subs(subs_graph) * gm["g12"]
        + hinv * du * du * (gam[(0, 1, 1)].subs(subs_graph) * gm["g12"]
                            + gam[(1, 1, 1)].subs(subs_graph) * gm["g22"])
        + hinv * (gam[(0, 0, 1)].subs(subs_graph) * gm["g11"]
                  + gam[(1, 0, 1)].subs(subs_graph) * gm["g12"])
        + hinv * du * (gam[(0, 0, 1)].subs(subs_graph) * gm["g12"]
                       + gam[(1, 0, 1)].subs(subs_graph) * gm["g22"])
    )
    omega_ginv_omega = (ginv[0, 0] * du**2 - 2 * ginv[0, 1] * du
                        + ginv[1, 1]).subs(subs_graph)
    f_sym = f_sym + h0 * gm["g22"] / sympy.sqrt(omega_ginv_omega)

    inner = (a_sym.subs(z, u_expr).subs(p, du) * du
             + b_sym.subs(z, u_expr).subs(p, du))
    l_direct = sympy.diff(inner, x) - f_sym

    x0 = 0.15
    l_val = float(l_direct.subs(x, x0))

    chart = GraphChart(
        r0=0.4, n=801, dim=1,
        metric=lambda xx, zz: np.array([
            [1 + 0.1 * xx[0] ** 2 + 0.05 * zz, 0.02 * xx[0] * zz],
            [0.02 * xx[0] * zz, 1 + 0.08 * zz**2],
        ]),
    )
    u_grid = 0.1 * chart.axis + 0.05 * chart.axis**2
    prob = ObstacleProblem(chart, psi=-10.0, dirichlet=float(u_grid[0]), h0=0.3)
    prob.dirichlet[-1] = u_grid[-1]
    _, _, _, c, d = assemble_operator(prob, u_grid)
    idx = int(np.argmin(np.abs(chart.axis - x0)))
    lu = c[idx, 0, 0] * 0.1 + d[idx]  # u'' = 0.1 exactly
    assert lu == pytest.approx(l_val, abs=5e-5)


# ---------------------------------------------------------------------------
# solver limits and closed forms
# ---------------------------------------------------------------------------


def closed_form_cosine(bv_only=False):
    a = 0.5

    def exact(xx):
        ax = np.abs(np.asarray(xx, float))
        u = ((ax - a) ** 2 / 2
             + 0.5 * (-(ax - a) * math.sin(math.pi * a) / math.pi
                      + (math.cos(math.pi * a) - np.cos(math.pi * ax)) / math.pi**2))
        return np.where(ax >= a, u, 0.0)

    return float(exact(1.0)) if bv_only else exact


def test_closed_form_1d_second_order():
    exact = closed_form_cosine()
    bv = closed_form_cosine(bv_only=True)
    errs = []
    for n in (129, 257, 513):
        chart = flat_chart_1d(n=n)
        f = 1.0 + 0.5 * np.cos(math.pi * chart.axis)
        prob = ObstacleProblem(chart, psi=0.0, dirichlet=bv, operator="laplace",
                               forcing=f)
        sol = solve_vi(prob, omega=1.9, max_sweeps=400000)
        errs.append(float(np.max(np.abs(sol.u - exact(chart.axis)))))
        assert sol.diagnostics["complementarity_sup"] < 1e-10
    assert 3.5 <= errs[0] / errs[1] <= 4.5
    assert 3.5 <= errs[1] / errs[2] <= 4.5


def test_spec_quarter_height_case_exact_at_nodes():
    # piecewise-quadratic solution with node-aligned kinks is reproduced to
    # roundoff by the second-difference scheme
    chart = flat_chart_1d(n=129)
    prob = ObstacleProblem(chart, psi=0.0, dirichlet=0.125, operator="laplace",
                           forcing=np.ones(chart.shape))
    sol = solve_vi(prob, omega=1.9, max_sweeps=200000)
    exact = np.where(np.abs(chart.axis) >= 0.5,
                     (np.abs(chart.axis) - 0.5) ** 2 / 2, 0.0)
    assert np.max(np.abs(sol.u - exact)) < 1e-10
    fb = free_boundary_nodes(sol)
    assert set(np.round(chart.axis[fb], 6)) == {-0.5, 0.5}


def test_full_contact_limit():
    chart = flat_chart_1d(n=65)
    psi = 0.3 * (1 - chart.axis**2)  # concave bump forced everywhere
    prob = ObstacleProblem(chart, psi=psi, dirichlet=0.0, operator="laplace",
                           forcing=np.ones(chart.shape))
    sol = solve_vi(prob, omega=1.8, max_sweeps=100000)
    interior = slice(1, -1)
    assert np.allclose(sol.u[interior], psi[interior], atol=1e-9)
    assert np.all(sol.residual[interior] <= 1e-9)  # Lu <= 0 on contact


def test_no_contact_limit_matches_linear_solve():
    chart = flat_chart_1d(n=129)
    prob = ObstacleProblem(chart, psi=-50.0, dirichlet=0.0, operator="laplace",
                           forcing=np.ones(chart.shape))
    sol = solve_vi(prob, omega=1.9, max_sweeps=200000)
    exact = (chart.axis**2 - 1.0) / 2.0  # u'' = 1, u(+-1) = 0
    assert np.max(np.abs(sol.u - exact)) < 1e-9
    assert not np.any(sol.contact)


def test_comparison_principle():
    exact_bv = closed_form_cosine(bv_only=True)
    chart = flat_chart_1d(n=129)
    f = 1.0 + 0.5 * np.cos(math.pi * chart.axis)
    prob = ObstacleProblem(chart, psi=0.0, dirichlet=exact_bv,
                           operator="laplace", forcing=f)
    sol = solve_vi(prob, omega=1.9, max_sweeps=200000)
    free = unconstrained_solve(prob, omega=1.9, max_sweeps=200000)
    assert np.all(sol.u >= free.u - 1e-9)
    assert np.all(sol.u >= prob.psi - 1e-12)


def test_quadratic_growth_closed_form():
    exact_bv = closed_form_cosine(bv_only=True)
    chart = flat_chart_1d(n=513)
    f = 1.0 + 0.5 * np.cos(math.pi * chart.axis)
    prob = ObstacleProblem(chart, psi=0.0, dirichlet=exact_bv,
                           operator="laplace", forcing=f)
    sol = solve_vi(prob, omega=1.9, max_sweeps=400000)
    report = quadratic_growth(sol)
    assert report["global"] == pytest.approx(0.5, rel=0.05)


def test_quadratic_growth_full_contact_zero():
    chart = flat_chart_1d(n=65)
    psi = 0.3 * (1 - chart.axis**2)
    prob = ObstacleProblem(chart, psi=psi, dirichlet=0.0, operator="laplace",
                           forcing=np.ones(chart.shape))
    sol = solve_vi(prob, omega=1.8, max_sweeps=100000)
    report = quadratic_growth(sol)
    assert report["global"] == pytest.approx(0.0, abs=1e-6)


def test_quadratic_growth_requires_contact():
    chart = flat_chart_1d(n=65)
    prob = ObstacleProblem(chart, psi=-50.0, dirichlet=0.0, operator="laplace",
                           forcing=np.ones(chart.shape))
    sol = solve_vi(prob, omega=1.8, max_sweeps=100000)
    with pytest.raises(EmptyContactSet):
        quadratic_growth(sol)


def test_c11_diagnostics_closed_form():
    exact_bv = closed_form_cosine(bv_only=True)
    reports = {}
    for n in (257, 513):
        chart = flat_chart_1d(n=n)
        f = 1.0 + 0.5 * np.cos(math.pi * chart.axis)
        prob = ObstacleProblem(chart, psi=0.0, dirichlet=exact_bv,
                               operator="laplace", forcing=f)
        sol = solve_vi(prob, omega=1.9, max_sweeps=400000)
        reports[n] = c11_check(sol)
    # second difference quotients stay bounded under refinement
    ratio = reports[513]["second_difference_sup"] / reports[257]["second_difference_sup"]
    assert ratio <= 2.0
    assert reports[513]["c_bar"] <= 2.0 * reports[257]["c_bar"]
    # third differences blow up where the curvature jumps
    growth = reports[513]["third_difference_sup"] / reports[257]["third_difference_sup"]
    assert growth >= 1.8


def test_c11_exact_hessian_when_unconstrained():
    chart = flat_chart_1d(n=257)
    prob = ObstacleProblem(chart, psi=-50.0, dirichlet=0.5, operator="laplace",
                           forcing=np.ones(chart.shape))
    sol = solve_vi(prob, omega=1.9, max_sweeps=200000)
    report = c11_check(sol)
    assert report["c_bar"] == pytest.approx(1.0, rel=1e-6)  # u'' = 1 everywhere


def test_2d_cap_experiment():
    R = 4.0
    chart = GraphChart(r0=0.5, n=49, dim=2)
    pts = chart.points
    psi = np.sqrt(R * R - np.einsum("...i,...i->...", pts, pts)) - R
    prob = ObstacleProblem(chart, psi=psi, dirichlet=-0.002, h0=0.0,
                           operator="geometric")
    sol = solve_vi(prob, omega=1.8, max_sweeps=50000)
    assert sol.diagnostics["complementarity_sup"] < 1e-10
    assert sol.diagnostics["contact_count"] > 0
    assert sol.diagnostics["grad_bound_ok"]
    _, _, _, c, _ = assemble_operator(prob, sol.u)
    eigs = np.linalg.eigvalsh(0.5 * (c + np.swapaxes(c, -1, -2)))
    assert eigs.min() >= 0.5 and eigs.max() <= 2.0


def test_compatibility_validation():
    chart = flat_chart_1d(n=65)
    with pytest.raises(ValueError):
        ObstacleProblem(chart, psi=1.0, dirichlet=0.0, operator="laplace",
                        forcing=np.ones(chart.shape))


def test_handoff_from_constrained_run():
    from isodiam.geometry import EuclideanPlane
    from isodiam.obstacle import from_shape_run
    from isodiam.shapeopt import MinimizeParams, minimize_in_ball
    from isodiam.verify import _dented_ball

    eu = EuclideanPlane()
    V = 0.95 * math.pi
    init = _dented_ball(eu, np.zeros(2), 1.0, V, 192)
    state, _ = minimize_in_ball(
        eu, V, np.zeros(2), 1.0, init,
        params=MinimizeParams(max_iters=300, plateau_window=40, plateau_rel=1e-10))
    problem, u_sample = from_shape_run(state, np.zeros(2), 1.0, window=0.25, n=129)
    sol = solve_vi(problem, max_sweeps=100000)
    assert sol.diagnostics["complementarity_sup"] < 1e-9
    # off the contact region the boundary graph solves the unconstrained
    # equation, so the solver reproduces the sampled free arc
    assert float(np.max(np.abs(sol.u - u_sample))) < 5e-3
