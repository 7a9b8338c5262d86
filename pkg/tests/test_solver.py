import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import R_ORIGINAL_AXES_P2, T_SQUARE
from torsmink.errors import (
    HemisphereViolation,
    InvalidInput,
    MaxItersExceeded,
    MissingFacet,
    PCritical,
)
from torsmink.geometry import (
    DiscreteMeasure,
    box,
    hausdorff_distance,
    match_facets,
    measure_from_angles,
    regular_measure,
    regular_polygon,
)
from torsmink.solver import (
    SolveConfig,
    Target,
    circumradius_bound,
    functional_Fp,
    objective_and_gradient,
    optimality_residual,
    original_residual,
    rescale_factor,
    rescale_solution,
    solve_normalized,
    solve_original,
)
from torsmink.torsion import lp_measure, torsion_data

AXES = regular_measure(4)
FIVE = measure_from_angles([0.1, 1.3, 2.4, 3.6, 5.0], [1, 2, 0.7, 1.5, 1.2])


@pytest.mark.parametrize("kwargs", [
    {"p": 1.0}, {"p": 0.5}, {"p": 2, "tol_residual": 0}, {"p": 2, "mesh_h": -1},
    {"p": 2, "backtrack_factor": 1.0}, {"p": 2, "backtrack_factor": 0.0},
])
def test_config_invariants(kwargs):
    with pytest.raises(InvalidInput):
        SolveConfig(**kwargs)


def test_config_defaults():
    c = SolveConfig(p=2)
    assert (c.mesh_h, c.tol_residual, c.max_iters, c.seed) == (0.02, 1e-2, 500, 0)


# F_p

@pytest.mark.parametrize("p", [1.5, 2, 3.7])
def test_fp_square(p, square):
    assert functional_Fp(AXES, square, p) == pytest.approx(1.0)


@given(st.floats(0.1, 5.0), st.floats(1.1, 6.0))
def test_fp_homogeneity(m, p):
    P = regular_polygon(5, 0.8)
    mu = regular_measure(7, phase=0.2)
    assert functional_Fp(mu, P.scaled(m), p) == pytest.approx(m ** p * functional_Fp(mu, P, p), rel=1e-10)


def test_fp_hexagon():
    r, p = 0.7, 2.5
    assert functional_Fp(regular_measure(6), regular_polygon(6, r), p) == pytest.approx(1.5 * r ** p)


# objective and gradient

@pytest.fixture(scope="module")
def five_eval():
    return objective_and_gradient(FIVE, np.array([1.0, 1.1, 0.9, 1.2, 1.0]), SolveConfig(p=2.5, mesh_h=0.05))


@pytest.mark.parametrize("m", [0.5, 2.0, 0.3, 3.0])
def test_objective_scale_invariant(five_eval, m):
    cfg = SolveConfig(p=2.5, mesh_h=0.05)
    # scaling y and the mesh together reproduces the same discrete problem
    ev = objective_and_gradient(FIVE, five_eval.y * m, SolveConfig(p=2.5, mesh_h=0.05 * m))
    assert ev.G == pytest.approx(five_eval.G, rel=1e-6)
    # on a fixed mesh size the quotient is invariant up to discretisation error
    ev = objective_and_gradient(FIVE, five_eval.y * m, cfg)
    assert ev.G == pytest.approx(five_eval.G, rel=2e-2)


def test_gradient_vanishes_at_symmetric_square():
    ev = objective_and_gradient(AXES, np.ones(4), SolveConfig(p=2))
    assert np.max(np.abs(ev.grad)) <= 1e-2 * np.max(np.abs(ev.G))


def test_gradient_matches_finite_differences(five_eval):
    cfg = SolveConfig(p=2.5, mesh_h=0.05)
    y = five_eval.y
    eps = 1e-3 * five_eval.polygon.diameter
    for i in range(len(y)):
        e = np.zeros(len(y))
        e[i] = eps
        a, b = objective_and_gradient(FIVE, y + e, cfg), objective_and_gradient(FIVE, y - e, cfg)
        assert (a.T - b.T) / (2 * eps) == pytest.approx(five_eval.mu[i], rel=2e-2)
        fd = (a.G - b.G) / (2 * eps)
        assert abs(fd - five_eval.grad[i]) <= 3e-2 * np.max(np.abs(five_eval.grad))


def test_inactive_facet_cleaned():
    normals = np.vstack([AXES.normals, [[math.sqrt(0.5), math.sqrt(0.5)]]])
    m = DiscreteMeasure(normals[[0, 4, 1, 2, 3]], np.ones(5))
    ev = objective_and_gradient(m, np.array([1, 5, 1, 1, 1.0]), SolveConfig(p=2, mesh_h=0.1))
    assert ev.y[1] == pytest.approx(math.sqrt(2))
    assert ev.mu[1] == 0.0


def test_objective_rejects_nonpositive():
    with pytest.raises(InvalidInput):
        objective_and_gradient(AXES, [1, 0, 1, 1], SolveConfig(p=2))


# residuals

def test_residual_of_square_solution(square):
    d = torsion_data(square, 0.02)
    assert optimality_residual(AXES, square, d, 2) < 1e-2
    wrong = AXES.with_weights([2, 1, 1, 1])
    assert optimality_residual(wrong, square, d, 2) > 0.3
    # scale sensitivity
    for m in (0.8, 1.25):
        assert optimality_residual(AXES, square.scaled(m), d.scaled(m), 2) > 1e-2


def test_residual_missing_facet(square):
    d = torsion_data(square, 0.1)
    m = measure_from_angles([0, 1, math.pi / 2, math.pi, 3 * math.pi / 2], [1] * 5)
    with pytest.raises(MissingFacet):
        optimality_residual(m, square, d, 2)


# rescaling

def test_rescale_factors():
    assert rescale_factor(2, Target.ORIGINAL, T=1.0) == 1.0
    assert rescale_factor(2, "T_EQ_1", T=16.0) == pytest.approx(0.5)
    assert rescale_factor(2, "FP_EQ_1", F=4.0) == pytest.approx(0.5)
    assert rescale_factor(3, "NORMALIZED", T=8.0) == pytest.approx(0.5)
    with pytest.raises(PCritical):
        rescale_factor(4, Target.ORIGINAL, T=2.0)


def test_rescale_round_trip():
    P = regular_polygon(5, 0.9)
    d = torsion_data(P, 0.05)
    for p in (1.5, 2.0, 3.0, 6.0):
        Q = rescale_solution(P, p, Target.ORIGINAL, data=d)
        s = rescale_factor(p, Target.ORIGINAL, T=d.T)
        back = rescale_solution(Q, p, Target.NORMALIZED, data=d.scaled(s))
        assert hausdorff_distance(P, back).distance <= 1e-9


def test_rescale_needs_context():
    with pytest.raises(InvalidInput):
        rescale_solution(box(-1, 1, -1, 1), 2, Target.FP_EQ_1)
    with pytest.raises(InvalidInput):
        rescale_solution(box(-1, 1, -1, 1), 2, Target.ORIGINAL)


def test_fp_eq_1_rescale(square):
    Q = rescale_solution(square.scaled(3), 2, Target.FP_EQ_1, m=AXES)
    assert functional_Fp(AXES, Q, 2) == pytest.approx(1.0)


# solves

@pytest.fixture(scope="module")
def axes_p2():
    return solve_normalized(AXES, SolveConfig(p=2))


def test_normalized_square(axes_p2, square):
    r = axes_p2
    assert hausdorff_distance(r.normalized_solution, square).distance <= 1e-2
    assert r.Fp_value == pytest.approx(1.0, abs=1e-6)
    assert r.residual <= 1e-2
    assert r.lagrange_b == pytest.approx(4 * r.T_value / 2)
    assert np.all(r.normalized_solution.supports > 0)
    assert np.all(match_facets(r.normalized_solution, AXES.normals) >= 0)


def test_original_square(axes_p2):
    P = axes_p2.original_solution
    assert np.allclose(P.supports, R_ORIGINAL_AXES_P2, rtol=1e-2)
    assert axes_p2.original_residual <= 1e-2
    # lp measure of the original solution reproduces the weights
    lp = lp_measure(axes_p2.original_data, P, 2)
    assert np.allclose(lp, AXES.weights, rtol=1e-2)
    assert R_ORIGINAL_AXES_P2 == pytest.approx(1 / math.sqrt(T_SQUARE), rel=1e-12)


def test_report_json(axes_p2):
    js = axes_p2.to_json()
    assert js["converged"] is True
    assert len(js["normalized_solution"]["facets"]) == 4
    assert js["original_solution"]["residual"] == axes_p2.original_residual
    assert len(js["iterations"]) == len(axes_p2.iterations)


def test_p4_has_no_original():
    with pytest.raises(PCritical):
        solve_original(AXES, SolveConfig(p=4))
    r = solve_normalized(AXES, SolveConfig(p=4, mesh_h=0.05))
    assert r.original_solution is None


def test_hemisphere_violation():
    m = DiscreteMeasure(np.array([[1.0, 0], [0, 1.0], [-1.0, 0]]), np.ones(3))
    with pytest.raises(HemisphereViolation):
        solve_normalized(m, SolveConfig(p=2))


@pytest.fixture(scope="module")
def five_report():
    # the residual floor at this mesh size is about 5e-3
    return solve_normalized(FIVE, SolveConfig(p=2, mesh_h=0.05, tol_residual=1e-2))


def test_descent_is_monotone(five_report):
    G = [r.objective for r in five_report.iterations]
    assert all(b <= a for a, b in zip(G, G[1:]))
    assert five_report.residual < 1e-2
    assert five_report.iterations[-1].residual == pytest.approx(five_report.residual, rel=1e-12)


def test_all_facets_active(five_report):
    P = five_report.normalized_solution
    idx = match_facets(P, FIVE.normals)
    assert np.all(idx >= 0)
    assert np.all(P.lengths[idx] > 1e-8 * P.diameter)
    assert P.contains([0, 0]) and np.all(P.supports > 0)


def test_circumradius_bound(five_report):
    R = np.linalg.norm(five_report.normalized_solution.vertices, axis=1).max()
    assert R <= circumradius_bound(FIVE, 2)


def test_circumradius_bound_square():
    # C = min over u of sum (u . xi)_+^2 = 1 for the axis measure, so the bound is 2
    assert circumradius_bound(AXES, 2) == pytest.approx(2.0, rel=1e-9)


def test_max_iters_exceeded_carries_history():
    with pytest.raises(MaxItersExceeded) as ei:
        solve_normalized(FIVE, SolveConfig(p=2, mesh_h=0.1, max_iters=1, tol_residual=1e-6))
    assert len(ei.value.history) == 2
    assert ei.value.report is not None and not ei.value.report.converged


def test_solve_deterministic():
    cfg = SolveConfig(p=2.5, mesh_h=0.05, tol_residual=1.5e-2)
    a, b = solve_normalized(FIVE, cfg), solve_normalized(FIVE, cfg)
    assert np.array_equal(a.normalized_solution.vertices, b.normalized_solution.vertices)


def test_original_residual_consistent(axes_p2):
    P, d = axes_p2.original_solution, axes_p2.original_data
    assert original_residual(AXES, P, d, 2) == pytest.approx(axes_p2.original_residual)
