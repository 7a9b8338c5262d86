import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from torsmink.errors import InvalidInput, PCritical
from torsmink.geometry import box, random_polygon, regular_measure, regular_polygon
from torsmink.solver import SolveConfig
from torsmink import verify as V
from torsmink.verify import (
    CheckConfig,
    CheckReport,
    ConvergenceTable,
    TableRow,
    bm_check,
    check,
    hadamard_check,
    identity_suite,
    minkowski_ineq_check,
    parallel_map,
    weak_convergence_probe,
)

COARSE = CheckConfig(mesh_h=0.05)


@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(0, 5),
       st.sampled_from(["le", "ge", "abs"]), st.booleans())
def test_check_report_self_verifying(measured, bound, tol, rel, cond):
    r = check("x", measured, bound, tol, rel, conditions={"c": cond})
    assert r.reevaluate() == r.passed
    if not cond:
        assert not r.passed


def test_check_relations():
    assert check("a", 1.0, 1.0, 0.0, "le").passed
    assert not check("a", 1.1, 1.0, 0.05, "le").passed
    assert check("a", 0.96, 1.0, 0.05, "ge").passed
    assert check("a", 1.04, 1.0, 0.05, "abs").passed
    assert not check("a", float("nan"), 1.0, 1.0, "abs").passed
    with pytest.raises(InvalidInput):
        check("a", 1.0, 1.0, 0.0, "lt")


def test_identity_suite_square():
    reports = identity_suite(box(-1, 1, -1, 1), CheckConfig())
    names = {r.name for r in reports}
    assert {"support_identity", "divergence_identity", "gradient_bound", "volume_bound",
            "translation_invariance", "homogeneity_T_m2"} <= names
    assert all(r.passed for r in reports)
    assert all(r.reevaluate() == r.passed for r in reports)


def test_identity_suite_64gon_gradient():
    P = regular_polygon(64)
    reports = {r.name: r for r in identity_suite(P, COARSE)}
    assert all(r.passed for r in reports.values())
    # max |grad u| is about 1 on the unit disk; diam is 2/cos(pi/64)
    g = reports["gradient_bound"].details["max_gradient"]
    assert g == pytest.approx(1.0, rel=3e-2)


def test_identity_suite_random_pentagon_totality():
    P = random_polygon(np.random.default_rng(7), k=5)
    reports = identity_suite(P, COARSE)
    assert all(math.isfinite(r.measured) for r in reports)


def test_hadamard_self_pair(square):
    r = hadamard_check(square, square, cfg=COARSE)
    assert r.passed
    assert r.details["formula"] == pytest.approx(4 * 2.2493, rel=2e-2)


def test_hadamard_point_is_zero_for_symmetric(square):
    r = hadamard_check(square, np.array([0.3, -0.2]), cfg=COARSE)
    assert r.passed
    assert abs(r.details["finite_difference"]) <= 1e-3


def test_hadamard_rejects_bad_t(square):
    with pytest.raises(InvalidInput):
        hadamard_check(square, square, t_list=[0.1, -0.1])


def test_neville_extrapolation_exact_for_polynomials():
    ts = [0.4, 0.2, 0.1]
    assert V._neville_at_zero(ts, [3 + 2 * t - t * t for t in ts]) == pytest.approx(3.0)


def test_bm_endpoints_exact(square, hexagon):
    for lam in (0.0, 1.0):
        r = bm_check(square, hexagon, lam, COARSE)
        assert r.measured == 0.0 and r.passed and r.details["equality"]


def test_bm_homothetic_equality(square):
    r = bm_check(square, square.translated([0.4, -0.3]), 0.3, COARSE)
    assert r.passed and r.details["equality"]


def test_bm_strict_square_vs_64gon(square):
    r = bm_check(square, regular_polygon(64), 0.5, COARSE)
    assert r.passed and r.measured > 0 and not r.details["equality"]


def test_bm_rejects_lambda(square):
    with pytest.raises(InvalidInput):
        bm_check(square, square, 1.5)


def test_minkowski_homothetic_and_strict(square, hexagon):
    self_pair = minkowski_ineq_check(square, square, CheckConfig())
    assert self_pair.passed and self_pair.details["equality"]
    homothetic = minkowski_ineq_check(square, square.scaled(1.7).translated([0.2, 0.1]), CheckConfig())
    assert homothetic.passed and homothetic.details["equality"]
    strict = minkowski_ineq_check(square, hexagon, CheckConfig())
    assert strict.passed and strict.measured > 1.001


def test_weak_convergence_regular_sequence():
    seq = [regular_polygon(k) for k in (8, 16, 32)]
    r = weak_convergence_probe(seq, regular_polygon(64), V.regular_sequence_fns(), COARSE)
    assert r.passed
    # odd test function integrates to zero on symmetric bodies, up to mesh noise
    assert max(r.details["gaps"][1]) < 1e-4 * r.details["limit_total"]


def test_weak_convergence_constant_sequence(hexagon):
    r = weak_convergence_probe([hexagon] * 3, hexagon, V.regular_sequence_fns(), COARSE)
    assert r.passed and r.measured == 0.0


def test_weak_convergence_detects_growth():
    # growth far above the noise floor
    seq = [regular_polygon(32), regular_polygon(8)]
    r = weak_convergence_probe(seq, regular_polygon(64), V.regular_sequence_fns(), COARSE)
    assert not r.passed and not r.details["conditions"]["gaps_non_increasing"]
    assert r.reevaluate() is False


# convergence tables

def _table(dists, errors=None, tol=1e-2):
    errors = errors or [None] * len(dists)
    rows = [TableRow(i, 0.1 / 2 ** i, d, 1e-3, 1.0, e) for i, (d, e) in enumerate(zip(dists, errors))]
    return ConvergenceTable(rows, box(-1, 1, -1, 1), None, tol)


def test_table_pass_logic():
    assert _table([0.04, 0.02, 0.01]).passed
    assert _table([0.04, 0.02, 0.01]).strictly_decreasing
    assert _table([0.04, 0.04, 0.01]).passed and not _table([0.04, 0.04, 0.01]).strictly_decreasing
    assert not _table([0.04, 0.05, 0.01]).passed
    assert not _table([0.5, 0.3, 0.2]).passed  # final distance not small
    assert not _table([0.04, 0.02, float("nan")], [None, None, "boom"]).passed
    rep = _table([0.04, 0.02, 0.01]).check_report()
    assert rep.passed and rep.reevaluate()


def test_table_csv_and_rates():
    t = _table([0.04, 0.02, 0.01])
    lines = t.to_csv().strip().splitlines()
    assert lines[0] == "i,perturbation,hausdorff,residual,T"
    assert len(lines) == 4
    assert t.rates == pytest.approx([1.0, 1.0])
    js = t.to_json()
    assert js["passed"] and len(js["rows"]) == 3


def test_perturbation_helpers():
    m = regular_measure(4)
    pert = V.weight_perturbations(m, [0.1, 0.05], index=2)
    assert [s for s, _ in pert] == [0.1, 0.05]
    assert pert[0][1].weights[2] == pytest.approx(1.1)
    jit = V.jitter_perturbations(m, [0.05, 0.0], seed=1)
    assert np.allclose(jit[1][1].normals, m.normals, atol=1e-12)
    assert np.max(np.abs(jit[0][1].angles - m.angles)) <= 0.05 + 1e-12


def test_continuity_rejects_bad_schedules():
    m = regular_measure(4)
    with pytest.raises(InvalidInput):
        V.continuity_in_measure(m, [], SolveConfig(p=2))
    with pytest.raises(InvalidInput):
        V.continuity_in_p(m, [], SolveConfig(p=2))
    with pytest.raises(PCritical):
        V.continuity_in_p(m, [2.5], SolveConfig(p=4))


def test_continuity_zero_perturbation_and_determinism():
    m = regular_measure(4)
    cfg = SolveConfig(p=2, mesh_h=0.05)
    a = V.continuity_in_measure(m, V.weight_perturbations(m, [0.1, 0.0]), cfg)
    b = V.continuity_in_measure(m, V.weight_perturbations(m, [0.1, 0.0]), cfg)
    assert a.to_csv() == b.to_csv()
    assert a.rows[-1].hausdorff < 1e-3
    assert a.passed


def test_continuity_in_p_same_p():
    cfg = SolveConfig(p=2, mesh_h=0.05)
    t = V.continuity_in_p(regular_measure(4), [2.5, 2.0], cfg)
    assert t.rows[-1].hausdorff < 1e-3
    assert t.rows[0].hausdorff > t.rows[-1].hausdorff


def test_continuity_row_failure_recorded():
    # p = 4 on a row: the original problem is excluded, the row fails alone
    cfg = SolveConfig(p=2, mesh_h=0.05)
    t = V.continuity_in_p(regular_measure(4), [4.0, 2.0], cfg)
    assert t.rows[0].error is not None and "PCritical" in t.rows[0].error
    assert t.rows[1].error is None
    assert not t.passed


def test_uniqueness_probe_deterministic():
    m = regular_measure(4)
    # polishing past the residual floor is what pins the solutions together
    cfg = SolveConfig(p=2, mesh_h=0.05, seed=3, polish_iters=10)
    a = V.uniqueness_probe(m, 2, cfg)
    b = V.uniqueness_probe(m, 2, cfg)
    assert a.measured == b.measured
    ra, rb = a.details["reports"], b.details["reports"]
    assert all(np.array_equal(x.normalized_solution.vertices, y.normalized_solution.vertices)
               for x, y in zip(ra, rb))
    assert a.passed
    with pytest.raises(InvalidInput):
        V.uniqueness_probe(m, 1, cfg)


def test_jensen_and_bounds():
    from torsmink.solver import solve_normalized

    rep = solve_normalized(regular_measure(4), SolveConfig(p=2, mesh_h=0.05))
    j = V.jensen_check(rep, n_bodies=5, cfg=COARSE)
    assert j.passed and len(j.details["ratios"]) == 5
    bounds = V.solution_bounds(rep)
    assert all(b.passed for b in bounds)
    assert {b.name for b in bounds} >= {"circumradius_bound", "gradient_bound_normalized", "volume_bound_original"}


def _square(x):
    return x * x


def test_parallel_map_ordered(monkeypatch):
    monkeypatch.setenv("TORSMINK_THREADS", "1")
    assert parallel_map(_square, [3, 1, 2]) == [9, 1, 4]
    assert V.worker_count() == 1
    monkeypatch.setenv("TORSMINK_THREADS", "2")
    assert parallel_map(_square, [3, 1, 2]) == [9, 1, 4]
    monkeypatch.setenv("TORSMINK_THREADS", "lots")
    with pytest.raises(InvalidInput):
        V.worker_count()


def test_report_json_roundtrips_through_json():
    import json

    r = check("x", 0.5, 1.0, 0.1, arr=np.arange(3), poly=box(0, 1, 0, 1))
    s = json.dumps(r.to_json())
    assert json.loads(s)["details"]["arr"] == [0, 1, 2]
    assert isinstance(r, CheckReport)
