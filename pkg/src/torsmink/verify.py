"""Executable checks of the torsion identities, inequalities and continuity results.

Every check returns a :class:`CheckReport` whose ``passed`` flag can be
recomputed from ``measured``, ``bound``, ``tolerance`` and ``relation``
(plus any boolean side conditions stored under ``details["conditions"]``).
Continuity experiments return a :class:`ConvergenceTable`.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidInput, PCritical, TorsminkError
from .geometry import (
    ConvexPolygon,
    DiscreteMeasure,
    build_measure,
    hausdorff_distance,
    hemisphere_check,
    minkowski_combine,
    polygon_metrics,
)
from .solver import (
    N_PLUS_2,
    SolveConfig,
    SolveReport,
    circumradius_bound,
    functional_Fp,
    solve_normalized,
    solve_original,
)
from .torsion import (
    RIGIDITY_DEGREE,
    TorsionData,
    mixed_rigidity,
    rigidity_pair,
    solve_torsion,
    facet_torsion_measure,
    torsion_data,
)
from .mesh import triangulate

RELATIONS = ("le", "ge", "abs")


@dataclass(frozen=True)
class CheckConfig:
    mesh_h: float = 0.02
    seed: int = 0
    identity_tol: float = 1e-2
    hadamard_tol: float = 2e-2
    ineq_slack: float = 1e-3
    equality_tol: float = 1e-3
    weak_tol: float = 2e-2
    uniqueness_tol: float = 1e-3
    jensen_tol: float = 1e-2


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one check.

    relation "le": measured <= bound + tolerance
             "ge": measured >= bound - tolerance
             "abs": |measured - bound| <= tolerance
    """

    name: str
    passed: bool
    measured: float
    bound: float
    tolerance: float
    relation: str = "le"
    details: dict = field(default_factory=dict)

    def reevaluate(self) -> bool:
        return _holds(self.measured, self.bound, self.tolerance, self.relation,
                      self.details.get("conditions", {}))

    def to_json(self) -> dict:
        return {
            "name": self.name, "passed": self.passed, "measured": self.measured,
            "bound": self.bound, "tolerance": self.tolerance, "relation": self.relation,
            "details": _jsonable(self.details),
        }


def _holds(measured, bound, tolerance, relation, conditions=None) -> bool:
    if relation not in RELATIONS:
        raise InvalidInput(f"unknown relation {relation!r}")
    if not math.isfinite(measured):
        ok = False
    elif relation == "le":
        ok = measured <= bound + tolerance
    elif relation == "ge":
        ok = measured >= bound - tolerance
    else:
        ok = abs(measured - bound) <= tolerance
    return bool(ok and all((conditions or {}).values()))


def check(name, measured, bound, tolerance, relation="le", **details) -> CheckReport:
    measured = float(measured)
    passed = _holds(measured, bound, tolerance, relation, details.get("conditions"))
    return CheckReport(name, passed, measured, float(bound), float(tolerance), relation, details)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, ConvexPolygon):
        return {"vertices": x.vertices.tolist()}
    if isinstance(x, SolveReport):
        return {"residual": x.residual, "vertices": x.normalized_solution.vertices.tolist()}
    return x


# parallel map over independent solves

def worker_count() -> int:
    env = os.environ.get("TORSMINK_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidInput(f"TORSMINK_THREADS must be an integer, got {env!r}")
    return os.cpu_count() or 1


def parallel_map(fn, items: Sequence, workers: int | None = None) -> list:
    """Ordered map; runs in worker processes when more than one is allowed."""
    items = list(items)
    workers = min(workers or worker_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# identities

def _data(P: ConvexPolygon, h: float) -> TorsionData:
    return torsion_data(P, h, tol=None)


def identity_suite(P: ConvexPolygon, cfg: CheckConfig = CheckConfig()) -> list[CheckReport]:
    tol = cfg.identity_tol
    field_ = solve_torsion(triangulate(P, cfg.mesh_h))
    d = facet_torsion_measure(field_, P, tol=None)
    area, diam, _ = polygon_metrics(P)
    out = []

    for m in (0.5, 2.0):
        dm = _data(P.scaled(m), cfg.mesh_h)
        out.append(check(f"homogeneity_T_m{m:g}", dm.T / (m ** RIGIDITY_DEGREE * d.T), 1.0, tol, "abs"))
        ratio = dm.facet_measures / (m ** (RIGIDITY_DEGREE - 1) * d.facet_measures)
        out.append(check(f"homogeneity_mu_m{m:g}", float(np.max(np.abs(ratio - 1.0))), 0.0, tol,
                         ratios=ratio))

    rng = np.random.default_rng(cfg.seed)
    x0 = rng.uniform(-0.5, 0.5, 2) * diam
    dt = _data(P.translated(x0), cfg.mesh_h)
    shift = max(abs(dt.T / d.T - 1.0),
                float(np.max(np.abs(dt.facet_measures / d.facet_measures - 1.0))))
    out.append(check("translation_invariance", shift, 0.0, tol, x0=x0))

    out.append(check("gradient_bound", field_.max_gradient / diam, 1.0, tol,
                     max_gradient=field_.max_gradient, diameter=diam))
    out.append(check("support_identity", d.support_residual, 0.0, tol,
                     sum_h_mu=float(np.dot(d.supports, d.facet_measures)), T=d.T))
    out.append(check("divergence_identity", d.divergence_residual, 0.0, tol,
                     flux_total=d.diagnostics["flux_total"], area=area))
    out.append(check("volume_bound", d.T / (diam ** 2 * area), 1.0, tol))
    energy, mean = rigidity_pair(field_)
    out.append(check("rigidity_formulas", abs(energy - mean) / energy, 0.0, tol,
                     energy=energy, two_int_u=mean))
    return out


def _neville_at_zero(ts, vals) -> float:
    """Value at 0 of the interpolating polynomial through (ts, vals)."""
    p = list(map(float, vals))
    t = list(map(float, ts))
    n = len(p)
    for k in range(1, n):
        for i in range(n - k):
            p[i] = (t[i + k] * p[i] - t[i] * p[i + 1]) / (t[i + k] - t[i])
    return p[0]


def _plus(P: ConvexPolygon, t: float, P1) -> ConvexPolygon:
    if isinstance(P1, ConvexPolygon):
        return minkowski_combine(1.0, P, t, P1)
    return P.translated(t * np.asarray(P1, dtype=float))


def hadamard_check(P: ConvexPolygon, P1, t_list: Sequence[float] | None = None,
                   cfg: CheckConfig = CheckConfig()) -> CheckReport:
    """Extrapolated difference quotient of ``t -> T(P + t P1)`` against ``sum h(P1, xi) mu``.

    ``P1`` may be a polygon or a point. The gap is measured relative to
    ``sum |h(P1, xi)| mu``, which stays meaningful when the formula vanishes.
    """
    diam = P.diameter
    ts = np.asarray(t_list if t_list is not None else [0.1 * diam, 0.05 * diam, 0.025 * diam], float)
    if np.any(ts <= 0):
        raise InvalidInput("t values must be positive")
    d = _data(P, cfg.mesh_h)
    if isinstance(P1, ConvexPolygon):
        from .geometry import support_function
        h1 = np.asarray(support_function(P1, d.normals))
    else:
        h1 = d.normals @ np.asarray(P1, dtype=float)
    formula = float(np.dot(h1, d.facet_measures))
    scale = float(np.dot(np.abs(h1), d.facet_measures))
    quotients = [(_data(_plus(P, t, P1), cfg.mesh_h).T - d.T) / t for t in ts]
    fd = _neville_at_zero(ts, quotients) if len(ts) > 1 else quotients[0]
    rel = abs(fd - formula) / scale if scale > 0 else abs(fd - formula)
    return check("hadamard", rel, 0.0, cfg.hadamard_tol, finite_difference=fd,
                 formula=formula, quotients=quotients, t=ts)


def bm_check(P0: ConvexPolygon, P1: ConvexPolygon, lam: float,
             cfg: CheckConfig = CheckConfig()) -> CheckReport:
    """Brunn-Minkowski for rigidity with the convex combination ``lam P0 + (1-lam) P1``."""
    if not 0.0 <= lam <= 1.0:
        raise InvalidInput(f"lambda must lie in [0, 1], got {lam}")
    q = 1.0 / RIGIDITY_DEGREE
    T0, T1 = _data(P0, cfg.mesh_h).T, _data(P1, cfg.mesh_h).T
    C = minkowski_combine(lam, P0, 1.0 - lam, P1)
    Tc = _data(C, cfg.mesh_h).T
    lhs = Tc ** q
    rhs = lam * T0 ** q + (1.0 - lam) * T1 ** q
    rel = (lhs - rhs) / rhs
    return check("brunn_minkowski", rel, 0.0, cfg.ineq_slack, "ge", lhs=lhs, rhs=rhs,
                 equality=abs(rel) <= cfg.equality_tol, lam=lam)


def minkowski_ineq_check(P0: ConvexPolygon, P1: ConvexPolygon,
                         cfg: CheckConfig = CheckConfig()) -> CheckReport:
    """``T(P0,P1) >= T(P0)^((n+1)/(n+2)) T(P1)^(1/(n+2))`` as a ratio of (n+2)-th roots.

    Both sides are measured in the discrete torsion measure of P0: the mixed
    rigidity is divided by ``T(P0,P0) = sum h mu / (n+2)`` rather than the FEM
    rigidity, which removes the support-identity residual common to both.
    Each body is meshed at a size proportional to its diameter (the larger one
    at ``mesh_h``), so homothetic copies get similar meshes. The raw ratio
    against the FEM ``T(P0)`` is kept in the details. The tolerance is the root
    of the slack on the (n+2)-th power form.
    """
    dmax = max(P0.diameter, P1.diameter)
    d0 = _data(P0, cfg.mesh_h * P0.diameter / dmax)
    T1 = _data(P1, cfg.mesh_h * P1.diameter / dmax).T
    T01 = mixed_rigidity(d0, P1)
    T00 = mixed_rigidity(d0, P0)
    k = RIGIDITY_DEGREE
    ratio = (T01 / T00) * (d0.T / T1) ** (1.0 / k)
    raw = T01 / (d0.T ** ((k - 1) / k) * T1 ** (1.0 / k))
    tol = 1.0 - (1.0 - 4 * cfg.ineq_slack) ** (1.0 / k)
    return check("minkowski_inequality", ratio, 1.0, tol, "ge", mixed=T01, self_mixed=T00,
                 T0=d0.T, T1=T1, raw_ratio=raw, equality=abs(ratio - 1.0) <= cfg.equality_tol)


# continuity experiments

@dataclass(frozen=True)
class TableRow:
    i: int
    perturbation: float
    hausdorff: float
    residual: float
    T: float
    error: Optional[str] = None


@dataclass(frozen=True, eq=False)
class ConvergenceTable:
    rows: list
    limit: ConvexPolygon
    limit_report: SolveReport
    tolerance: float
    reports: list = field(default_factory=list)

    @property
    def distances(self) -> np.ndarray:
        return np.array([r.hausdorff for r in self.rows])

    @property
    def failed_rows(self) -> list:
        return [r for r in self.rows if r.error is not None]

    @property
    def non_increasing(self) -> bool:
        d = self.distances
        return bool(np.all(np.diff(d) <= 0))

    @property
    def strictly_decreasing(self) -> bool:
        d = self.distances
        return bool(np.all(np.diff(d) < 0))

    @property
    def rates(self) -> list:
        """Observed log-ratio of distance to perturbation between consecutive rows."""
        out = []
        for a, b in zip(self.rows, self.rows[1:]):
            if a.hausdorff > 0 and b.hausdorff > 0 and a.perturbation != b.perturbation:
                out.append(math.log(a.hausdorff / b.hausdorff) / math.log(a.perturbation / b.perturbation))
            else:
                out.append(float("nan"))
        return out

    @property
    def passed(self) -> bool:
        if self.failed_rows or not self.rows:
            return False
        return self.non_increasing and self.rows[-1].hausdorff < 10 * self.tolerance

    def check_report(self, name="continuity") -> CheckReport:
        final = self.rows[-1].hausdorff if self.rows else float("inf")
        return check(name, final, 10 * self.tolerance, 0.0, "le", conditions={
            "no_failed_rows": not self.failed_rows,
            "non_increasing": self.non_increasing,
        })

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "perturbation", "hausdorff", "residual", "T"])
        for r in self.rows:
            if r.error is None:
                w.writerow([r.i, repr(r.perturbation), repr(r.hausdorff), repr(r.residual), repr(r.T)])
            else:
                w.writerow([r.i, repr(r.perturbation), "nan", "nan", "nan"])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "non_increasing": self.non_increasing,
            "strictly_decreasing": self.strictly_decreasing,
            "tolerance": self.tolerance,
            "rates": self.rates,
            "limit": {"vertices": self.limit.vertices.tolist()},
            "rows": [
                {"i": r.i, "perturbation": r.perturbation, "hausdorff": r.hausdorff,
                 "residual": r.residual, "T": r.T, "error": r.error}
                for r in self.rows
            ],
        }


def _solve_job(job):
    """Worker: one original-problem solve. Errors come back as strings so a row can fail alone."""
    m, cfg = job
    try:
        if not hemisphere_check(m)[0]:
            raise InvalidInput("perturbed measure violates the hemisphere condition")
        return solve_original(m, cfg)
    except TorsminkError as e:
        return f"{type(e).__name__}: {e}"


def _table(jobs, sizes, limit_report, tolerance) -> ConvergenceTable:
    results = parallel_map(_solve_job, jobs)
    rows, reports = [], []
    for i, (size, res) in enumerate(zip(sizes, results), start=1):
        if isinstance(res, str):
            rows.append(TableRow(i, float(size), float("nan"), float("nan"), float("nan"), res))
            reports.append(None)
            continue
        dist = hausdorff_distance(res.original_solution, limit_report.original_solution).distance
        rows.append(TableRow(i, float(size), dist, float(res.original_residual),
                             float(res.original_data.T)))
        reports.append(res)
    return ConvergenceTable(rows, limit_report.original_solution, limit_report, tolerance, reports)


def _limit(m, cfg):
    res = _solve_job((m, cfg))
    if isinstance(res, str):
        raise TorsminkError(f"limit solve failed: {res}")
    return res


def continuity_in_measure(m: DiscreteMeasure, perturbed: Sequence[tuple[float, DiscreteMeasure]],
                          cfg: SolveConfig) -> ConvergenceTable:
    """Original-problem solutions of perturbed measures against the solution for ``m``.

    ``perturbed`` holds ``(size, measure)`` pairs in order of shrinking size.
    """
    if cfg.p == N_PLUS_2:
        raise PCritical(f"p equals n+2 = {N_PLUS_2}")
    if not perturbed:
        raise InvalidInput("empty perturbation schedule")
    limit = _limit(m, cfg)
    return _table([(mi, cfg) for _, mi in perturbed], [s for s, _ in perturbed], limit, cfg.tol_residual)


def continuity_in_p(m: DiscreteMeasure, p_list: Sequence[float], cfg: SolveConfig) -> ConvergenceTable:
    """Original-problem solutions for each ``p_i`` against the solution at ``cfg.p``."""
    if not len(p_list):
        raise InvalidInput("empty p schedule")
    if cfg.p == N_PLUS_2:
        raise PCritical(f"p equals n+2 = {N_PLUS_2}")
    for pi in p_list:
        if not pi > 1:
            raise InvalidInput(f"p values must exceed 1, got {pi}")
    limit = _limit(m, cfg)
    jobs = []
    for pi in p_list:
        jobs.append((m, SolveConfig(**{**_cfg_dict(cfg), "p": float(pi)})))
    return _table(jobs, [abs(pi - cfg.p) for pi in p_list], limit, cfg.tol_residual)


def _cfg_dict(cfg: SolveConfig) -> dict:
    return {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}


def weight_perturbations(m: DiscreteMeasure, eps: Sequence[float], index: int = 0):
    """``(eps, m with weight index scaled by 1 + eps)`` pairs."""
    out = []
    for e in eps:
        w = m.weights.copy()
        w[index] *= 1.0 + e
        out.append((float(e), m.with_weights(w)))
    return out


def jitter_perturbations(m: DiscreteMeasure, sizes: Sequence[float], seed: int = 0):
    """Rotate each normal by ``size * s_i`` with fixed random signs ``s_i in [-1, 1]``."""
    rng = np.random.default_rng(seed)
    s = rng.uniform(-1.0, 1.0, len(m))
    out = []
    for a in sizes:
        ang = m.angles + a * s
        out.append((float(a), build_measure(np.column_stack([np.cos(ang), np.sin(ang)]), m.weights)))
    return out


def _normalized_job(job):
    m, cfg, y0 = job
    return solve_normalized(m, cfg, y0=y0, with_original=False)


def uniqueness_probe(m: DiscreteMeasure, k: int, cfg: SolveConfig,
                     check_cfg: CheckConfig = CheckConfig()) -> CheckReport:
    """``k`` normalized solves from seeded starts in ``[0.5, 2]^m``; pairwise Hausdorff vs diam."""
    if k < 2:
        raise InvalidInput("uniqueness probe needs k >= 2")
    rng = np.random.default_rng(cfg.seed)
    starts = [rng.uniform(0.5, 2.0, len(m)) for _ in range(k)]
    reports = parallel_map(_normalized_job, [(m, cfg, y0) for y0 in starts])
    polys = [r.normalized_solution for r in reports]
    diam = max(P.diameter for P in polys)
    worst = 0.0
    for a, b in itertools.combinations(range(k), 2):
        worst = max(worst, hausdorff_distance(polys[a], polys[b]).distance)
    return check("uniqueness", worst / diam, check_cfg.uniqueness_tol, 0.0, "le",
                 max_distance=worst, diameter=diam, residuals=[r.residual for r in reports],
                 iterations=[len(r.iterations) for r in reports], reports=reports)


def weak_convergence_probe(P_seq: Sequence[ConvexPolygon], P_limit: ConvexPolygon,
                           test_fns: Sequence[Callable[[np.ndarray], np.ndarray]],
                           cfg: CheckConfig = CheckConfig()) -> CheckReport:
    """Integrals of test functions against the torsion measures of a sequence.

    Each ``f`` maps an (k, 2) array of unit normals to k values. For every f
    the gap to the limit's integral must not grow along the sequence and the
    final gap must be below ``weak_tol * total measure * max|f|``. Gaps below
    ``1e-4 * total * max|f|`` are mesh noise and count as ties.
    """
    dl = _data(P_limit, cfg.mesh_h)
    total = dl.total_measure
    circle = np.column_stack([np.cos(np.linspace(0, 2 * math.pi, 720, endpoint=False)),
                              np.sin(np.linspace(0, 2 * math.pi, 720, endpoint=False))])
    datas = [_data(P, cfg.mesh_h) for P in P_seq]
    worst, monotone, gaps_all = 0.0, True, []
    for f in test_fns:
        fmax = float(np.max(np.abs(f(circle)))) or 1.0
        limit_val = float(np.dot(f(dl.normals), dl.facet_measures))
        gaps = [abs(float(np.dot(f(d.normals), d.facet_measures)) - limit_val) for d in datas]
        slack = 1e-4 * total * fmax
        monotone &= all(b <= a + slack for a, b in zip(gaps, gaps[1:]))
        worst = max(worst, gaps[-1] / (total * fmax))
        gaps_all.append(gaps)
    return check("weak_convergence", worst, cfg.weak_tol, 0.0, "le", gaps=gaps_all,
                 limit_total=total, conditions={"gaps_non_increasing": monotone})


def jensen_check(report: SolveReport, n_bodies: int = 20,
                 cfg: CheckConfig = CheckConfig()) -> CheckReport:
    """The normalized solution has the largest rigidity among bodies with ``F_p = 1``."""
    from .geometry import random_polygon

    m, p = report.measure, report.p
    rng = np.random.default_rng(cfg.seed)
    ratios = []
    for _ in range(n_bodies):
        Q = random_polygon(rng, k=int(rng.integers(3, 9)))
        Q = Q.scaled(functional_Fp(m, Q, p) ** (-1.0 / p))
        ratios.append(report.T_value / _data(Q, cfg.mesh_h).T)
    return check("jensen_maximality", min(ratios), 1.0, cfg.jensen_tol, "ge", ratios=ratios)


def solution_bounds(report: SolveReport, cfg: CheckConfig = CheckConfig()) -> list[CheckReport]:
    """Gradient, volume and circumradius bounds on a solver output."""
    out = []
    cases = [("normalized", report.normalized_solution, report.data)]
    if report.original_solution is not None:
        cases.append(("original", report.original_solution, report.original_data))
    for tag, P, d in cases:
        area, diam, _ = polygon_metrics(P)
        out.append(check(f"gradient_bound_{tag}", d.diagnostics["max_gradient"] / diam, 1.0,
                         cfg.identity_tol))
        out.append(check(f"volume_bound_{tag}", d.T / (diam ** 2 * area), 1.0, cfg.identity_tol))
    R = polygon_metrics(report.normalized_solution)[2]
    bound = circumradius_bound(report.measure, report.p)
    out.append(check("circumradius_bound", R / bound, 1.0, 0.0, circumradius=R, radius_bound=bound))
    return out


def regular_sequence_fns():
    """Default test functions for weak-convergence probes."""
    return [
        lambda n: np.ones(len(n)),
        lambda n: n[:, 0],
        lambda n: np.abs(n[:, 0]),
    ]
