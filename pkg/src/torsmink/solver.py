"""Variational solver for the discrete L_p torsional Minkowski problem.

Given ``mu = sum c_i delta_{xi_i}`` and ``p > 1`` the normalized problem asks
for a polygon ``P`` with facet normals ``xi_i`` such that

    mu_i(P) / T(P) = c_i h_i(P)^(p-1)        for every i,

and the original problem drops the division by ``T``. Both are solved by
minimising the scale-invariant quotient

    G(y) = F_p(P(y)) / T(P(y))^(p/(n+2)),   F_p = (1/(n+2)) sum c_i h_i^p,

over support vectors ``y`` in logarithmic coordinates. Stationary points of
G satisfy the normalized equation up to scaling; the final polygon is scaled
so that ``F_p = 1``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    EmptyInterior,
    HemisphereViolation,
    InvalidInput,
    MaxItersExceeded,
    MissingFacet,
    PCritical,
)
from .geometry import (
    ConvexPolygon,
    DiscreteMeasure,
    clean_support_vector,
    hemisphere_check,
    match_facets,
    unit,
    wulff_shape,
)
from .torsion import RIGIDITY_DEGREE, TorsionData, torsion_data

N_PLUS_2 = RIGIDITY_DEGREE


@dataclass(frozen=True)
class SolveConfig:
    p: float
    mesh_h: float = 0.02
    tol_residual: float = 1e-2
    max_iters: int = 500
    step_init: float = 1.0
    backtrack_factor: float = 0.5
    seed: int = 0
    armijo: float = 1e-4
    max_backtracks: int = 30
    # extra descent steps after the tolerance is met (stops quietly on a stalled line search)
    polish_iters: int = 0

    def __post_init__(self):
        if not self.p > 1:
            raise InvalidInput(f"p must exceed 1, got {self.p}")
        if not self.tol_residual > 0:
            raise InvalidInput("tol_residual must be positive")
        if not self.mesh_h > 0:
            raise InvalidInput("mesh_h must be positive")
        if not 0 < self.backtrack_factor < 1:
            raise InvalidInput("backtrack_factor must lie in (0, 1)")


def functional_Fp(m: DiscreteMeasure, P: ConvexPolygon, p: float) -> float:
    h = clean_support_vector(P, m.normals)
    return _fp(m.weights, h, p)


def _fp(c: np.ndarray, h: np.ndarray, p: float) -> float:
    if np.any(h < -1e-12 * max(1.0, float(np.abs(h).max()))):
        raise InvalidInput("F_p needs a body containing the origin")
    return float(np.dot(c, np.maximum(h, 0.0) ** p)) / N_PLUS_2


@dataclass(frozen=True, eq=False)
class Evaluation:
    """One objective evaluation at a cleaned support vector.

    ``mu`` and ``h`` are indexed like the measure's atoms; normals without a
    facet on ``polygon`` get ``mu = 0``.
    """

    G: float
    grad: np.ndarray
    data: TorsionData
    polygon: ConvexPolygon
    y: np.ndarray
    mu: np.ndarray
    F: float
    T: float

    def residual(self, c: np.ndarray, p: float) -> float:
        """Normalized-equation residual of the ``F_p = 1`` dilate."""
        return _scaled_residual(self.mu, self.T, self.F, c, self.y, p)


def _scaled_residual(mu, T, F, c, h, p) -> float:
    # the dilate s P with F_p(s P) = 1 has mu/T scaled by 1/s and h^(p-1) by s^(p-1)
    target = c * h ** (p - 1)
    return float(np.max(np.abs(F * mu / (T * target) - 1.0)))


def measure_facet_data(m: DiscreteMeasure, P: ConvexPolygon, d: TorsionData) -> np.ndarray:
    """Torsion measure of ``P`` at each atom of ``m`` (zero when no facet)."""
    idx = match_facets(P, m.normals)
    mu = np.zeros(len(m))
    mu[idx >= 0] = d.facet_measures[idx[idx >= 0]]
    return mu


def objective_and_gradient(m: DiscreteMeasure, y, cfg: SolveConfig) -> Evaluation:
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise InvalidInput("support vector must be strictly positive")
    P = wulff_shape(m.normals, y)
    h = clean_support_vector(P, m.normals)
    d = torsion_data(P, cfg.mesh_h, tol=None)
    mu = measure_facet_data(m, P, d)
    p, c, T = cfg.p, m.weights, d.T
    F = _fp(c, h, p)
    q = p / N_PLUS_2
    G = F / T ** q
    grad = (p / N_PLUS_2) * T ** -q * (c * h ** (p - 1) - F * mu / T)
    return Evaluation(G, grad, d, P, h, mu, F, T)


@dataclass(frozen=True)
class IterationRecord:
    objective: float
    residual: float
    step: float


class Target(enum.Enum):
    T_EQ_1 = "T_EQ_1"
    FP_EQ_1 = "FP_EQ_1"
    ORIGINAL = "ORIGINAL"
    NORMALIZED = "NORMALIZED"


def rescale_factor(p: float, target: Target | str, *, T: float | None = None,
                   F: float | None = None) -> float:
    """Dilation factor taking a solution of one normalisation to another.

    T_EQ_1:     T^(-1/(n+2))      maximiser of T under F_p <= 1 -> minimiser of F_p under T >= 1
    FP_EQ_1:    F_p^(-1/p)        the reverse direction
    ORIGINAL:   T^(1/(p-n-2))     normalized solution -> original solution
    NORMALIZED: T^(-1/p)          original solution -> normalized solution
    """
    target = Target(target)
    if target is Target.FP_EQ_1:
        return F ** (-1.0 / p)
    if target is Target.T_EQ_1:
        return T ** (-1.0 / N_PLUS_2)
    if target is Target.ORIGINAL:
        if p == N_PLUS_2:
            raise PCritical(f"p equals n+2 = {N_PLUS_2}; the original problem has no scaling map")
        return T ** (1.0 / (p - N_PLUS_2))
    return T ** (-1.0 / p)


def rescale_solution(P: ConvexPolygon, p: float, target: Target | str,
                     m: DiscreteMeasure | None = None,
                     data: TorsionData | None = None) -> ConvexPolygon:
    """Scaled copy of ``P`` per ``target``; ``data`` must be the torsion data of ``P``."""
    target = Target(target)
    if target is Target.FP_EQ_1:
        if m is None:
            raise InvalidInput("FP_EQ_1 needs the measure")
        s = rescale_factor(p, target, F=functional_Fp(m, P, p))
    else:
        if data is None:
            raise InvalidInput(f"{target.value} needs the torsion data of P")
        s = rescale_factor(p, target, T=data.T)
    return P.scaled(s)


def optimality_residual(m: DiscreteMeasure, P: ConvexPolygon, d: TorsionData, p: float) -> float:
    """``max_i |mu_i/T - c_i h_i^(p-1)| / (c_i h_i^(p-1))`` on ``P`` as given."""
    idx = match_facets(P, m.normals)
    if np.any(idx < 0):
        missing = np.flatnonzero(idx < 0).tolist()
        raise MissingFacet(f"measure normals {missing} have no facet on the polygon")
    h = clean_support_vector(P, m.normals)
    mu = d.facet_measures[idx]
    target = m.weights * h ** (p - 1)
    return float(np.max(np.abs(mu / d.T - target) / target))


def original_residual(m: DiscreteMeasure, P: ConvexPolygon, d: TorsionData, p: float) -> float:
    """``max_i |mu_i - c_i h_i^(p-1)| / (c_i h_i^(p-1))``."""
    idx = match_facets(P, m.normals)
    if np.any(idx < 0):
        raise MissingFacet("measure normal without a facet")
    h = clean_support_vector(P, m.normals)
    target = m.weights * h ** (p - 1)
    return float(np.max(np.abs(d.facet_measures[idx] - target) / target))


def circumradius_bound(m: DiscreteMeasure, p: float, grid: int = 720) -> float:
    """``((n+2)/C)^(1/p)`` with ``C = min_u sum c_i (u . xi_i)_+^p``.

    The minimum is taken on a ``grid``-point direction grid and then refined
    locally, which can only lower C (loosen the bound).
    """
    from scipy.optimize import minimize_scalar

    def g(t):
        return float(np.dot(m.weights, np.maximum(m.normals @ unit(t), 0.0) ** p))

    ts = np.linspace(0.0, 2 * math.pi, grid, endpoint=False)
    vals = np.array([g(t) for t in ts])
    k = int(np.argmin(vals))
    step = ts[1] - ts[0]
    r = minimize_scalar(g, bounds=(ts[k] - step, ts[k] + step), method="bounded",
                        options={"xatol": 1e-12})
    C = min(vals[k], float(r.fun))
    return (N_PLUS_2 / C) ** (1.0 / p)


@dataclass(frozen=True, eq=False)
class SolveReport:
    measure: DiscreteMeasure
    p: float
    normalized_solution: ConvexPolygon
    original_solution: Optional[ConvexPolygon]
    residual: float
    Fp_value: float
    T_value: float
    iterations: list
    lagrange_b: float
    data: TorsionData
    support_vector: np.ndarray
    converged: bool = True
    original_residual: Optional[float] = None
    original_data: Optional[TorsionData] = None
    config: Optional[SolveConfig] = None
    extra: dict = field(default_factory=dict)

    def facet_table(self, original: bool = False) -> list[dict]:
        P = self.original_solution if original else self.normalized_solution
        d = self.original_data if original else self.data
        h = clean_support_vector(P, self.measure.normals)
        mu = measure_facet_data(self.measure, P, d)
        rows = []
        for i, (n, c) in enumerate(zip(self.measure.normals, self.measure.weights)):
            lhs = mu[i] if original else mu[i] / d.T
            rhs = c * h[i] ** (self.p - 1)
            rows.append({
                "normal": [float(n[0]), float(n[1])],
                "weight": float(c),
                "h": float(h[i]),
                "mu": float(mu[i]),
                "lhs": float(lhs),
                "rhs": float(rhs),
                "relative_error": float(abs(lhs - rhs) / rhs),
            })
        return rows

    def to_json(self) -> dict:
        out = {
            "p": self.p,
            "converged": self.converged,
            "residual": self.residual,
            "Fp_value": self.Fp_value,
            "T_value": self.T_value,
            "lagrange_b": self.lagrange_b,
            "normalized_solution": {
                "vertices": self.normalized_solution.vertices.tolist(),
                "facets": self.facet_table(),
            },
            "original_solution": None,
            "iterations": [
                {"objective": r.objective, "residual": r.residual, "step": r.step}
                for r in self.iterations
            ],
        }
        if self.original_solution is not None:
            out["original_solution"] = {
                "vertices": self.original_solution.vertices.tolist(),
                "residual": self.original_residual,
                "T": self.original_data.T,
                "facets": self.facet_table(original=True),
            }
        if self.config is not None:
            cfg = self.config
            out["config"] = {
                "p": cfg.p, "mesh_h": cfg.mesh_h, "tol_residual": cfg.tol_residual,
                "max_iters": cfg.max_iters, "step_init": cfg.step_init,
                "backtrack_factor": cfg.backtrack_factor, "seed": cfg.seed,
            }
        return out


def _finish(m, cfg, ev, history, converged, with_original) -> SolveReport:
    p = cfg.p
    s = ev.F ** (-1.0 / p)
    P = ev.polygon.scaled(s)
    d = ev.data.scaled(s)
    Fp = functional_Fp(m, P, p)
    res = ev.residual(m.weights, p)
    P4 = d4 = r4 = None
    if with_original and p != N_PLUS_2:
        s4 = rescale_factor(p, Target.ORIGINAL, T=d.T)
        P4, d4 = P.scaled(s4), d.scaled(s4)
        r4 = original_residual(m, P4, d4, p) if np.all(ev.mu > 0) else 1.0
    return SolveReport(
        measure=m, p=p, normalized_solution=P, original_solution=P4,
        residual=res, Fp_value=Fp, T_value=d.T, iterations=history,
        lagrange_b=N_PLUS_2 * d.T / p, data=d, support_vector=ev.y * s,
        converged=converged, original_residual=r4, original_data=d4, config=cfg,
    )


def solve_normalized(m: DiscreteMeasure, cfg: SolveConfig, y0=None,
                     with_original: bool = True) -> SolveReport:
    """Descend G in ``z = log y`` with Barzilai-Borwein trial steps and Armijo backtracking.

    The line search runs on ``log G``, a monotone transform, so the recorded
    objective sequence is non-increasing.
    """
    ok, gap = hemisphere_check(m)
    if not ok:
        raise HemisphereViolation(f"measure concentrated on a closed half-circle (gap {gap:.6g})")
    c, p = m.weights, cfg.p
    y = np.ones(len(m)) if y0 is None else np.asarray(y0, dtype=float)
    ev = objective_and_gradient(m, y, cfg)
    history: list[IterationRecord] = []
    step = 0.0
    z_prev = g_prev = None

    best = None  # best iterate below tolerance, by residual
    polished = 0
    for it in range(cfg.max_iters + 1):
        res = ev.residual(c, p)
        history.append(IterationRecord(ev.G, res, step))
        if res < cfg.tol_residual:
            if best is None or res <= best[0]:
                best = (res, ev)
            if polished >= cfg.polish_iters:
                return _finish(m, cfg, _polish_pick(ev, best, c, cfg), history, True, with_original)
            polished += 1
        if it == cfg.max_iters:
            break
        z = np.log(ev.y)
        g = ev.y * ev.grad / ev.G  # gradient of log G in z
        if z_prev is not None:
            s, dg = z - z_prev, g - g_prev
            sy = float(s @ dg)
            alpha = float(s @ s) / sy if sy > 0 else cfg.step_init
            alpha = min(max(alpha, 1e-6), 1e3)
        else:
            alpha = cfg.step_init / max(1.0, float(np.abs(g).max()))
        direction = -g
        slope = float(g @ direction)
        phi = math.log(ev.G)
        accepted = None
        for _ in range(cfg.max_backtracks):
            try:
                trial = objective_and_gradient(m, np.exp(z + alpha * direction), cfg)
            except EmptyInterior:
                alpha *= cfg.backtrack_factor
                continue
            if math.log(trial.G) <= phi + cfg.armijo * alpha * slope:
                accepted = trial
                break
            alpha *= cfg.backtrack_factor
        if accepted is None:
            if best is not None:
                return _finish(m, cfg, _polish_pick(ev, best, c, cfg), history, True, with_original)
            # no decrease found; discretisation noise dominates the gradient
            report = _finish(m, cfg, ev, history, False, with_original)
            raise MaxItersExceeded(
                f"line search stalled at residual {res:.3g} (tol {cfg.tol_residual})",
                history, report)
        z_prev, g_prev = z, g
        step = alpha
        ev = accepted

    if best is not None:
        return _finish(m, cfg, _polish_pick(ev, best, c, cfg), history, True, with_original)
    report = _finish(m, cfg, ev, history, False, with_original)
    raise MaxItersExceeded(
        f"{cfg.max_iters} iterations without reaching residual {cfg.tol_residual}",
        history, report)


def _polish_pick(ev, best, c, cfg):
    """Latest iterate if it is still within tolerance, else the best one seen."""
    if ev.residual(c, cfg.p) < cfg.tol_residual:
        return ev
    return best[1]


def solve_original(m: DiscreteMeasure, cfg: SolveConfig, y0=None) -> SolveReport:
    if cfg.p == N_PLUS_2:
        raise PCritical(f"p equals n+2 = {N_PLUS_2}; the original problem is excluded")
    report = solve_normalized(m, cfg, y0=y0, with_original=True)
    if report.original_residual is None or report.original_residual > cfg.tol_residual:
        raise MaxItersExceeded(
            f"original-problem residual {report.original_residual} above tolerance",
            report.iterations, report)
    return report
