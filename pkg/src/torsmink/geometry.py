"""Exact planar convex geometry.

Discrete measures on the unit circle, Wulff shapes (halfplane intersections
with prescribed normals), support functions, exact Hausdorff distance and
Minkowski combinations of convex polygons.

The ambient dimension is kept symbolic as ``DIM`` so that the homogeneity
degrees used elsewhere (``DIM + 2`` for torsional rigidity, ``DIM + 1`` for
the torsion measure) read the same as for general n; only ``DIM == 2`` is
implemented.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    EmptyInterior,
    HemisphereViolation,
    InvalidInput,
    NonPositiveWeight,
    TooFewNormals,
    Unbounded,
)

DIM = 2
MERGE_TOL = 1e-9  # angular distance under which two normals are the same atom
UNIT_TOL = 1e-12
TWO_PI = 2.0 * math.pi


def unit(angle: float) -> np.ndarray:
    return np.array([math.cos(angle), math.sin(angle)])


def angles_of(vectors) -> np.ndarray:
    """Polar angles in [0, 2*pi)."""
    v = np.atleast_2d(np.asarray(vectors, dtype=float))
    return np.mod(np.arctan2(v[:, 1], v[:, 0]), TWO_PI)


def _as_unit_vectors(normals) -> np.ndarray:
    arr = np.asarray(normals, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != DIM:
        raise InvalidInput(f"normals must be a list of {DIM}-vectors, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput("normals must be finite")
    norms = np.linalg.norm(arr, axis=1)
    if np.any(norms == 0.0):
        raise InvalidInput("zero vector given as a normal")
    out = arr / norms[:, None]
    # keep exact inputs exact (e.g. (1, 0) stays (1, 0))
    exact = np.abs(norms - 1.0) <= UNIT_TOL
    out[exact] = arr[exact]
    return out


def max_angular_gap(normals) -> float:
    """Largest gap between circularly consecutive directions."""
    ang = np.sort(angles_of(normals))
    if ang.size == 0:
        return TWO_PI
    gaps = np.diff(np.concatenate([ang, [ang[0] + TWO_PI]]))
    return float(gaps.max())


# --------------------------------------------------------------------------
# measures


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finite sum of weighted point masses on the unit circle.

    Atoms are stored sorted by polar angle; ``normals[i]`` carries mass
    ``weights[i]``.
    """

    normals: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.normals.setflags(write=False)
        self.weights.setflags(write=False)

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def angles(self) -> np.ndarray:
        return angles_of(self.normals)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def with_weights(self, weights) -> "DiscreteMeasure":
        return build_measure(self.normals, weights)

    def integrate(self, f) -> float:
        """Sum of ``f(xi_i) * c_i``; ``f`` maps an (m, 2) array to (m,)."""
        return float(np.dot(np.asarray(f(self.normals), dtype=float), self.weights))


def build_measure(normals, weights) -> DiscreteMeasure:
    normals = _as_unit_vectors(normals)
    weights = np.asarray(weights, dtype=float).ravel()
    if len(normals) != len(weights):
        raise InvalidInput(
            f"{len(normals)} normals but {len(weights)} weights; lists must align")
    if len(weights) < DIM + 1:
        raise TooFewNormals(f"need at least {DIM + 1} normals, got {len(weights)}")
    if not np.all(np.isfinite(weights)):
        raise InvalidInput("weights must be finite")
    if np.any(weights <= 0.0):
        bad = int(np.argmin(weights))
        raise NonPositiveWeight(f"weight[{bad}] = {weights[bad]!r} is not positive")

    ang = angles_of(normals)
    order = np.argsort(ang, kind="stable")
    ang, normals, weights = ang[order], normals[order], weights[order]

    groups: list[list[int]] = []
    for i in range(len(ang)):
        if groups and ang[i] - ang[groups[-1][0]] <= MERGE_TOL:
            groups[-1].append(i)
        else:
            groups.append([i])
    # wrap-around: an atom just below 2*pi duplicates one just above 0
    if len(groups) > 1 and ang[groups[0][0]] + TWO_PI - ang[groups[-1][-1]] <= MERGE_TOL:
        groups[0] = groups.pop() + groups[0]

    merged_n = np.array([normals[g[0]] for g in groups])
    merged_w = np.array([weights[g].sum() for g in groups])
    order = np.argsort(angles_of(merged_n), kind="stable")
    merged_n, merged_w = merged_n[order], merged_w[order]

    if len(merged_w) < DIM + 1:
        raise TooFewNormals(
            f"only {len(merged_w)} distinct normals after merging duplicates")
    m = DiscreteMeasure(merged_n, merged_w)
    ok, gap = hemisphere_check(m)
    if not ok:
        raise HemisphereViolation(
            f"normals lie in a closed half-circle (max angular gap {gap:.6g} >= pi)")
    return m


def measure_from_angles(angles: Sequence[float], weights) -> DiscreteMeasure:
    return build_measure([unit(a) for a in angles], weights)


def regular_measure(m: int, weight: float = 1.0, phase: float = 0.0) -> DiscreteMeasure:
    return measure_from_angles(
        [phase + TWO_PI * j / m for j in range(m)], np.full(m, float(weight)))


def hemisphere_check(m: DiscreteMeasure | np.ndarray) -> tuple[bool, float]:
    """``(True, gap)`` iff the atoms are not contained in a closed half-circle."""
    normals = m.normals if isinstance(m, DiscreteMeasure) else m
    gap = max_angular_gap(normals)
    return gap < math.pi - UNIT_TOL, gap


# --------------------------------------------------------------------------
# polygons


@dataclass(frozen=True)
class Facet:
    normal: np.ndarray
    support: float
    length: float


@dataclass(frozen=True, eq=False)
class ConvexPolygon:
    """Convex polygon with CCW vertices.

    ``normals[k]`` is the outward unit normal of the edge from ``vertices[k]``
    to ``vertices[k + 1]``. Use :meth:`from_vertices` to build one from a
    point list; the raw constructor validates but does not repair.
    """

    vertices: np.ndarray
    normals: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        n = np.asarray(self.normals, dtype=float)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "normals", n)
        v.setflags(write=False)
        n.setflags(write=False)
        if v.ndim != 2 or v.shape[1] != DIM or len(v) < DIM + 1:
            raise InvalidInput(f"polygon needs at least 3 vertices, got shape {v.shape}")
        if n.shape != v.shape:
            raise InvalidInput("one normal per edge required")
        if not np.all(np.isfinite(v)):
            raise InvalidInput("polygon vertices must be finite")
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        if np.any(cross <= 0.0):
            raise InvalidInput("vertices are not a strictly convex CCW traversal")
        scale = self.diameter
        h0 = np.einsum("ij,ij->i", v, n)
        h1 = np.einsum("ij,ij->i", np.roll(v, -1, axis=0), n)
        if np.any(np.abs(h0 - h1) > 1e-10 * scale):
            raise InvalidInput("facet endpoints do not lie on a common support line")
        if self.area <= 0.0:
            raise EmptyInterior("polygon has zero area")

    @classmethod
    def from_vertices(cls, points, tol: float = 1e-12) -> "ConvexPolygon":
        """Build from a vertex loop (either orientation).

        Repeated and collinear vertices are dropped; a non-convex loop raises.
        """
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != DIM:
            raise InvalidInput(f"vertices must be a list of points, got shape {pts.shape}")
        if _signed_area(pts) < 0:
            pts = pts[::-1]
        scale = max(float(np.ptp(pts, axis=0).max()), np.finfo(float).tiny)
        changed = True
        while changed and len(pts) >= 3:
            changed = False
            k = len(pts)
            for i in range(k):
                a, b, c = pts[i - 1], pts[i], pts[(i + 1) % k]
                if np.linalg.norm(b - a) <= tol * scale:
                    pts = np.delete(pts, i, axis=0)
                    changed = True
                    break
                cr = _cross(b - a, c - b)
                if abs(cr) <= tol * scale * scale:
                    pts = np.delete(pts, i, axis=0)
                    changed = True
                    break
        if len(pts) < 3:
            raise EmptyInterior("vertex loop collapses to fewer than 3 points")
        return cls(pts, _edge_normals(pts))

    # derived quantities ----------------------------------------------------

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def supports(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.vertices, self.normals)

    @property
    def lengths(self) -> np.ndarray:
        return np.linalg.norm(np.roll(self.vertices, -1, axis=0) - self.vertices, axis=1)

    @property
    def facets(self) -> list[Facet]:
        return [Facet(n, float(h), float(l))
                for n, h, l in zip(self.normals, self.supports, self.lengths)]

    @property
    def area(self) -> float:
        return _signed_area(self.vertices)

    @property
    def diameter(self) -> float:
        v = self.vertices
        d = v[:, None, :] - v[None, :, :]
        return float(np.sqrt((d ** 2).sum(-1)).max())

    @property
    def centroid(self) -> np.ndarray:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        cr = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        return ((v + w) * cr[:, None]).sum(0) / (3.0 * cr.sum())

    def translated(self, t) -> "ConvexPolygon":
        return ConvexPolygon(self.vertices + np.asarray(t, dtype=float), self.normals)

    def scaled(self, m: float) -> "ConvexPolygon":
        if m <= 0:
            raise InvalidInput(f"scale factor must be positive, got {m}")
        return ConvexPolygon(self.vertices * float(m), self.normals)

    def contains(self, x, tol: float = 0.0) -> bool:
        return bool(np.all(self.normals @ np.asarray(x, dtype=float) <= self.supports + tol))


def _cross(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _signed_area(v: np.ndarray) -> float:
    w = np.roll(v, -1, axis=0)
    return 0.5 * float(np.sum(v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]))


def _edge_normals(v: np.ndarray) -> np.ndarray:
    e = np.roll(v, -1, axis=0) - v
    n = np.column_stack([e[:, 1], -e[:, 0]])
    return n / np.linalg.norm(n, axis=1)[:, None]


def convex_hull(points) -> ConvexPolygon:
    """Monotone-chain hull of a point cloud."""
    pts = sorted(map(tuple, np.asarray(points, dtype=float)))
    if len(pts) < 3:
        raise EmptyInterior("need at least 3 points")

    def chain(seq):
        out: list = []
        for p in seq:
            while len(out) >= 2 and _cross(np.subtract(out[-1], out[-2]),
                                           np.subtract(p, out[-1])) <= 0:
                out.pop()
            out.append(p)
        return out

    lower, upper = chain(pts), chain(reversed(pts))
    return ConvexPolygon.from_vertices(np.array(lower[:-1] + upper[:-1]))


def regular_polygon(m: int, inradius: float = 1.0, phase: float = 0.0) -> ConvexPolygon:
    """Regular m-gon centred at the origin with facet normals at phase + 2*pi*j/m."""
    normals = np.array([unit(phase + TWO_PI * j / m) for j in range(m)])
    return wulff_shape(normals, np.full(m, float(inradius)))


def box(xmin: float, xmax: float, ymin: float, ymax: float) -> ConvexPolygon:
    return ConvexPolygon.from_vertices([[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]])


def random_polygon(rng: np.random.Generator, k: int = 6, radius: float = 1.0,
                   jitter: float = 0.35) -> ConvexPolygon:
    """Hull of ``k`` jittered points around a circle; always contains the origin."""
    while True:
        ang = np.sort(rng.uniform(0.0, TWO_PI, size=k))
        r = radius * (1.0 + jitter * rng.uniform(-1.0, 1.0, size=k))
        pts = np.column_stack([r * np.cos(ang), r * np.sin(ang)])
        try:
            P = convex_hull(pts)
        except EmptyInterior:
            continue
        if len(P) >= 3 and np.all(P.supports > 0.05 * radius) \
                and P.area > 0.3 * radius * radius:
            return P


# --------------------------------------------------------------------------
# Wulff shapes


def wulff_shape(normals, y) -> ConvexPolygon:
    """Intersection of the halfplanes ``x . normals[i] <= y[i]``.

    Redundant halfplanes contribute no facet. Facet normals of the result are
    exact copies of the corresponding input normals, so
    :func:`match_facets` recovers the index map without angular slack.
    """
    normals = _as_unit_vectors(normals)
    y = np.asarray(y, dtype=float).ravel()
    if len(y) != len(normals):
        raise InvalidInput(f"{len(normals)} normals but {len(y)} support numbers")
    if not np.all(np.isfinite(y)):
        raise InvalidInput("support numbers must be finite")
    ok, gap = hemisphere_check(normals)
    if not ok:
        raise Unbounded(f"normals lie in a closed half-circle (gap {gap:.6g})")

    # every point x of the intersection has |x| cos(gap/2) <= max(y)
    big = 2.0 * (float(np.abs(y).max()) + 1.0) / math.cos(0.5 * gap) + 1.0
    verts = [np.array([-big, -big]), np.array([big, -big]),
             np.array([big, big]), np.array([-big, big])]
    labels = [-1, -1, -1, -1]

    for j in np.argsort(angles_of(normals), kind="stable"):
        verts, labels = _clip(verts, labels, normals[j], y[j], int(j), big)
        if len(verts) < 3:
            raise EmptyInterior("halfplane intersection is empty")

    verts, labels = _drop_short_edges(verts, labels)
    if len(verts) < 3:
        raise EmptyInterior("halfplane intersection has no interior")
    if -1 in labels:
        raise Unbounded("halfplane intersection is unbounded")
    v = np.array(verts)
    scale = float(np.ptp(v, axis=0).max())
    if _signed_area(v) <= 1e-12 * max(scale, float(np.abs(y).max())) ** 2 or scale == 0.0:
        raise EmptyInterior("halfplane intersection has zero area")
    n = normals[np.array(labels)]
    # snap vertices exactly onto both adjacent support lines
    k = len(v)
    for i in range(k):
        a, b = labels[i - 1], labels[i]
        A = np.array([normals[a], normals[b]])
        v[i] = np.linalg.solve(A, np.array([y[a], y[b]]))
    return ConvexPolygon(v, n)


def _clip(verts, labels, n, c, label, scale):
    eps = 1e-14 * scale
    out_v, out_l = [], []
    k = len(verts)
    s = [float(np.dot(p, n) - c) for p in verts]
    for i in range(k):
        P, Q = verts[i], verts[(i + 1) % k]
        sp, sq = s[i], s[(i + 1) % k]
        p_in, q_in = sp <= eps, sq <= eps
        if p_in:
            out_v.append(P)
            out_l.append(labels[i])
            if not q_in:
                t = sp / (sp - sq)
                out_v.append(P + t * (Q - P))
                out_l.append(label)
        elif q_in:
            t = sp / (sp - sq)
            out_v.append(P + t * (Q - P))
            out_l.append(labels[i])
    return out_v, out_l


def _drop_short_edges(verts, labels):
    if len(verts) < 3:
        return verts, labels
    v = np.array(verts)
    tol = 1e-10 * max(float(np.ptp(v, axis=0).max()), np.finfo(float).tiny)
    verts, labels = list(verts), list(labels)
    changed = True
    while changed and len(verts) >= 3:
        changed = False
        k = len(verts)
        for i in range(k):
            if np.linalg.norm(verts[(i + 1) % k] - verts[i]) <= tol:
                del verts[i]
                del labels[i]
                changed = True
                break
    return verts, labels


def match_facets(P: ConvexPolygon, normals, tol: float = 1e-9) -> np.ndarray:
    """For each normal, the index of the facet of ``P`` with that normal, or -1."""
    normals = np.atleast_2d(np.asarray(normals, dtype=float))
    dist = np.linalg.norm(normals[:, None, :] - P.normals[None, :, :], axis=2)
    idx = np.argmin(dist, axis=1)
    hit = dist[np.arange(len(normals)), idx] <= tol
    return np.where(hit, idx, -1)


# --------------------------------------------------------------------------
# support functions and metrics


def support_function(P: ConvexPolygon, u) -> float | np.ndarray:
    """``max_v v . u`` over the vertices; vectorised over rows of ``u``."""
    u = np.asarray(u, dtype=float)
    vals = P.vertices @ u.T
    return vals.max(axis=0) if u.ndim == 2 else float(vals.max())


def clean_support_vector(P: ConvexPolygon, normals) -> np.ndarray:
    """Actual support numbers of ``P`` in the given directions."""
    normals = np.atleast_2d(np.asarray(normals, dtype=float))
    return np.asarray(support_function(P, normals), dtype=float)


def polygon_metrics(P: ConvexPolygon) -> tuple[float, float, float]:
    """``(area, diameter, circumradius about the origin)``."""
    return P.area, P.diameter, float(np.linalg.norm(P.vertices, axis=1).max())


def _arcs(*polys: ConvexPolygon, tol: float = 1e-15) -> list[tuple[float, float]]:
    """Arcs of S^1 between consecutive facet-normal angles of all polygons."""
    ang = np.sort(np.concatenate([angles_of(P.normals) for P in polys]))
    keep = np.concatenate([[True], np.diff(ang) > tol])
    ang = ang[keep]
    if len(ang) > 1 and ang[0] + TWO_PI - ang[-1] <= tol:
        ang = ang[:-1]
    nxt = np.concatenate([ang[1:], [ang[0] + TWO_PI]])
    return list(zip(ang, nxt))


def _vertex_for(P: ConvexPolygon, theta: float) -> np.ndarray:
    return P.vertices[int(np.argmax(P.vertices @ unit(theta)))]


@dataclass(frozen=True)
class HausdorffResult:
    distance: float
    witness_direction: np.ndarray


def hausdorff_distance(A: ConvexPolygon, B: ConvexPolygon) -> HausdorffResult:
    """Exact ``max |h_A - h_B|`` over the circle.

    Between consecutive facet normals of A and B both support functions are
    linear in ``(cos t, sin t)``, so the difference is ``a cos t + b sin t``
    and its extremes on each arc are found in closed form.
    """
    best, best_t = -1.0, 0.0
    for t0, t1 in _arcs(A, B):
        mid = 0.5 * (t0 + t1)
        d = _vertex_for(A, mid) - _vertex_for(B, mid)
        cands = [t0, t1]
        peak = math.atan2(d[1], d[0])
        for c in (peak, peak + math.pi):
            c = t0 + (c - t0) % TWO_PI
            if c <= t1:
                cands.append(c)
        for c in cands:
            val = abs(float(d @ unit(c)))
            if val > best:
                best, best_t = val, c
    w = unit(best_t)
    # evaluate at the witness with true support functions to avoid arc bookkeeping error
    dist = abs(support_function(A, w) - support_function(B, w))
    return HausdorffResult(float(max(dist, best)), w)


def minkowski_combine(a: float, A: ConvexPolygon, b: float, B: ConvexPolygon) -> ConvexPolygon:
    """The polygon ``a A + b B`` (support function ``a h_A + b h_B``)."""
    if a < 0 or b < 0 or a + b <= 0:
        raise InvalidInput(f"need a, b >= 0 with a + b > 0, got a={a}, b={b}")
    if b == 0:
        return A if a == 1 else A.scaled(a)
    if a == 0:
        return B if b == 1 else B.scaled(b)
    # rotating sweep over the merged normal fan: vertex i is the support point
    # of arc i, and edge i (to vertex i+1) carries the normal where arc i ends
    arcs = _arcs(A, B, tol=1e-12)
    pool = np.concatenate([A.normals, B.normals])
    pool_ang = angles_of(pool)
    verts, normals = [], []
    for t0, t1 in arcs:
        mid = 0.5 * (t0 + t1)
        verts.append(a * _vertex_for(A, mid) + b * _vertex_for(B, mid))
        diff = np.abs((pool_ang - t1 + math.pi) % TWO_PI - math.pi)
        normals.append(pool[int(np.argmin(diff))])
    # edges from a negligible summand collapse; vertex i and normal i go together
    scale = max(float(np.ptp(np.array(verts), axis=0).max()), np.finfo(float).tiny)
    i = 0
    while i < len(verts) and len(verts) > 3:
        j = (i + 1) % len(verts)
        if np.linalg.norm(verts[j] - verts[i]) <= 1e-13 * scale:
            del verts[i]
            del normals[i]
        else:
            i += 1
    return ConvexPolygon(np.array(verts), np.array(normals))
