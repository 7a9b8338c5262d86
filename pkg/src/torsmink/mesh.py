"""Quality triangulation of convex polygons.

Boundary facets are split uniformly so no boundary edge exceeds the target
size. The interior is seeded with one row of points completing
near-equilateral triangles on the boundary segments plus a hexagonal
lattice anchored at the centroid, then Delaunay-refined (circumcentre
insertion, boundary midpoint splitting for encroached segments) until
every triangle has a minimum angle of at least ``MIN_ANGLE_DEG``.
Corners sharper than that bound keep their own angle.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .errors import DegenerateGeometry, InvalidInput
from .geometry import ConvexPolygon

MIN_ANGLE_DEG = 20.0
MAX_REFINE_ROUNDS = 60


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangulation of a convex polygon.

    ``boundary_edges[k]`` is a node pair lying on facet ``boundary_facets[k]``
    of the source polygon (in the polygon's facet order).
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_facets: np.ndarray
    target_h: float

    @property
    def boundary_nodes(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    @property
    def areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def min_angles(self) -> np.ndarray:
        """Smallest interior angle of each triangle, in degrees."""
        return np.degrees(_angles(self.nodes[self.triangles]).min(axis=1))

    def to_json(self) -> dict:
        return {
            "nodes": self.nodes.tolist(),
            "triangles": self.triangles.tolist(),
            "boundary_edges": [
                {"nodes": [int(a), int(b)], "facet": int(f)}
                for (a, b), f in zip(self.boundary_edges, self.boundary_facets)
            ],
            "target_h": self.target_h,
        }

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)


def _angles(p: np.ndarray) -> np.ndarray:
    a = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
    b = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
    c = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)

    def ang(opp, s1, s2):
        return np.arccos(np.clip((s1 ** 2 + s2 ** 2 - opp ** 2) / (2 * s1 * s2), -1.0, 1.0))

    return np.column_stack([ang(a, b, c), ang(b, c, a), ang(c, a, b)])


def _circumcentres(p: np.ndarray) -> np.ndarray:
    ax, ay = p[:, 0, 0], p[:, 0, 1]
    bx, by = p[:, 1, 0] - ax, p[:, 1, 1] - ay
    cx, cy = p[:, 2, 0] - ax, p[:, 2, 1] - ay
    d = 2.0 * (bx * cy - by * cx)
    b2, c2 = bx * bx + by * by, cx * cx + cy * cy
    ux = (cy * b2 - by * c2) / d
    uy = (bx * c2 - cx * b2) / d
    return np.column_stack([ux + ax, uy + ay])


class _Boundary:
    """Ordered boundary chain: per facet, the list of points along it."""

    def __init__(self, P: ConvexPolygon, h: float):
        self.P = P
        self.chains: list[list[float]] = []  # parameters in [0, 1) along each facet
        for length in P.lengths:
            n = max(1, math.ceil(length / h - 1e-9))
            self.chains.append([j / n for j in range(n)])

    def nodes(self):
        """Boundary points, their facet ids and the boundary edges (index pairs)."""
        v = self.P.vertices
        pts, fa, fb = [], [], []
        k = len(v)
        for f, ts in enumerate(self.chains):
            a, b = v[f], v[(f + 1) % k]
            for j, t in enumerate(ts):
                pts.append(a + t * (b - a) if t else a.copy())
                fa.append(f)
                fb.append((f - 1) % k if j == 0 else -1)
        nb = len(pts)
        edges = np.column_stack([np.arange(nb), (np.arange(nb) + 1) % nb])
        facets = np.array(fa)
        return np.array(pts), np.array(fa), np.array(fb), edges, facets

    def split(self, facet: int, seg: int) -> None:
        ts = self.chains[facet]
        t0 = ts[seg]
        t1 = ts[seg + 1] if seg + 1 < len(ts) else 1.0
        ts.insert(seg + 1, 0.5 * (t0 + t1))


def triangulate(P: ConvexPolygon, target_h: float) -> TriMesh:
    if not target_h > 0:
        raise InvalidInput(f"target_h must be positive, got {target_h}")
    area, diam = P.area, P.diameter
    if area < 1e-12:
        raise DegenerateGeometry(f"polygon area {area:.3g} is below 1e-12")
    target_h = min(float(target_h), diam)

    boundary = _Boundary(P, target_h)
    interior = _seeds(P, target_h)
    min_angle = math.radians(MIN_ANGLE_DEG)
    corner_angles = _corner_angles(P)

    for _ in range(MAX_REFINE_ROUNDS):
        bpts, fa, fb, bedges, bfacets = boundary.nodes()
        nodes = np.vstack([bpts, interior]) if len(interior) else bpts
        tris = _delaunay(nodes)
        p = nodes[tris]
        ang = _angles(p)
        worst = ang.min(axis=1)
        bad = worst < min_angle - 1e-9
        if bad.any():
            # a corner sharper than the bound cannot be improved
            nb = len(bpts)
            at = tris[np.arange(len(tris)), ang.argmin(axis=1)]
            is_corner = (at < nb) & (fb[np.minimum(at, nb - 1)] >= 0)
            sharp = np.zeros(len(tris), dtype=bool)
            if is_corner.any():
                corner_facet = fa[at[is_corner]]
                sharp[is_corner] = corner_angles[corner_facet] < min_angle + 1e-9
            bad &= ~sharp
        if not bad.any():
            break
        interior = _refine(P, boundary, bpts, bfacets, bedges, interior, p[bad], target_h)
    else:
        raise DegenerateGeometry("mesh refinement did not reach the angle bound")

    # boundary edges: one triangle per edge, facet from the boundary chain
    nb = len(bpts)
    edge_facet = {}
    for (a, b), f in zip(bedges, bfacets):
        edge_facet[(a, b)] = f
        edge_facet[(b, a)] = f
    found = []
    for t in tris:
        for i in range(3):
            a, b = t[i], t[(i + 1) % 3]
            if a < nb and b < nb and (a, b) in edge_facet:
                found.append((a, b, edge_facet[(a, b)]))
    if len(found) != nb:
        raise DegenerateGeometry(
            f"triangulation covers {len(found)} of {nb} boundary segments")
    found.sort(key=lambda r: (r[2], r[0]))
    bedges_out = np.array([[a, b] for a, b, _ in found], dtype=int)
    bfacets_out = np.array([f for _, _, f in found], dtype=int)
    return TriMesh(nodes, tris, bedges_out, bfacets_out, target_h)


def _corner_angles(P: ConvexPolygon) -> np.ndarray:
    """Interior angle at vertex k (start of facet k)."""
    n = P.normals
    prev = np.roll(n, 1, axis=0)
    turn = np.arccos(np.clip(np.einsum("ij,ij->i", n, prev), -1.0, 1.0))
    return math.pi - turn


def _seeds(P: ConvexPolygon, h: float) -> np.ndarray:
    """Interior seeds: one row of points forming near-equilateral triangles on each
    boundary segment, then the centroid-anchored lattice away from the boundary."""
    v, k = P.vertices, len(P)
    layer = []
    for f in range(k):
        a, b = v[f], v[(f + 1) % k]
        length = float(np.linalg.norm(b - a))
        n = max(1, math.ceil(length / h - 1e-9))
        depth = (length / n) * math.sqrt(3.0) / 2.0
        t = (np.arange(n) + 0.5) / n
        layer.append(a + t[:, None] * (b - a) - depth * P.normals[f])
    layer = np.vstack(layer)
    slack = (P.supports[None, :] - layer @ P.normals.T).min(axis=1)
    layer = layer[slack >= 0.35 * h]
    # thin the layer near corners where rows from two facets meet
    keep = []
    tree_pts: list = []
    for q in layer:
        if not tree_pts or np.min(np.linalg.norm(np.array(tree_pts) - q, axis=1)) > 0.5 * h:
            keep.append(q)
            tree_pts.append(q)
    layer = np.array(keep).reshape(-1, 2)

    grid = _lattice(P, h)
    slack = (P.supports[None, :] - grid @ P.normals.T).min(axis=1)
    grid = grid[slack > 1.2 * h]
    if len(layer) and len(grid):
        d, _ = cKDTree(layer).query(grid)
        grid = grid[d > 0.7 * h]
    return np.vstack([layer, grid]) if len(grid) else layer


def _lattice(P: ConvexPolygon, h: float) -> np.ndarray:
    c = P.centroid
    lo, hi = P.vertices.min(0), P.vertices.max(0)
    dy = h * math.sqrt(3.0) / 2.0
    j0, j1 = math.floor((lo[1] - c[1]) / dy) - 1, math.ceil((hi[1] - c[1]) / dy) + 1
    i0, i1 = math.floor((lo[0] - c[0]) / h) - 2, math.ceil((hi[0] - c[0]) / h) + 2
    jj, ii = np.meshgrid(np.arange(j0, j1 + 1), np.arange(i0, i1 + 1), indexing="ij")
    x = c[0] + (ii + 0.5 * (jj % 2)) * h
    y = c[1] + jj * dy
    pts = np.column_stack([x.ravel(), y.ravel()])
    slack = P.supports[None, :] - pts @ P.normals.T
    return pts[slack.min(axis=1) >= 0.5 * h]


def _delaunay(nodes: np.ndarray) -> np.ndarray:
    tri = Delaunay(nodes, qhull_options="Qbb Qc Qz")
    if len(tri.coplanar):
        raise DegenerateGeometry("Delaunay dropped coincident nodes")
    t = tri.simplices.astype(int)
    p = nodes[t]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    cr = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    t[cr < 0] = t[cr < 0][:, [0, 2, 1]]
    scale = np.ptp(nodes, axis=0).max() ** 2
    return t[np.abs(cr) > 1e-14 * scale]


def _refine(P, boundary, bpts, bfacets, bedges, interior, bad_tris, h):
    cc = _circumcentres(bad_tris)
    a, b = bpts[bedges[:, 0]], bpts[bedges[:, 1]]
    mid, half = 0.5 * (a + b), 0.5 * np.linalg.norm(b - a, axis=1)
    d = np.linalg.norm(cc[:, None, :] - mid[None, :, :], axis=2)
    enc = d < half[None, :] * (1.0 + 1e-9)
    slack = P.supports[None, :] - cc @ P.normals.T
    outside = slack.min(axis=1) <= 1e-9 * h

    split = set()
    new_pts = []
    for i in range(len(cc)):
        hits = np.flatnonzero(enc[i])
        if hits.size:
            split.update(int(e) for e in hits)
        elif outside[i]:
            # nearest boundary segment absorbs the refinement
            split.add(int(np.argmin(d[i] - half)))
        else:
            new_pts.append(cc[i])

    # per-facet segment index: edges are emitted facet by facet in chain order
    seg_index = np.zeros(len(bedges), dtype=int)
    counts: dict[int, int] = {}
    for e, f in enumerate(bfacets):
        seg_index[e] = counts.get(int(f), 0)
        counts[int(f)] = seg_index[e] + 1
    for e in sorted(split, key=lambda e: (bfacets[e], -seg_index[e])):
        boundary.split(int(bfacets[e]), int(seg_index[e]))

    if split:
        # interior points inside a split segment's diametral disc are removed
        hit = np.flatnonzero(np.isin(np.arange(len(bedges)), list(split)))
        if len(interior):
            di = np.linalg.norm(interior[:, None, :] - mid[None, hit, :], axis=2)
            interior = interior[(di >= half[None, hit]).all(axis=1)]
        if new_pts:
            np_arr = np.array(new_pts)
            dn = np.linalg.norm(np_arr[:, None, :] - mid[None, hit, :], axis=2)
            new_pts = list(np_arr[(dn >= half[None, hit]).all(axis=1)])
    if new_pts:
        new = np.unique(np.round(np.array(new_pts), 14), axis=0)
        if len(interior):
            dmin = np.linalg.norm(new[:, None, :] - interior[None, :, :], axis=2).min(1) \
                if len(new) * len(interior) < 2e7 else np.full(len(new), np.inf)
            new = new[dmin > 1e-6 * h]
        interior = np.vstack([interior, new]) if len(interior) else new
    return interior
