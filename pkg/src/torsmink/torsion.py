"""Piecewise-linear finite elements for the torsion problem.

Solves ``-Laplace(u) = 2`` in a convex polygon with ``u = 0`` on the
boundary, then derives the torsional rigidity, the boundary normal derivative
by consistent-flux recovery and the per-facet torsion measure
``mu_k = int_{facet k} |grad u|^2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import IdentityMismatch, OriginOnBoundary, SolverDiverged
from .geometry import DIM, ConvexPolygon, support_function
from .mesh import TriMesh, triangulate

# homogeneity degree of the torsional rigidity
RIGIDITY_DEGREE = DIM + 2
CG_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class TorsionField:
    mesh: TriMesh
    u: np.ndarray
    interior_dof_count: int
    cg_iterations: int = 0
    cg_residual: float = 0.0

    @property
    def gradients(self) -> np.ndarray:
        """Constant gradient of ``u`` on each triangle, shape (T, 2)."""
        g, _ = _shape_gradients(self.mesh)
        return np.einsum("tij,ti->tj", g, self.u[self.mesh.triangles])

    @property
    def max_gradient(self) -> float:
        return float(np.linalg.norm(self.gradients, axis=1).max())


@dataclass(frozen=True, eq=False)
class TorsionData:
    """Rigidity and per-facet torsion measure of one polygon.

    Arrays are indexed by facet of the polygon the data was computed on.
    ``flux`` holds the recovered ``|du/dn|`` at each boundary node
    (``flux_nodes`` gives the node ids).
    """

    T: float
    facet_measures: np.ndarray
    flux: np.ndarray
    flux_nodes: np.ndarray
    normals: np.ndarray
    supports: np.ndarray
    lengths: np.ndarray
    area: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def support_residual(self) -> float:
        """``|sum h_k mu_k - (n+2) T| / ((n+2) T)``."""
        s = float(np.dot(self.supports, self.facet_measures))
        return abs(s - RIGIDITY_DEGREE * self.T) / (RIGIDITY_DEGREE * self.T)

    @property
    def divergence_residual(self) -> float:
        return abs(self.diagnostics["flux_total"] - 2.0 * self.area) / (2.0 * self.area)

    @property
    def total_measure(self) -> float:
        return float(self.facet_measures.sum())

    def scaled(self, m: float) -> "TorsionData":
        """Data of the dilate ``m P`` by exact homogeneity."""
        diag = dict(self.diagnostics)
        for key, deg in (("T_energy", 4), ("T_mean", 4), ("flux_total", 2),
                         ("max_gradient", 1)):
            if key in diag:
                diag[key] = diag[key] * m ** deg
        if "naive_measures" in diag:
            diag["naive_measures"] = np.asarray(diag["naive_measures"]) * m ** 3
        return replace(
            self,
            T=self.T * m ** RIGIDITY_DEGREE,
            facet_measures=self.facet_measures * m ** (RIGIDITY_DEGREE - 1),
            flux=self.flux * m,
            supports=self.supports * m,
            lengths=self.lengths * m,
            area=self.area * m * m,
            diagnostics=diag,
        )


def _shape_gradients(mesh: TriMesh):
    p = mesh.nodes[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    area2 = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    g = np.empty(p.shape)
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        g[:, i, 0] = (y[:, j] - y[:, k]) / area2
        g[:, i, 1] = (x[:, k] - x[:, j]) / area2
    return g, 0.5 * area2


def assemble(mesh: TriMesh):
    """Global stiffness matrix and load vector for ``-Laplace(u) = 2``."""
    g, area = _shape_gradients(mesh)
    ke = np.einsum("tid,tjd->tij", g, g) * area[:, None, None]
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = len(mesh.nodes)
    K = sp.csr_matrix((ke.ravel(), (rows, cols)), shape=(n, n))
    F = np.zeros(n)
    np.add.at(F, t.ravel(), np.repeat(2.0 * area / 3.0, 3))
    return K, F


def pcg(A, b: np.ndarray, tol: float = CG_TOL, maxiter: int | None = None):
    """Jacobi-preconditioned conjugate gradients.

    Returns ``(x, iterations, relative_residual)``. Raises SolverDiverged if
    the residual stops improving before reaching ``tol``.
    """
    n = len(b)
    maxiter = maxiter or max(10 * n, 1000)
    dinv = 1.0 / A.diagonal()
    x = np.zeros(n)
    r = b.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x, 0, 0.0
    z = dinv * r
    p = z.copy()
    rz = r @ z
    best, since_best = np.inf, 0
    for it in range(1, maxiter + 1):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise SolverDiverged("stiffness matrix is not positive definite")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            return x, it, res
        if res < 0.999 * best:
            best, since_best = res, 0
        else:
            since_best += 1
            if since_best > 500:
                break
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverDiverged(f"CG stalled at relative residual {res:.3g} after {it} iterations")


def solve_torsion(mesh: TriMesh) -> TorsionField:
    K, F = assemble(mesh)
    bnodes = mesh.boundary_nodes
    interior = np.setdiff1d(np.arange(len(mesh.nodes)), bnodes)
    Kii = K[interior][:, interior]
    ui, iters, res = pcg(Kii, F[interior])
    u = np.zeros(len(mesh.nodes))
    u[interior] = ui
    return TorsionField(mesh, u, len(interior), iters, res)


def rigidity_pair(f: TorsionField) -> tuple[float, float]:
    """``(int |grad u|^2, 2 int u)``; equal for the exact solution."""
    g, area = _shape_gradients(f.mesh)
    grads = np.einsum("tij,ti->tj", g, f.u[f.mesh.triangles])
    energy = float(np.sum(area * (grads ** 2).sum(1)))
    mean = float(2.0 * np.sum(area * f.u[f.mesh.triangles].mean(1)))
    return energy, mean


def rigidity(f: TorsionField, tol: float = 1e-2) -> float:
    energy, mean = rigidity_pair(f)
    if abs(energy - mean) > tol * abs(energy):
        raise IdentityMismatch(
            f"energy form {energy:.8g} and 2*int(u) = {mean:.8g} disagree; mesh under-resolved")
    return energy


def facet_torsion_measure(f: TorsionField, P: ConvexPolygon, tol: float | None = 5e-2) -> TorsionData:
    """Per-facet torsion measure by consistent boundary flux.

    The boundary normal derivative ``lam`` is the piecewise-linear function
    satisfying ``int_dP lam v = int 2 v - int grad u . grad v`` for every
    boundary hat function ``v``; then ``mu_k = int_{facet k} lam^2``.
    ``tol`` bounds the support and divergence identity residuals (None skips).
    """
    mesh = f.mesh
    K, F = assemble(mesh)
    R = F - K @ f.u
    bnodes = mesh.boundary_nodes
    local = {int(n): i for i, n in enumerate(bnodes)}
    a = np.array([local[int(i)] for i in mesh.boundary_edges[:, 0]])
    b = np.array([local[int(i)] for i in mesh.boundary_edges[:, 1]])
    L = np.linalg.norm(mesh.nodes[mesh.boundary_edges[:, 1]] - mesh.nodes[mesh.boundary_edges[:, 0]], axis=1)
    nb = len(bnodes)
    rows = np.concatenate([a, a, b, b])
    cols = np.concatenate([a, b, a, b])
    vals = np.concatenate([L / 3, L / 6, L / 6, L / 3])
    Mb = sp.csc_matrix((vals, (rows, cols)), shape=(nb, nb))
    lam = spsolve(Mb, R[bnodes])

    la, lb = lam[a], lam[b]
    nf = len(P)
    mu = np.zeros(nf)
    np.add.at(mu, mesh.boundary_facets, L * (la * la + la * lb + lb * lb) / 3.0)
    flux_total = float(np.sum(L * (la + lb) / 2.0))

    # naive trace of the adjacent triangle gradient, kept as a cross-check
    grads = f.gradients
    edge_tri = _edge_triangles(mesh)
    gnorm2 = (grads[edge_tri] ** 2).sum(1)
    naive = np.zeros(nf)
    np.add.at(naive, mesh.boundary_facets, L * gnorm2)

    energy, mean = rigidity_pair(f)
    data = TorsionData(
        T=energy,
        facet_measures=mu,
        flux=lam,
        flux_nodes=bnodes,
        normals=np.array(P.normals),
        supports=P.supports,
        lengths=P.lengths,
        area=P.area,
        diagnostics={
            "T_energy": energy,
            "T_mean": mean,
            "flux_total": flux_total,
            "naive_measures": naive,
            "max_gradient": float(np.sqrt((grads ** 2).sum(1).max())),
            "cg_iterations": f.cg_iterations,
            "nodes": len(mesh.nodes),
            "triangles": len(mesh.triangles),
        },
    )
    if tol is not None:
        if data.support_residual > tol:
            raise IdentityMismatch(
                f"support identity residual {data.support_residual:.3g} exceeds {tol}")
        if data.divergence_residual > tol:
            raise IdentityMismatch(
                f"divergence identity residual {data.divergence_residual:.3g} exceeds {tol}")
    return data


def _edge_triangles(mesh: TriMesh) -> np.ndarray:
    lookup = {}
    for ti, t in enumerate(mesh.triangles):
        for i in range(3):
            lookup[(int(t[i]), int(t[(i + 1) % 3]))] = ti
    out = []
    for a, b in mesh.boundary_edges:
        ti = lookup.get((int(a), int(b)))
        if ti is None:
            ti = lookup[(int(b), int(a))]
        out.append(ti)
    return np.array(out, dtype=int)


def torsion_data(P: ConvexPolygon, mesh_h: float, tol: float | None = 5e-2) -> TorsionData:
    """Mesh, solve and measure in one call."""
    field_ = solve_torsion(triangulate(P, mesh_h))
    return facet_torsion_measure(field_, P, tol=tol)


def lp_measure(d: TorsionData, P: ConvexPolygon, p: float) -> np.ndarray:
    """``h_k^(1-p) mu_k`` per facet."""
    h = np.asarray(P.supports, dtype=float)
    mu = d.facet_measures
    if p == 1:
        return mu.copy()
    bad = (h <= 0) & (mu > 0)
    if bad.any():
        raise OriginOnBoundary(
            f"facets {np.flatnonzero(bad).tolist()} pass through the origin but carry torsion measure")
    out = np.zeros_like(mu)
    ok = mu > 0
    out[ok] = h[ok] ** (1.0 - p) * mu[ok]
    return out


def mixed_rigidity(d0: TorsionData, P1) -> float:
    """``(1/(n+2)) sum_k h(P1, xi_k) mu_k(P0)`` over the facets of P0.

    ``P1`` may be a polygon or a single point (support ``x0 . xi``).
    """
    if isinstance(P1, ConvexPolygon):
        h1 = np.asarray(support_function(P1, d0.normals))
    else:
        h1 = d0.normals @ np.asarray(P1, dtype=float)
    return float(np.dot(h1, d0.facet_measures)) / RIGIDITY_DEGREE
