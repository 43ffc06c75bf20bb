"""Staggered finite element spaces on the simplicial submesh.

Three global spaces are built over the same submesh, each continuous in a
different trace component:

* W: matrix-valued P^k fields whose normal trace is continuous across
  interior primal edges and whose tangential normal trace is continuous
  across dual edges (the velocity-gradient space, with the facet unknown
  already eliminated);
* U: vector-valued P^k fields with continuous normal component across
  dual edges (the velocity space);
* P: scalar P^k fields continuous across interior primal edges (the
  pressure space; the zero-mean condition is imposed at solve time).

Each space is represented by a DOF map (shared edge moments plus cell
moments) and, per triangle, a dual basis expressed in the orthonormal
modal basis. The sparse embedding matrix maps global coefficients to
broken per-triangle modal coefficients; every assembly and evaluation
goes through it.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import StaggeredMesh
from .polybasis import (
    affine_map,
    edge_basis,
    edge_quadrature,
    tri_basis,
    tri_dim,
    tri_quadrature,
)

W_COMPONENTS = ((0, 0), (0, 1), (1, 0), (1, 1))

COND_WARN = 1e6
COND_LIMIT = 1e8


class SpaceError(RuntimeError):
    """Local DOF system failure (singular or badly conditioned)."""


def data_quad_degree(k: int) -> int:
    """Quadrature degree for non-polynomial data (RHS, errors, projections)."""
    env = os.environ.get("SDG_QUAD_DEGREE")
    if env:
        return int(env)
    return max(2 * k + 6, 12)


@dataclass
class DofMap:
    tag: str
    k: int
    ndof: int
    cell_dofs: np.ndarray  # (nT, nloc) global ids in local functional order
    descriptors: list  # per global dof: ("edge", eid, m, comp) or ("cell", t, j, slot)


@dataclass
class DiscreteField:
    tag: str
    coeffs: np.ndarray


@dataclass
class LocalDualBasis:
    tag: str
    tri: int
    coeffs: np.ndarray  # (nloc, nloc): column l = modal coefficients of dual function l
    cond: float


class _Space:
    def __init__(self, dofmap: DofMap, embedding: sp.csr_matrix, dual_coeffs: np.ndarray,
                 conds: np.ndarray, ncomp: int):
        self.dofmap = dofmap
        self.embedding = embedding  # (nT*ncomp*nk, ndof)
        self.dual_coeffs = dual_coeffs  # (nT, nloc, nloc)
        self.conds = conds
        self.ncomp = ncomp

    @property
    def ndof(self) -> int:
        return self.dofmap.ndof


class StaggeredSpaces:
    """All three staggered spaces plus shared geometry/quadrature tables."""

    def __init__(self, mesh: StaggeredMesh, k: int):
        if not 0 <= k <= 3:
            raise ValueError("supported polynomial orders are 0..3 (k=0 experimental)")
        self.mesh = mesh
        self.k = k
        self.nk = tri_dim(k)
        self.nk1 = tri_dim(k - 1) if k >= 1 else 0
        self.basis = tri_basis(k)
        self.edge_basis = edge_basis(k)

        self._build_geometry()
        self._build_edge_traces()
        self.W = self._build_space_W()
        self.U = self._build_space_U()
        self.P = self._build_space_P()

    # -- geometry and quadrature tables ---------------------------------

    def _build_geometry(self) -> None:
        mesh = self.mesh
        nT = mesh.num_triangles
        self.origin = np.empty((nT, 2))
        self.jac = np.empty((nT, 2, 2))
        self.detJ = np.empty(nT)
        self.invJT = np.empty((nT, 2, 2))
        for t in range(nT):
            amap = affine_map(mesh.tri_coords(t))
            self.origin[t] = amap.origin
            self.jac[t] = amap.jac
            self.detJ[t] = amap.det
            self.invJT[t] = amap.inv_jac_t

        self.form_quad = tri_quadrature(max(2 * self.k + 2, 2))
        self.vol_vals = self.basis.eval(self.form_quad.points)  # (nk, nq)
        self.vol_grads = self.basis.grad(self.form_quad.points)  # (nk, nq, 2)
        # Reference derivative Gram blocks: int m_i d_r m_j and int m_i d_s m_j.
        w = self.form_quad.weights
        self.ref_dr = (self.vol_vals * w) @ self.vol_grads[:, :, 0].T
        self.ref_ds = (self.vol_vals * w) @ self.vol_grads[:, :, 1].T

        deg = data_quad_degree(self.k)
        self.data_quad = tri_quadrature(min(deg, 20))
        self.data_vals = self.basis.eval(self.data_quad.points)
        self.data_grads = self.basis.grad(self.data_quad.points)
        self.data_edge_quad = edge_quadrature(min(deg, 20))

    def _build_edge_traces(self) -> None:
        """Per edge and adjacent triangle: modal trace values at edge Gauss points."""
        rule = edge_quadrature(max(2 * self.k + 2, 2))
        self.edge_xi = rule.points
        self.edge_w = rule.weights
        self.edge_leg = self.edge_basis.eval(self.edge_xi)  # (k+1, nq)
        mesh = self.mesh
        self.edge_points = []  # physical quad points per edge, lo->hi orientation
        self.edge_traces = []  # aligned with edge.tris: list of (nk, nq) arrays
        for e in mesh.edges:
            lo = mesh.vertices[e.v0]
            hi = mesh.vertices[e.v1]
            pts = lo + np.outer((self.edge_xi + 1.0) / 2.0, hi - lo)
            self.edge_points.append(pts)
            traces = []
            for t, _sign in e.tris:
                ref = (pts - self.origin[t]) @ self.invJT[t]
                traces.append(self.basis.eval(ref))
            self.edge_traces.append(traces)

    def _edge_trace(self, eid: int, t: int) -> np.ndarray:
        e = self.mesh.edges[eid]
        for idx, (tt, _s) in enumerate(e.tris):
            if tt == t:
                return self.edge_traces[eid][idx]
        raise SpaceError(f"triangle {t} is not adjacent to edge {eid}")

    def _edge_moment(self, eid: int, t: int) -> np.ndarray:
        """EM[m, i] = int_e L_m * (modal_i of triangle t) ds."""
        e = self.mesh.edges[eid]
        T = self._edge_trace(eid, t)
        return (self.edge_leg * (self.edge_w * e.length / 2.0)) @ T.T

    # -- space construction ---------------------------------------------

    def _number_edge_dofs(self, per_primal: int, per_dual: int):
        offsets = np.full(len(self.mesh.edges), -1, dtype=int)
        descriptors: list = []
        base = 0
        for eid, e in enumerate(self.mesh.edges):
            count = per_primal if e.is_primal else per_dual
            if count:
                offsets[eid] = base
                base += count
        return offsets, base, descriptors

    def _finalize_space(self, tag: str, ncomp: int, cell_dofs: np.ndarray,
                        descriptors: list, ndof: int,
                        vmats: np.ndarray) -> _Space:
        nT = self.mesh.num_triangles
        nloc = cell_dofs.shape[1]
        dual = np.empty((nT, nloc, nloc))
        conds = np.empty(nT)
        for t in range(nT):
            V = vmats[t]
            conds[t] = np.linalg.cond(V)
            if not np.isfinite(conds[t]) or conds[t] > COND_LIMIT:
                raise SpaceError(
                    f"space {tag}: local DOF system on triangle {t} is singular or "
                    f"badly conditioned (cond={conds[t]:.3g})"
                )
            dual[t] = np.linalg.inv(V)
        worst = float(conds.max())
        if worst > COND_WARN:
            warnings.warn(
                f"space {tag}: worst local DOF condition number {worst:.3g}",
                stacklevel=3,
            )
        rows = []
        cols = []
        vals = []
        block = ncomp * self.nk
        for t in range(nT):
            C = dual[t]
            r = t * block + np.arange(nloc)
            rows.append(np.repeat(r, nloc))
            cols.append(np.tile(cell_dofs[t], nloc))
            vals.append(C.ravel())
        E = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(nT * block, ndof),
        )
        dofmap = DofMap(tag, self.k, ndof, cell_dofs, descriptors)
        return _Space(dofmap, E, dual, conds, ncomp)

    def _build_space_W(self) -> _Space:
        mesh, k, nk, nk1 = self.mesh, self.k, self.nk, self.nk1
        nT = mesh.num_triangles
        per_primal = 2 * (k + 1)
        per_dual = k + 1
        per_cell = 4 * nk1
        offsets, edge_total, descriptors = self._number_edge_dofs(per_primal, per_dual)
        for eid, e in enumerate(mesh.edges):
            if e.is_primal:
                for m in range(k + 1):
                    for c in range(2):
                        descriptors.append(("edge", eid, m, ("x", "y")[c]))
            else:
                for m in range(k + 1):
                    descriptors.append(("edge", eid, m, "t"))
        for t in range(nT):
            for j in range(nk1):
                for comp in W_COMPONENTS:
                    descriptors.append(("cell", t, j, comp))
        ndof = edge_total + nT * per_cell

        nloc = 4 * nk
        cell_dofs = np.empty((nT, nloc), dtype=int)
        vmats = np.zeros((nT, nloc, nloc))
        for t in range(nT):
            row = 0
            gdofs = []
            e_prim, e_d1, e_d2 = mesh.tri_edges[t]
            # Primal edge: full vector moments of G n.
            e = mesh.edges[e_prim]
            EM = self._edge_moment(e_prim, t)
            for m in range(k + 1):
                for c in range(2):
                    for (a, b) in W_COMPONENTS:
                        if a == c:
                            vmats[t, row, (2 * a + b) * nk: (2 * a + b + 1) * nk] = (
                                e.normal[b] * EM[m]
                            )
                    gdofs.append(offsets[e_prim] + 2 * m + c)
                    row += 1
            # Dual edges: tangential moments of G n.
            for eid in (e_d1, e_d2):
                e = mesh.edges[eid]
                EM = self._edge_moment(eid, t)
                for m in range(k + 1):
                    for (a, b) in W_COMPONENTS:
                        vmats[t, row, (2 * a + b) * nk: (2 * a + b + 1) * nk] = (
                            e.tangent[a] * e.normal[b] * EM[m]
                        )
                    gdofs.append(offsets[eid] + m)
                    row += 1
            # Interior tensor moments against P^{k-1}.
            cell_base = edge_total + t * per_cell
            for j in range(nk1):
                for ci, (a, b) in enumerate(W_COMPONENTS):
                    col = (2 * a + b) * nk + j
                    vmats[t, row, col] = self.detJ[t]
                    gdofs.append(cell_base + 4 * j + ci)
                    row += 1
            cell_dofs[t] = gdofs
        return self._finalize_space("W", 4, cell_dofs, descriptors, ndof, vmats)

    def _build_space_U(self) -> _Space:
        mesh, k, nk, nk1 = self.mesh, self.k, self.nk, self.nk1
        nT = mesh.num_triangles
        per_dual = k + 1
        per_cell = 2 * nk1
        offsets, edge_total, descriptors = self._number_edge_dofs(0, per_dual)
        for eid, e in enumerate(mesh.edges):
            if not e.is_primal:
                for m in range(k + 1):
                    descriptors.append(("edge", eid, m, "n"))
        for t in range(nT):
            for j in range(nk1):
                for c in range(2):
                    descriptors.append(("cell", t, j, ("x", "y")[c]))
        ndof = edge_total + nT * per_cell

        nloc = 2 * nk
        cell_dofs = np.empty((nT, nloc), dtype=int)
        vmats = np.zeros((nT, nloc, nloc))
        for t in range(nT):
            row = 0
            gdofs = []
            _e_prim, e_d1, e_d2 = mesh.tri_edges[t]
            for eid in (e_d1, e_d2):
                e = mesh.edges[eid]
                EM = self._edge_moment(eid, t)
                for m in range(k + 1):
                    for a in range(2):
                        vmats[t, row, a * nk: (a + 1) * nk] = e.normal[a] * EM[m]
                    gdofs.append(offsets[eid] + m)
                    row += 1
            cell_base = edge_total + t * per_cell
            for j in range(nk1):
                for a in range(2):
                    vmats[t, row, a * nk + j] = self.detJ[t]
                    gdofs.append(cell_base + 2 * j + a)
                    row += 1
            cell_dofs[t] = gdofs
        return self._finalize_space("U", 2, cell_dofs, descriptors, ndof, vmats)

    def _build_space_P(self) -> _Space:
        mesh, k, nk, nk1 = self.mesh, self.k, self.nk, self.nk1
        nT = mesh.num_triangles
        per_primal = k + 1
        per_cell = nk1
        offsets, edge_total, descriptors = self._number_edge_dofs(per_primal, 0)
        for eid, e in enumerate(mesh.edges):
            if e.is_primal:
                for m in range(k + 1):
                    descriptors.append(("edge", eid, m, "s"))
        for t in range(nT):
            for j in range(nk1):
                descriptors.append(("cell", t, j, "s"))
        ndof = edge_total + nT * per_cell

        nloc = nk
        cell_dofs = np.empty((nT, nloc), dtype=int)
        vmats = np.zeros((nT, nloc, nloc))
        for t in range(nT):
            row = 0
            gdofs = []
            e_prim = mesh.tri_edges[t][0]
            EM = self._edge_moment(e_prim, t)
            for m in range(k + 1):
                vmats[t, row] = EM[m]
                gdofs.append(offsets[e_prim] + m)
                row += 1
            cell_base = edge_total + t * per_cell
            for j in range(nk1):
                vmats[t, row, j] = self.detJ[t]
                gdofs.append(cell_base + j)
                row += 1
            cell_dofs[t] = gdofs
        return self._finalize_space("P", 1, cell_dofs, descriptors, ndof, vmats)

    # -- access helpers --------------------------------------------------

    def space(self, tag: str) -> _Space:
        try:
            return {"W": self.W, "U": self.U, "P": self.P}[tag]
        except KeyError:
            raise ValueError(f"unknown space tag {tag!r}") from None

    def local_dual_basis(self, tag: str, tri: int) -> LocalDualBasis:
        s = self.space(tag)
        return LocalDualBasis(tag, tri, s.dual_coeffs[tri].copy(), float(s.conds[tri]))

    def broken(self, field: DiscreteField) -> np.ndarray:
        """Per-triangle modal coefficients, shape (nT, ncomp, nk)."""
        s = self.space(field.tag)
        flat = s.embedding @ np.asarray(field.coeffs, dtype=float)
        return flat.reshape(self.mesh.num_triangles, s.ncomp, self.nk)

    def eval_field(self, field: DiscreteField, tri: int, points, gradients: bool = False):
        """Evaluate a field at physical points inside triangle `tri`.

        Returns values shaped (npts,), (npts, 2) or (npts, 2, 2) according
        to the space; with gradients=True also returns the gradient array
        with one extra trailing axis for the derivative direction.
        """
        coeffs = self.broken(field)[tri]
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ref = (pts - self.origin[tri]) @ self.invJT[tri]
        vals = coeffs @ self.basis.eval(ref)  # (ncomp, npts)
        out = self._shape_values(field.tag, vals)
        if not gradients:
            return out
        ref_g = self.basis.grad(ref)  # (nk, npts, 2)
        phys_g = np.einsum("ab,npb->npa", self.invJT[tri], ref_g)
        grads = np.einsum("ck,kpa->cpa", coeffs, phys_g)
        return out, self._shape_values(field.tag, grads, extra=True)

    def _shape_values(self, tag: str, vals: np.ndarray, extra: bool = False):
        npts = vals.shape[1]
        trail = vals.shape[2:] if extra else ()
        if tag == "P":
            return vals[0]
        if tag == "U":
            return np.moveaxis(vals, 0, 1)
        return np.moveaxis(vals, 0, 1).reshape(npts, 2, 2, *trail)

    # -- interpolation by direct DOF evaluation --------------------------

    def interpolate(self, tag: str, fn) -> DiscreteField:
        """Interpolate a callable by applying the space's DOF functionals.

        `fn(points)` takes (npts, 2) physical points and returns values
        shaped (npts,) for P, (npts, 2) for U, (npts, 2, 2) for W.
        """
        s = self.space(tag)
        mesh = self.mesh
        coeffs = np.zeros(s.ndof)
        xi, wq = self.data_edge_quad.points, self.data_edge_quad.weights
        leg = self.edge_basis.eval(xi)
        cell_cache: dict[int, np.ndarray] = {}
        for g, desc in enumerate(s.dofmap.descriptors):
            if desc[0] == "edge":
                _, eid, m, comp = desc
                e = mesh.edges[eid]
                lo, hi = mesh.vertices[e.v0], mesh.vertices[e.v1]
                pts = lo + np.outer((xi + 1.0) / 2.0, hi - lo)
                vals = np.asarray(fn(pts))
                if comp in ("x", "y"):
                    trace = vals[:, ("x", "y").index(comp), :] @ e.normal
                elif comp == "t":
                    trace = np.einsum("pab,b,a->p", vals, e.normal, e.tangent)
                elif comp == "n":
                    trace = vals @ e.normal
                else:
                    trace = vals
                coeffs[g] = float(np.sum(wq * leg[m] * trace) * e.length / 2.0)
            else:
                _, t, j, slot = desc
                if t not in cell_cache:
                    pts = self.data_quad.points @ self.jac[t].T + self.origin[t]
                    cell_cache[t] = np.asarray(fn(pts))
                vals = cell_cache[t]
                if slot == "s":
                    comp_vals = vals
                elif slot in ("x", "y"):
                    comp_vals = vals[:, ("x", "y").index(slot)]
                else:
                    comp_vals = vals[:, slot[0], slot[1]]
                coeffs[g] = float(
                    np.sum(self.data_quad.weights * self.data_vals[j] * comp_vals)
                    * self.detJ[t]
                )
        return DiscreteField(tag, coeffs)
