"""Discrete spaces: H(div) velocity, edge multipliers, pressure, traceless stress.

Velocity shape functions are built on every physical cell by inverting the
DoF matrix over a spanning set in scaled coordinates ``xi = (x - c_T) / h_T``:

* vector monomials ``P_k(T; R^2)``, and
* for Raviart-Thomas (``ell == k``) additionally ``xi * q`` for homogeneous
  ``q`` of degree ``k``.

DoFs are normal moments against an L2(F)-orthonormal Legendre basis on each
edge (global normal, so they are shared by both neighbours) and interior
moments against ``grad P_ell(T) + {q in P_{k-1}(T; R^2): q . xi = 0}``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh
from .polybasis import (
    FRAME,
    FRAME_NORMS,
    dim_p,
    edge_legendre,
    edge_rule,
    exponents,
    monomials,
    triangle_rule,
)


@dataclass(frozen=True)
class SpaceConfig:
    """Polynomial degrees: ``ell == k`` is RT_k, ``ell == k - 1`` is BDM_k."""

    k: int
    ell: int

    def __post_init__(self):
        if self.k < 0 or self.ell < 0:
            raise ValueError(f"degrees must be non-negative, got k={self.k}, l={self.ell}")
        if self.ell not in (self.k, self.k - 1):
            raise ValueError(f"l must be k or k-1, got k={self.k}, l={self.ell}")

    @property
    def family(self) -> str:
        return f"RT{self.k}" if self.ell == self.k else f"BDM{self.k}"


def _cell_scaling(mesh: Mesh, cells):
    return mesh.centroids[cells][:, None, :], mesh.h_T[cells][:, None, None]


def _local_edge_quadrature(mesh: Mesh, rule, cells):
    """Edge points seen from cells: ``(C, 3, nq, 2)``, weights ``(C, 3, nq)``."""
    pts, wts = rule.on_edges(mesh)
    ce = mesh.cell_edges[cells]
    return pts[ce], wts[ce]


class VelocitySpace:
    """Global H(div) space with homogeneous normal trace on the boundary."""

    def __init__(self, mesh: Mesh, config: SpaceConfig):
        self.mesh = mesh
        self.config = config
        k, ell = config.k, config.ell
        self.k, self.ell = k, ell
        self.rt = ell == k
        self.n_edge = k + 1
        self.n_interior = (dim_p(ell) - 1) + dim_p(k - 2)
        self.n_span = 2 * dim_p(k) + (k + 1 if self.rt else 0)
        self.n_loc = 3 * self.n_edge + self.n_interior
        if self.n_loc != self.n_span:
            raise RuntimeError("DoF count does not match local dimension")

        n_cells, n_edges = mesh.n_cells, mesh.n_edges
        edge_ids = mesh.cell_edges[:, :, None] * self.n_edge + np.arange(self.n_edge)
        interior = n_edges * self.n_edge + (
            np.arange(n_cells)[:, None] * self.n_interior + np.arange(self.n_interior)
        )
        self.local_dofs = np.concatenate([edge_ids.reshape(n_cells, -1), interior], axis=1)
        self.n_dofs = n_edges * self.n_edge + n_cells * self.n_interior

        constrained = np.zeros(self.n_dofs, dtype=bool)
        constrained[: n_edges * self.n_edge] = np.repeat(mesh.boundary_edges, self.n_edge)
        self.free = ~constrained
        self.free_index = -np.ones(self.n_dofs, dtype=np.int64)
        self.free_index[self.free] = np.arange(int(self.free.sum()))
        self.n_free = int(self.free.sum())

        self.dof_matrix = self._dof_matrix()
        cond = np.linalg.cond(self.dof_matrix)
        bad = np.flatnonzero(~np.isfinite(cond) | (cond > 1e12))
        if bad.size:
            raise np.linalg.LinAlgError(
                f"singular velocity DoF matrix on cell {int(bad[0])} ({config.family})"
            )
        self.coef = np.linalg.inv(self.dof_matrix)

    # spanning set ---------------------------------------------------------

    def span(self, xi, scale):
        """Spanning functions at scaled points ``xi = (x - c) / scale``.

        ``scale`` broadcasts against ``xi`` (trailing axis of length one).

        Returns values ``(..., ns, 2)``, divergence ``(..., ns)`` and gradient
        ``(..., ns, 2, 2)`` (row = component), derivatives in physical units.
        """
        k = self.k
        m, dm = monomials(xi, k)
        zero = np.zeros_like(m)
        vals = [np.stack([m, zero], -1), np.stack([zero, m], -1)]
        zg = np.zeros_like(dm)
        grads = [np.stack([dm, zg], -2), np.stack([zg, dm], -2)]
        divs = [dm[..., 0], dm[..., 1]]
        if self.rt:
            hom = slice(dim_p(k - 1), dim_p(k))
            hm, hd = m[..., hom], dm[..., hom, :]
            x1, x2 = xi[..., 0, None], xi[..., 1, None]
            vals.append(np.stack([x1 * hm, x2 * hm], -1))
            row0 = np.stack([hm + x1 * hd[..., 0], x1 * hd[..., 1]], -1)
            row1 = np.stack([x2 * hd[..., 0], hm + x2 * hd[..., 1]], -1)
            grads.append(np.stack([row0, row1], -2))
            divs.append((k + 2) * hm)
        vals = np.concatenate(vals, axis=-2)
        s = np.asarray(scale)[..., 0]
        divs = np.concatenate(divs, axis=-1) / s[..., None]
        grads = np.concatenate(grads, axis=-3) / s[..., None, None, None]
        return vals, divs, grads

    def _interior_tests(self, xi):
        """Interior DoF test fields at scaled points, ``(..., n_int, 2)``."""
        parts = []
        if self.ell >= 1:
            _, dm = monomials(xi, self.ell)
            parts.append(dm[..., 1:, :])
        if self.k >= 2:
            r = monomials(xi, self.k - 2, derivatives=False)
            perp = np.stack([xi[..., 1, None] * r, -xi[..., 0, None] * r], -1)
            parts.append(perp)
        if not parts:
            return np.zeros(xi.shape[:-1] + (0, 2))
        return np.concatenate(parts, axis=-2)

    def _dof_matrix(self):
        mesh, k = self.mesh, self.k
        cells = np.arange(mesh.n_cells)
        c, h = _cell_scaling(mesh, cells)
        erule = edge_rule(2 * k + 2)
        epts, ewts = _local_edge_quadrature(mesh, erule, cells)
        leg = edge_legendre(erule.points, k, mesh.h_F)[mesh.cell_edges]
        vals, _, _ = self.span((epts - c[:, :, None]) / h[:, :, None], h[:, :, None])
        normals = mesh.edge_normals[mesh.cell_edges]
        vn = np.einsum("cepsd,ced->ceps", vals, normals)
        d_edge = np.einsum("cep,cepq,ceps->ceqs", ewts, leg, vn).reshape(mesh.n_cells, -1, self.n_span)

        vrule = triangle_rule(2 * k + 2)
        pts, wts = vrule.on_cells(mesh)
        xi = (pts - c) / h
        vals, _, _ = self.span(xi, h)
        tests = self._interior_tests(xi)
        d_int = np.einsum("cp,cpid,cpsd->cis", wts, tests, vals)
        return np.concatenate([d_edge, d_int], axis=1)

    # evaluation -----------------------------------------------------------

    def shape_functions(self, points, cells=None):
        """Local shape functions at ``points`` of shape ``(C, ..., 2)``.

        Returns values ``(C, ..., n_loc, 2)``, divergence ``(C, ..., n_loc)``
        and gradient ``(C, ..., n_loc, 2, 2)``.
        """
        cells = np.arange(self.mesh.n_cells) if cells is None else np.asarray(cells)
        points = np.asarray(points, dtype=float)
        extra = points.ndim - 2
        c = self.mesh.centroids[cells].reshape((-1,) + (1,) * extra + (2,))
        h = self.mesh.h_T[cells].reshape((-1,) + (1,) * (extra + 1))
        vals, divs, grads = self.span((points - c) / h, h)
        coef = self.coef[cells].reshape((-1,) + (1,) * (extra) + self.coef.shape[1:])
        vals = np.einsum("c...sd,c...sl->c...ld", vals, coef)
        divs = np.einsum("c...s,c...sl->c...l", divs, coef)
        grads = np.einsum("c...sde,c...sl->c...lde", grads, coef)
        return vals, divs, grads

    def span_coefficients(self, u, cells=None):
        """Coefficients over the spanning set of a global vector, ``(C, ns)``."""
        cells = np.arange(self.mesh.n_cells) if cells is None else np.asarray(cells)
        return np.einsum("csl,cl->cs", self.coef[cells], np.asarray(u)[self.local_dofs[cells]])

    def evaluate(self, u, points, cells=None):
        """Value, divergence and gradient of the global field ``u`` at ``(C, nq, 2)`` points."""
        cells = np.arange(self.mesh.n_cells) if cells is None else np.asarray(cells)
        a = self.span_coefficients(u, cells)
        c, h = _cell_scaling(self.mesh, cells)
        vals, divs, grads = self.span((points - c) / h, h)
        return (
            np.einsum("cpsd,cs->cpd", vals, a),
            np.einsum("cps,cs->cp", divs, a),
            np.einsum("cpsde,cs->cpde", grads, a),
        )

    def apply_dofs(self, field, cells=None, degree: int = 16):
        """Local DoF functionals applied to a callable ``field(points) -> (..., 2)``.

        Returns ``(C, n_loc)``; edge moments use the global edge normal.
        """
        mesh, k = self.mesh, self.k
        cells = np.arange(mesh.n_cells) if cells is None else np.asarray(cells)
        erule = edge_rule(degree + k)
        epts, ewts = _local_edge_quadrature(mesh, erule, cells)
        leg = edge_legendre(erule.points, k, mesh.h_F)[mesh.cell_edges[cells]]
        vn = np.einsum("cepd,ced->cep", field(epts), mesh.edge_normals[mesh.cell_edges[cells]])
        d_edge = np.einsum("cep,cepq,cep->ceq", ewts, leg, vn).reshape(len(cells), -1)
        pts, wts = triangle_rule(degree + k).on_cells(mesh, cells)
        c, h = _cell_scaling(mesh, cells)
        tests = self._interior_tests((pts - c) / h)
        d_int = np.einsum("cp,cpid,cpd->ci", wts, tests, field(pts))
        return np.concatenate([d_edge, d_int], axis=1)

    def interpolate(self, field, degree: int = 16):
        """Canonical interpolant of ``field`` as a global coefficient vector.

        Boundary DoFs are kept as computed (zero for fields vanishing on the
        boundary); interior-edge DoFs agree from both sides up to quadrature.
        """
        local = self.apply_dofs(field, degree=degree)
        out = np.zeros(self.n_dofs)
        out[self.local_dofs] = local
        return out


class MultiplierSpace:
    """Tangential edge multipliers ``mu = sum_q c_q L_q t_F`` on interior edges."""

    def __init__(self, mesh: Mesh, k: int):
        if k < 0:
            raise ValueError("degree must be non-negative")
        self.mesh = mesh
        self.k = k
        self.n_edge = k + 1
        interior = mesh.interior_edges
        self.edge_dofs = -np.ones((mesh.n_edges, self.n_edge), dtype=np.int64)
        self.edge_dofs[interior] = (
            np.arange(len(interior))[:, None] * self.n_edge + np.arange(self.n_edge)
        )
        self.n_dofs = len(interior) * self.n_edge
        #: (C, 3 (k+1)) global indices, -1 on boundary edges
        self.local_dofs = self.edge_dofs[mesh.cell_edges].reshape(mesh.n_cells, -1)

    def project_tangential(self, field, degree: int = 16):
        """Coefficients of ``Q_{k,F}(field . t_F)`` on interior edges."""
        mesh = self.mesh
        rule = edge_rule(degree + self.k)
        pts, wts = rule.on_edges(mesh)
        leg = edge_legendre(rule.points, self.k, mesh.h_F)
        ut = np.einsum("epd,ed->ep", field(pts), mesh.edge_tangents)
        mom = np.einsum("ep,epq,ep->eq", wts, leg, ut)
        out = np.zeros(self.n_dofs)
        interior = mesh.interior_edges
        out[self.edge_dofs[interior].ravel()] = mom[interior].ravel()
        return out

    def evaluate_on_edges(self, lam, s):
        """Tangential scalar ``mu . t_F`` at reference parameters ``s``: ``(E, nq)``."""
        leg = edge_legendre(s, self.k, self.mesh.h_F)
        coeffs = np.zeros((self.mesh.n_edges, self.n_edge))
        interior = self.mesh.interior_edges
        coeffs[interior] = np.asarray(lam)[self.edge_dofs[interior]]
        return np.einsum("epq,eq->ep", leg, coeffs)


class PressureSpace:
    """Discontinuous ``P_ell`` in scaled monomials; the mean is fixed elsewhere."""

    def __init__(self, mesh: Mesh, ell: int):
        if ell < 0:
            raise ValueError("degree must be non-negative")
        self.mesh = mesh
        self.ell = ell
        self.n_loc = dim_p(ell)
        self.n_dofs = mesh.n_cells * self.n_loc
        self.local_dofs = np.arange(self.n_dofs).reshape(mesh.n_cells, self.n_loc)

    def basis(self, points, cells=None):
        cells = np.arange(self.mesh.n_cells) if cells is None else np.asarray(cells)
        c, h = _cell_scaling(self.mesh, cells)
        return monomials((points - c) / h, self.ell, derivatives=False)

    def evaluate(self, p, points, cells=None):
        cells = np.arange(self.mesh.n_cells) if cells is None else np.asarray(cells)
        return np.einsum("cpr,cr->cp", self.basis(points, cells), np.asarray(p)[self.local_dofs[cells]])

    def mass(self):
        pts, wts = triangle_rule(2 * self.ell).on_cells(self.mesh)
        phi = self.basis(pts)
        return np.einsum("cp,cpr,cps->crs", wts, phi, phi)

    def project(self, field, degree: int = 16):
        """Elementwise L2 projection of a scalar callable."""
        pts, wts = triangle_rule(degree + self.ell).on_cells(self.mesh)
        phi = self.basis(pts)
        rhs = np.einsum("cp,cpr,cp->cr", wts, phi, field(pts))
        return np.linalg.solve(self.mass(), rhs[..., None])[..., 0].ravel()

    def means(self):
        """``m_q = int_Omega q`` for every basis function."""
        pts, wts = triangle_rule(self.ell).on_cells(self.mesh)
        return np.einsum("cp,cpr->cr", wts, self.basis(pts)).ravel()


class StressSpace:
    """Elementwise ``P_k(T; traceless)`` with basis ``E_a m_j``, index ``a * dim P_k + j``."""

    def __init__(self, mesh: Mesh, k: int):
        if k < 0:
            raise ValueError("degree must be non-negative")
        self.mesh = mesh
        self.k = k
        self.n_scalar = dim_p(k)
        self.n_loc = 3 * self.n_scalar
        pts, wts = triangle_rule(2 * k).on_cells(mesh)
        m = self.scalar(pts)
        s = np.einsum("cp,cpi,cpj->cij", wts, m, m)
        self.scalar_mass = s
        self.mass = np.einsum("a,ab,cij->caibj", FRAME_NORMS, np.eye(3), s).reshape(
            mesh.n_cells, self.n_loc, self.n_loc
        )

    def scalar(self, points, cells=None, derivatives=False):
        cells = np.arange(self.mesh.n_cells) if cells is None else np.asarray(cells)
        extra = np.asarray(points).ndim - 2
        c = self.mesh.centroids[cells].reshape((-1,) + (1,) * extra + (2,))
        h = self.mesh.h_T[cells].reshape((-1,) + (1,) * (extra + 1))
        out = monomials((points - c) / h, self.k, derivatives=derivatives)
        if derivatives:
            return out[0], out[1] / h[..., None]
        return out

    def basis(self, points, cells=None):
        """Tensor basis values ``(C, ..., n_loc, 2, 2)``."""
        m = self.scalar(points, cells)
        return np.einsum("aij,...s->...asij", FRAME, m).reshape(m.shape[:-1] + (self.n_loc, 2, 2))

    def evaluate(self, coeffs, points, cells=None):
        """Tensor field from per-cell coefficients ``(C, n_loc)`` at ``(C, nq, 2)``."""
        cells = np.arange(self.mesh.n_cells) if cells is None else np.asarray(cells)
        m = self.scalar(points, cells)
        a = np.asarray(coeffs)[cells].reshape(len(cells), 3, self.n_scalar)
        w = np.einsum("cps,cas->cpa", m, a)
        return np.einsum("cpa,aij->cpij", w, FRAME)

    def l2_project(self, field, degree: int = 16):
        """Elementwise L2 projection of a traceless callable onto the frame."""
        pts, wts = triangle_rule(degree + self.k).on_cells(self.mesh)
        rhs = np.einsum("cp,cpsij,cpij->cs", wts, self.basis(pts), field(pts))
        return np.linalg.solve(self.mass, rhs[..., None])[..., 0]

    def tn_functionals(self, field, degree: int = 16):
        """tn-DoFs of a callable tensor field on every cell, ``(C, n_loc)``.

        Edge moments ``int_F t_F^T tau n_F L_q`` (global orientation) followed
        by interior moments against ``P_{k-1}(T; traceless)``.
        """
        return self._tn(lambda pts, cells: field(pts), degree)

    def _tn(self, sample, degree):
        mesh, k = self.mesh, self.k
        cells = np.arange(mesh.n_cells)
        erule = edge_rule(degree + k)
        epts, ewts = _local_edge_quadrature(mesh, erule, cells)
        leg = edge_legendre(erule.points, k, mesh.h_F)[mesh.cell_edges]
        t = mesh.edge_tangents[mesh.cell_edges]
        n = mesh.edge_normals[mesh.cell_edges]
        tn = np.einsum("ced,ce...df,cef->ce...", t, sample(epts, cells), n)
        edge = np.einsum("cep,cepq,cep...->ceq...", ewts, leg, tn)
        edge = edge.reshape(mesh.n_cells, 3 * (k + 1), *edge.shape[3:])
        n_int = dim_p(k - 1)
        pts, wts = triangle_rule(degree + k).on_cells(mesh)
        m = self.scalar(pts)[..., :n_int]
        vals = sample(pts, cells)
        inner = np.einsum("cp,cps,aij,cp...ij->c...as", wts, m, FRAME, vals)
        inner = inner.reshape(edge.shape[:1] + edge.shape[2:] + (3 * n_int,))
        inner = np.moveaxis(inner, -1, 1)
        return np.concatenate([edge, inner], axis=1)

    def tn_matrix(self):
        """tn-DoFs applied to the local basis, ``(C, n_loc, n_loc)``."""
        return self._tn(lambda pts, cells: self.basis(pts, cells), 2 * self.k)

    def interpolate(self, field, degree: int = 16):
        """Local tn-interpolant of a traceless callable, per-cell coefficients."""
        d = self.tn_matrix()
        cond = np.linalg.cond(d)
        bad = np.flatnonzero(~np.isfinite(cond) | (cond > 1e12))
        if bad.size:
            raise np.linalg.LinAlgError(f"tn-DoF matrix singular on cell {int(bad[0])}")
        rhs = self.tn_functionals(field, degree)
        return np.linalg.solve(d, rhs[..., None])[..., 0]


def build_velocity_space(mesh: Mesh, config: SpaceConfig) -> VelocitySpace:
    return VelocitySpace(mesh, config)


def build_multiplier_space(mesh: Mesh, k: int) -> MultiplierSpace:
    return MultiplierSpace(mesh, k)


def build_pressure_space(mesh: Mesh, ell: int) -> PressureSpace:
    return PressureSpace(mesh, ell)


def interpolate_velocity(space: VelocitySpace, field, degree: int = 16) -> np.ndarray:
    return space.interpolate(field, degree)


def interpolate_stress(space: StressSpace, field, degree: int = 16) -> np.ndarray:
    return space.interpolate(field, degree)


__all__ = [
    "SpaceConfig",
    "VelocitySpace",
    "MultiplierSpace",
    "PressureSpace",
    "StressSpace",
    "build_velocity_space",
    "build_multiplier_space",
    "build_pressure_space",
    "interpolate_velocity",
    "interpolate_stress",
    "exponents",
]
