"""Elementwise weak deviatoric gradient and the global bilinear forms.

For a cell ``T`` and every traceless basis tensor ``tau``::

    (G(v, mu), tau)_T = -(v, div tau)_T + (v.n, n^T tau n)_{dT} + (mu, Pi_F tau n)_{dT}

with ``n`` the outward normal.  ``G_T = M_T^{-1} B_T`` maps local velocity
DoFs and multiplier coefficients (all three edges, boundary ones included) to
frame coefficients; the global matrix is ``A = sum_T B_T^T M_T^{-1} B_T``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .polybasis import FRAME, edge_legendre, edge_rule, triangle_rule
from .spaces import MultiplierSpace, PressureSpace, StressSpace, VelocitySpace


@dataclass
class LocalWeakGrad:
    """Per-cell weak gradient data.

    ``B`` and ``G`` have shape ``(C, n_tau, n_u + 3 (k + 1))``: velocity
    columns first, then multiplier columns edge by edge.
    """

    M: np.ndarray
    B: np.ndarray
    G: np.ndarray
    n_u: int

    @property
    def G_u(self):
        return self.G[:, :, : self.n_u]

    @property
    def G_mu(self):
        return self.G[:, :, self.n_u :]


def _edge_frame_terms(mesh, cells):
    """``n^T E_a n`` and ``t^T E_a n`` per local edge (global orientation)."""
    n = mesh.edge_normals[mesh.cell_edges[cells]]
    t = mesh.edge_tangents[mesh.cell_edges[cells]]
    nn = np.einsum("cei,aij,cej->cea", n, FRAME, n)
    tn = np.einsum("cei,aij,cej->cea", t, FRAME, n)
    return nn, tn


def stress_boundary_functionals(stress: StressSpace, vn, mu_t, ewts, leg_pts, cells, flip=False):
    """Boundary part of the defining relation for sampled edge data.

    ``vn`` is ``v . n_F`` at edge points ``(C, 3, nq, ...)`` and ``mu_t`` the
    tangential multiplier ``(C, 3, nq, ...)``; both in global orientation.
    """
    mesh = stress.mesh
    sign = mesh.cell_edge_signs[cells]
    nn, tn = _edge_frame_terms(mesh, cells)
    m = leg_pts
    out = np.einsum("ce,cep,ceps,cea,cep...->c...as", sign, ewts, m, nn, vn)
    msign = np.ones_like(sign) if flip else sign
    out = out + np.einsum("ce,cep,ceps,cea,cep...->c...as", msign, ewts, m, tn, mu_t)
    return out.reshape(out.shape[:-2] + (stress.n_loc,))


def local_weak_devgrad(
    velocity: VelocitySpace,
    multiplier: MultiplierSpace,
    stress: StressSpace,
    cells=None,
    flip_normals: bool = False,
) -> LocalWeakGrad:
    """Weak deviatoric gradient matrices for every cell.

    ``flip_normals`` uses the global edge normal instead of the outward one
    in the multiplier term; it exists only for fault injection.
    """
    mesh, k = velocity.mesh, velocity.k
    if multiplier.k != k or stress.k != k:
        raise ValueError("velocity, multiplier and stress degrees must agree")
    cells = np.arange(mesh.n_cells) if cells is None else np.asarray(cells)
    n_cells = len(cells)

    pts, wts = triangle_rule(2 * k + 1).on_cells(mesh, cells)
    _, dm = stress.scalar(pts, cells, derivatives=True)
    div_tau = np.einsum("aij,cpsj->cpasi", FRAME, dm).reshape(n_cells, pts.shape[1], stress.n_loc, 2)
    phi, _, _ = velocity.shape_functions(pts, cells)
    b_vol = -np.einsum("cp,cpid,cpld->cil", wts, div_tau, phi)

    erule = edge_rule(2 * k + 2)
    epts_all, ewts_all = erule.on_edges(mesh)
    ce = mesh.cell_edges[cells]
    epts, ewts = epts_all[ce], ewts_all[ce]
    m_edge = stress.scalar(epts, cells)
    phi_e, _, _ = velocity.shape_functions(epts, cells)
    vn = np.einsum("ceqld,ced->ceql", phi_e, mesh.edge_normals[ce])
    leg = edge_legendre(erule.points, k, mesh.h_F)[ce]
    # multiplier basis of local edge e only lives on that edge
    n_mu = 3 * (k + 1)
    mu_t = np.zeros(leg.shape[:3] + (3, k + 1))
    for e in range(3):
        mu_t[:, e, :, e, :] = leg[:, e]
    mu_t = mu_t.reshape(leg.shape[:3] + (n_mu,))
    b_u = stress_boundary_functionals(stress, vn, np.zeros_like(vn), ewts, m_edge, cells)
    b_mu = stress_boundary_functionals(
        stress, np.zeros_like(mu_t), mu_t, ewts, m_edge, cells, flip=flip_normals
    )
    b_u = np.swapaxes(b_u, 1, 2) + b_vol
    b_mu = np.swapaxes(b_mu, 1, 2)
    B = np.concatenate([b_u, b_mu], axis=2)
    M = stress.mass[cells]
    G = np.linalg.solve(M, B)
    return LocalWeakGrad(M=M, B=B, G=G, n_u=velocity.n_loc)


def weak_devgrad_of_fields(stress: StressSpace, v, mu=None, cells=None, degree: int = 16):
    """Weak deviatoric gradient of a smooth velocity ``v`` and multiplier ``mu``.

    ``mu`` is a vector callable whose tangential trace ``mu . t_F`` is used on
    every edge (boundary edges included); ``None`` means zero.  Returns
    per-cell frame coefficients ``(C, n_tau)``.
    """
    mesh, k = stress.mesh, stress.k
    cells = np.arange(mesh.n_cells) if cells is None else np.asarray(cells)
    pts, wts = triangle_rule(degree + k).on_cells(mesh, cells)
    _, dm = stress.scalar(pts, cells, derivatives=True)
    div_tau = np.einsum("aij,cpsj->cpasi", FRAME, dm).reshape(len(cells), pts.shape[1], stress.n_loc, 2)
    rhs = -np.einsum("cp,cpid,cpd->ci", wts, div_tau, v(pts))

    erule = edge_rule(degree + k)
    epts_all, ewts_all = erule.on_edges(mesh)
    ce = mesh.cell_edges[cells]
    epts, ewts = epts_all[ce], ewts_all[ce]
    vn = np.einsum("ceqd,ced->ceq", v(epts), mesh.edge_normals[ce])
    mu_t = (
        np.zeros_like(vn)
        if mu is None
        else np.einsum("ceqd,ced->ceq", mu(epts), mesh.edge_tangents[ce])
    )
    rhs = rhs + stress_boundary_functionals(stress, vn, mu_t, ewts, stress.scalar(epts, cells), cells)
    return np.linalg.solve(stress.mass[cells], rhs[..., None])[..., 0]


def local_multiplier_moments(multiplier: MultiplierSpace, field, cells=None, degree: int = 16):
    """``Q_{k,F}`` coefficients of ``field . t_F`` on the three edges of each cell."""
    mesh, k = multiplier.mesh, multiplier.k
    cells = np.arange(mesh.n_cells) if cells is None else np.asarray(cells)
    rule = edge_rule(degree + k)
    pts, wts = rule.on_edges(mesh)
    leg = edge_legendre(rule.points, k, mesh.h_F)
    ut = np.einsum("epd,ed->ep", field(pts), mesh.edge_tangents)
    mom = np.einsum("ep,epq,ep->eq", wts, leg, ut)
    return mom[mesh.cell_edges[cells]].reshape(len(cells), -1)


def _compact(rows, cols, vals, shape):
    """Sum duplicate triplets in a fixed (row, col) order."""
    order = np.lexsort((cols, rows))
    return sp.csr_matrix((vals[order], (rows[order], cols[order])), shape=shape)


def uw_local_indices(velocity: VelocitySpace, multiplier: MultiplierSpace, cells=None):
    """Free (u, lambda) system indices of the local columns, ``-1`` if constrained."""
    cells = np.arange(velocity.mesh.n_cells) if cells is None else np.asarray(cells)
    iu = velocity.free_index[velocity.local_dofs[cells]]
    il = multiplier.local_dofs[cells]
    il = np.where(il >= 0, il + velocity.n_free, -1)
    return np.concatenate([iu, il], axis=1)


def assemble_A(velocity, multiplier, stress, local: LocalWeakGrad | None = None, flip_normals=False):
    """Global ``(dev grad_w, dev grad_w)`` matrix on free (u, lambda) DoFs."""
    if local is None:
        local = local_weak_devgrad(velocity, multiplier, stress, flip_normals=flip_normals)
    a_loc = np.einsum("cil,cim->clm", local.B, local.G)
    a_loc = 0.5 * (a_loc + np.swapaxes(a_loc, 1, 2))
    idx = uw_local_indices(velocity, multiplier)
    n = velocity.n_free + multiplier.n_dofs
    r = np.broadcast_to(idx[:, :, None], a_loc.shape)
    c = np.broadcast_to(idx[:, None, :], a_loc.shape)
    keep = (r >= 0) & (c >= 0)
    return _compact(r[keep], c[keep], a_loc[keep], (n, n))


def assemble_B(velocity: VelocitySpace, pressure: PressureSpace, n_cols: int | None = None):
    """``B[q, v] = (div v, q)`` on free velocity DoFs (columns padded to ``n_cols``)."""
    mesh = velocity.mesh
    pts, wts = triangle_rule(velocity.k + pressure.ell).on_cells(mesh)
    _, div, _ = velocity.shape_functions(pts)
    q = pressure.basis(pts)
    b_loc = np.einsum("cp,cpr,cpl->crl", wts, q, div)
    rows = np.broadcast_to(pressure.local_dofs[:, :, None], b_loc.shape)
    cols = np.broadcast_to(velocity.free_index[velocity.local_dofs][:, None, :], b_loc.shape)
    keep = cols >= 0
    shape = (pressure.n_dofs, velocity.n_free if n_cols is None else n_cols)
    return _compact(rows[keep], cols[keep], b_loc[keep], shape)


def assemble_load(velocity: VelocitySpace, f, degree: int = 16, n_rows: int | None = None):
    """``F_j = sum_T (f, phi_j)_T`` on free velocity DoFs."""
    mesh = velocity.mesh
    pts, wts = triangle_rule(degree + velocity.k + 1).on_cells(mesh)
    phi, _, _ = velocity.shape_functions(pts)
    f_loc = np.einsum("cp,cpd,cpld->cl", wts, f(pts), phi)
    idx = velocity.free_index[velocity.local_dofs]
    keep = idx >= 0
    out = np.zeros(velocity.n_free if n_rows is None else n_rows)
    order = np.argsort(idx[keep], kind="stable")
    np.add.at(out, idx[keep][order], f_loc[keep][order])
    return out
