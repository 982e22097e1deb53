"""Local velocity postprocessing and error norms.

On every cell ``u* in P_{k+1}(T; R^2)`` solves the square system::

    (grad u*, grad v) + (div v, p*) + sum_F mu_F int_F v.n = (sigma_h, grad v)
    (div u*, q) = 0                    q in P_k(T) with zero mean
    int_F u*.n = int_F u_h.n           on the three edges

whose restriction to fields with vanishing edge fluxes is the usual
postprocessing problem.  ``p*`` is discarded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .polybasis import ERROR_DEGREE, dim_p, edge_rule, monomials, triangle_rule

ERROR_COLUMNS = (
    "err_u",
    "err_sigma",
    "err_sigma_0h",
    "err_p",
    "err_Iu",
    "err_Qsigma",
    "err_upost",
    "err_grad_upost",
)

CHUNK = 4096


class PostprocessError(RuntimeError):
    pass


@dataclass
class PostprocessedVelocity:
    mesh: object
    k: int
    #: (C, 2, dim P_{k+1}) scaled-monomial coefficients per component
    coeffs: np.ndarray
    #: discarded pressure, (C, dim P_k - 1) zero-mean basis coefficients
    pressure: np.ndarray = field(repr=False)

    def evaluate(self, points, cells=None):
        """Values ``(C, nq, 2)`` and physical gradients ``(C, nq, 2, 2)``."""
        cells = np.arange(self.mesh.n_cells) if cells is None else np.asarray(cells)
        c = self.mesh.centroids[cells][:, None, :]
        h = self.mesh.h_T[cells][:, None, None]
        m, dm = monomials((points - c) / h, self.k + 1)
        a = self.coeffs[cells]
        vals = np.einsum("cps,cds->cpd", m, a)
        grads = np.einsum("cpse,cds->cpde", dm, a) / h[..., None]
        return vals, grads


def _zero_mean_tests(m, wts, area, k):
    """Scaled monomials of degree 1..k minus their cell means."""
    if k == 0:
        return m[..., :0]
    q = m[..., 1 : dim_p(k)]
    mean = np.einsum("cp,cpr->cr", wts, q) / area[:, None]
    return q - mean[:, None, :]


def postprocess(solution) -> PostprocessedVelocity:
    """Elementwise superconvergent velocity ``u_h*``."""
    disc = solution.disc
    mesh, k = disc.mesh, disc.config.k
    kp = k + 1
    nq_scalar = dim_p(kp)
    n_u = 2 * nq_scalar
    n_p = dim_p(k) - 1
    n = n_u + n_p + 3
    cells = np.arange(mesh.n_cells)
    c = mesh.centroids[:, None, :]
    h = mesh.h_T[:, None, None]

    pts, wts = triangle_rule(2 * k + 2).on_cells(mesh)
    m, dm = monomials((pts - c) / h, kp)
    dm = dm / h[..., None]
    stiff = np.einsum("cp,cpie,cpje->cij", wts, dm, dm)
    q = _zero_mean_tests(monomials((pts - c) / h, kp, derivatives=False), wts, mesh.areas, k)
    # (div v, q) for v = (m_j, 0) and (0, m_j)
    bp = np.concatenate(
        [np.einsum("cp,cpr,cpj->crj", wts, q, dm[..., d]) for d in range(2)], axis=2
    )
    sig = disc.stress.evaluate(solution.sigma, pts)
    rhs_u = np.einsum("cp,cpde,cpje->cdj", wts, sig, dm).reshape(mesh.n_cells, n_u)

    erule = edge_rule(2 * k + 2)
    epts_all, ewts_all = erule.on_edges(mesh)
    ce = mesh.cell_edges
    epts, ewts = epts_all[ce], ewts_all[ce]
    n_out = mesh.outward_normals()
    me = monomials((epts - c[:, :, None]) / h[:, :, None], kp, derivatives=False)
    flux = np.einsum("ceq,ceqj,ced->cedj", ewts, me, n_out).reshape(mesh.n_cells, 3, n_u)
    uh, _, _ = disc.velocity.evaluate(solution.u, epts.reshape(mesh.n_cells, -1, 2))
    uh = uh.reshape(epts.shape)
    rhs_flux = np.einsum("ceq,ceqd,ced->ce", ewts, uh, n_out)

    K = np.zeros((mesh.n_cells, n, n))
    K[:, :n_u, :n_u] = np.einsum("ab,cij->caibj", np.eye(2), stiff).reshape(mesh.n_cells, n_u, n_u)
    K[:, n_u : n_u + n_p, :n_u] = bp
    K[:, :n_u, n_u : n_u + n_p] = np.swapaxes(bp, 1, 2)
    K[:, n_u + n_p :, :n_u] = flux
    K[:, :n_u, n_u + n_p :] = np.swapaxes(flux, 1, 2)
    rhs = np.zeros((mesh.n_cells, n))
    rhs[:, :n_u] = rhs_u
    rhs[:, n_u + n_p :] = rhs_flux
    try:
        x = np.linalg.solve(K, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        cond = np.linalg.cond(K)
        bad = int(np.argmax(~np.isfinite(cond) | (cond > 1e14)))
        raise PostprocessError(f"singular local postprocessing system on cell {bad}") from None
    coeffs = x[:, :n_u].reshape(mesh.n_cells, 2, nq_scalar)
    del cells
    return PostprocessedVelocity(mesh, k, coeffs, x[:, n_u : n_u + n_p])


def _chunks(n):
    for start in range(0, n, CHUNK):
        yield np.arange(start, min(start + CHUNK, n))


def error_norms(solution, upost, exact, rt_interpolant=None) -> dict:
    """All error quantities of one refinement level.

    ``rt_interpolant`` is ``(space, coefficients)`` of ``I_{k,k} u``; it is
    built here when omitted.
    """
    from .spaces import SpaceConfig, VelocitySpace

    disc = solution.disc
    mesh, k = disc.mesh, disc.config.k
    if rt_interpolant is None:
        rt = disc.velocity if disc.velocity.rt else VelocitySpace(mesh, SpaceConfig(k, k))
        rt_interpolant = (rt, rt.interpolate(exact.u))
    rt, iu = rt_interpolant
    q_sigma = disc.stress.l2_project(exact.sigma)

    rule = triangle_rule(ERROR_DEGREE)
    sums = dict.fromkeys(("u", "sigma", "p", "Iu", "Qsigma", "upost", "grad_upost"), 0.0)
    for cells in _chunks(mesh.n_cells):
        pts, wts = rule.on_cells(mesh, cells)
        u = exact.u(pts)
        uh, _, _ = disc.velocity.evaluate(solution.u, pts, cells)
        sums["u"] += np.sum(wts * np.sum((u - uh) ** 2, -1))
        sig = exact.sigma(pts)
        sh = disc.stress.evaluate(solution.sigma, pts, cells)
        sums["sigma"] += np.sum(wts * np.sum((sig - sh) ** 2, (-1, -2)))
        qs = disc.stress.evaluate(q_sigma, pts, cells)
        sums["Qsigma"] += np.sum(wts * np.sum((qs - sh) ** 2, (-1, -2)))
        ph = disc.pressure.evaluate(solution.p, pts, cells)
        sums["p"] += np.sum(wts * (exact.p(pts) - ph) ** 2)
        ui, _, _ = rt.evaluate(iu, pts, cells)
        sums["Iu"] += np.sum(wts * np.sum((ui - uh) ** 2, -1))
        if upost is not None:
            us, gs = upost.evaluate(pts, cells)
            sums["upost"] += np.sum(wts * np.sum((u - us) ** 2, -1))
            sums["grad_upost"] += np.sum(wts * np.sum((exact.grad_u(pts) - gs) ** 2, (-1, -2)))

    face = _tn_face_term(solution, exact)
    out = {
        "h": mesh.h,
        "err_u": math.sqrt(sums["u"]),
        "err_sigma": math.sqrt(sums["sigma"]),
        "err_sigma_0h": math.sqrt(sums["sigma"] + face),
        "err_p": math.sqrt(sums["p"]),
        "err_Iu": math.sqrt(sums["Iu"]),
        "err_Qsigma": math.sqrt(sums["Qsigma"]),
        "err_upost": math.sqrt(sums["upost"]) if upost is not None else float("nan"),
        "err_grad_upost": math.sqrt(sums["grad_upost"]) if upost is not None else float("nan"),
    }
    return out


def _tn_face_term(solution, exact):
    """``sum_F h_F || Pi_F (sigma - sigma_h) n ||_F^2`` from the lower-indexed cell."""
    disc = solution.disc
    mesh = disc.mesh
    rule = edge_rule(ERROR_DEGREE)
    pts, wts = rule.on_edges(mesh)
    owner = mesh.edge_cells[:, 0]
    sh = disc.stress.evaluate(solution.sigma, pts, owner)
    diff = exact.sigma(pts) - sh
    tn = np.einsum("ei,epij,ej->ep", mesh.edge_tangents, diff, mesh.edge_normals)
    return float(np.sum(mesh.h_F[:, None] * wts * tn**2))


def observed_orders(errors):
    """``log2(e(h) / e(h/2))`` between consecutive levels; first entry ``nan``."""
    errors = np.asarray(errors, dtype=float)
    out = np.full(errors.shape, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[1:] = np.log2(errors[:-1] / errors[1:])
    return out
