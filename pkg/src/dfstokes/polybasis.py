"""Scaled monomial bases, the traceless tensor frame and quadrature rules."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre
from scipy.special import roots_jacobi

#: Constant traceless frame E1 = diag(1, -1), E2 = e1 e2^T, E3 = e2 e1^T.
FRAME = np.array(
    [
        [[1.0, 0.0], [0.0, -1.0]],
        [[0.0, 1.0], [0.0, 0.0]],
        [[0.0, 0.0], [1.0, 0.0]],
    ]
)
FRAME.setflags(write=False)
#: E_i : E_i for the frame above; the frame is orthogonal.
FRAME_NORMS = np.einsum("iab,iab->i", FRAME, FRAME)

#: Exactness of the volume rule used for all error integrals.
ERROR_DEGREE = 18


def dim_p(k: int) -> int:
    """Dimension of scalar polynomials of total degree <= k in 2D."""
    return 0 if k < 0 else (k + 1) * (k + 2) // 2


@lru_cache(maxsize=None)
def exponents(k: int) -> np.ndarray:
    """Monomial exponents ``(a, b)`` of degree <= k, grouped by degree."""
    out = [(d - b, b) for d in range(k + 1) for b in range(d + 1)]
    arr = np.array(out, dtype=np.int64).reshape(-1, 2)
    arr.setflags(write=False)
    return arr


def monomials(xi: np.ndarray, k: int, derivatives: bool = True):
    """Evaluate ``xi1^a xi2^b`` for all exponents of degree <= k.

    Parameters
    ----------
    xi : (..., 2) array of scaled coordinates
    k : degree

    Returns
    -------
    values : (..., n) array
    grads : (..., n, 2) array of derivatives with respect to ``xi``
        (only if ``derivatives``)
    """
    xi = np.asarray(xi, dtype=float)
    exps = exponents(k)
    pw1 = xi[..., 0, None] ** np.arange(k + 1)
    pw2 = xi[..., 1, None] ** np.arange(k + 1)
    a, b = exps[:, 0], exps[:, 1]
    values = pw1[..., a] * pw2[..., b]
    if not derivatives:
        return values
    am = np.maximum(a - 1, 0)
    bm = np.maximum(b - 1, 0)
    d1 = a * pw1[..., am] * pw2[..., b]
    d2 = b * pw1[..., a] * pw2[..., bm]
    return values, np.stack([d1, d2], axis=-1)


def scaled_coordinates(points, centers, scales):
    """``(x - c) / h`` with broadcasting over leading cell axes."""
    return (np.asarray(points) - centers) / scales


def eval_scalar_basis(mesh, cell: int, k: int, points):
    """Values and physical gradients of the scaled monomials on one cell.

    Returns arrays of shape ``(npoints, dim P_k)`` and ``(npoints, dim P_k, 2)``.
    """
    if k < 0:
        raise ValueError("degree must be non-negative")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    h = mesh.h_T[cell]
    vals, grads = monomials(scaled_coordinates(points, mesh.centroids[cell], h), k)
    return vals, grads / h


@dataclass(frozen=True)
class QuadratureRule:
    """Reference quadrature rule.

    Triangle rules live on ``{x, y >= 0, x + y <= 1}`` (weights sum to 1/2);
    edge rules on ``[0, 1]`` (weights sum to 1).
    """

    points: np.ndarray
    weights: np.ndarray
    exactness_degree: int

    def on_cells(self, mesh, cells=None):
        """Map to physical cells: points ``(C, nq, 2)``, weights ``(C, nq)``."""
        cells = slice(None) if cells is None else cells
        v = mesh.vertices[mesh.cells[cells]]
        p0 = v[:, 0, None, :]
        e1 = (v[:, 1] - v[:, 0])[:, None, :]
        e2 = (v[:, 2] - v[:, 0])[:, None, :]
        pts = p0 + self.points[None, :, 0, None] * e1 + self.points[None, :, 1, None] * e2
        wts = 2.0 * mesh.areas[cells][:, None] * self.weights[None, :]
        return pts, wts

    def on_edges(self, mesh, edges=None):
        """Map to physical edges oriented from lower to higher vertex index."""
        edges = slice(None) if edges is None else edges
        ab = mesh.vertices[mesh.edges[edges]]
        s = self.points[None, :, None]
        pts = ab[:, 0, None, :] * (1.0 - s) + ab[:, 1, None, :] * s
        wts = mesh.h_F[edges][:, None] * self.weights[None, :]
        return pts, wts


@lru_cache(maxsize=None)
def triangle_rule(exactness: int) -> QuadratureRule:
    """Collapsed (Duffy) Gauss-Jacobi x Gauss-Legendre rule on the reference triangle."""
    exactness = max(int(exactness), 0)
    m = exactness // 2 + 1
    ta, wa = legendre.leggauss(m)
    tb, wb = roots_jacobi(m, 1.0, 0.0)
    a = 0.5 * (ta + 1.0)
    b = 0.5 * (tb + 1.0)
    # x = a (1 - b), y = b, jacobian (1 - b) absorbed into the Jacobi weight
    x = np.outer(1.0 - b, a)
    y = np.repeat(b[:, None], m, axis=1)
    w = np.outer(wb, wa) / 8.0
    pts = np.stack([x.ravel(), y.ravel()], axis=1)
    pts.setflags(write=False)
    w = w.ravel()
    w.setflags(write=False)
    return QuadratureRule(pts, w, 2 * m - 1)


@lru_cache(maxsize=None)
def edge_rule(exactness: int) -> QuadratureRule:
    """Gauss-Legendre rule on ``[0, 1]`` with ``ceil((exactness + 1) / 2)`` points."""
    m = max(int(exactness), 0) // 2 + 1
    t, w = legendre.leggauss(m)
    pts = 0.5 * (t + 1.0)
    w = 0.5 * w
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(pts, w, 2 * m - 1)


def edge_legendre(s, k: int, lengths):
    """L2(F)-orthonormal Legendre polynomials of degree <= k on edges.

    ``s`` are reference parameters in ``[0, 1]`` (shape ``(nq,)``), ``lengths``
    the edge lengths (shape ``(E,)``).  Returns ``(E, nq, k + 1)``.
    """
    base = legendre.legvander(2.0 * np.asarray(s) - 1.0, k) * np.sqrt(2 * np.arange(k + 1) + 1.0)
    return base[None, :, :] / np.sqrt(np.asarray(lengths, dtype=float))[:, None, None]
