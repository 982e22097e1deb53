"""Manufactured Stokes solutions ``-lap u - grad p = f``, ``div u = 0``.

Callables take points of shape ``(..., 2)``; ``grad_u`` returns
``(..., 2, 2)`` with ``grad_u[..., i, j] = d u_i / d x_j``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.signal import convolve2d


@dataclass(frozen=True)
class ExactSolution:
    name: str
    u: Callable
    grad_u: Callable
    p: Callable
    f: Callable
    #: polynomial degrees of u and p, used to pick quadrature
    degree_u: int
    degree_p: int

    def sigma(self, pts):
        """``dev grad u``; equals ``grad u`` because ``div u = 0``."""
        g = self.grad_u(pts)
        tr = 0.5 * (g[..., 0, 0] + g[..., 1, 1])
        g = g.copy()
        g[..., 0, 0] -= tr
        g[..., 1, 1] -= tr
        return g

    def div_u(self, pts):
        g = self.grad_u(pts)
        return g[..., 0, 0] + g[..., 1, 1]


# psi = g(x) g(y) with g(s) = s^2 (s - 1)^2
def _g0(s):
    return s**2 * (s - 1.0) ** 2


def _g1(s):
    return 4 * s**3 - 6 * s**2 + 2 * s


def _g2(s):
    return 12 * s**2 - 12 * s + 2


def _g3(s):
    return 24 * s - 12


def _ex1_u(pts):
    x, y = pts[..., 0], pts[..., 1]
    return np.stack([_g0(x) * _g1(y), -_g1(x) * _g0(y)], axis=-1)


def _ex1_grad(pts):
    x, y = pts[..., 0], pts[..., 1]
    row0 = np.stack([_g1(x) * _g1(y), _g0(x) * _g2(y)], axis=-1)
    row1 = np.stack([-_g2(x) * _g0(y), -_g1(x) * _g1(y)], axis=-1)
    return np.stack([row0, row1], axis=-2)


def _ex1_p(pts):
    x, y = pts[..., 0], pts[..., 1]
    return -(x**5) - y**5 + 1.0 / 3.0


def _ex1_f(pts):
    x, y = pts[..., 0], pts[..., 1]
    lap_u1 = _g2(x) * _g1(y) + _g0(x) * _g3(y)
    lap_u2 = -_g3(x) * _g0(y) - _g1(x) * _g2(y)
    return np.stack([-lap_u1 + 5 * x**4, -lap_u2 + 5 * y**4], axis=-1)


def example_5_1() -> ExactSolution:
    """``u = curl psi`` with ``psi = x^2 (x-1)^2 y^2 (y-1)^2``, ``p = -x^5 - y^5 + 1/3``."""
    return ExactSolution("ex1", _ex1_u, _ex1_grad, _ex1_p, _ex1_f, degree_u=7, degree_p=5)


class PolyField:
    """Vector polynomial in global coordinates; ``coeffs[d][i, j]`` multiplies ``x^i y^j``."""

    def __init__(self, coeffs):
        self.coeffs = [np.asarray(c, dtype=float) for c in coeffs]

    def __call__(self, pts):
        x, y = pts[..., 0], pts[..., 1]
        return np.stack([P.polyval2d(x, y, c) for c in self.coeffs], axis=-1)

    def derivative(self, axis):
        return PolyField([P.polyder(c, axis=axis) for c in self.coeffs])

    def grad(self, pts):
        gx, gy = self.derivative(0)(pts), self.derivative(1)(pts)
        return np.stack([gx, gy], axis=-1)

    def div(self, pts):
        return self.derivative(0)(pts)[..., 0] + self.derivative(1)(pts)[..., 1]

    def laplacian(self):
        xx = [P.polyder(c, 2, axis=0) for c in self.coeffs]
        yy = [P.polyder(c, 2, axis=1) for c in self.coeffs]
        n = max(a.shape[0] for a in xx + yy), max(a.shape[1] for a in xx + yy)
        out = []
        for a, b in zip(xx, yy):
            c = np.zeros(n)
            c[: a.shape[0], : a.shape[1]] += a
            c[: b.shape[0], : b.shape[1]] += b
            out.append(c)
        return PolyField(out)

    @classmethod
    def random(cls, rng, degree: int):
        """Random coefficients of total degree ``degree`` per component."""
        mask = np.add.outer(np.arange(degree + 1), np.arange(degree + 1)) <= degree
        return cls([rng.standard_normal(mask.shape) * mask for _ in range(2)])


def random_stream_solution(rng, degree: int = 2) -> ExactSolution:
    """``u = curl(b q)`` with the square bubble ``b`` and random ``q`` of the given degree; ``p = 0``.

    ``u`` vanishes on the boundary of the unit square and is divergence free.
    """
    g = np.array([0.0, 0.0, 1.0, -2.0, 1.0])
    mask = np.add.outer(np.arange(degree + 1), np.arange(degree + 1)) <= degree
    psi = convolve2d(np.outer(g, g), rng.standard_normal(mask.shape) * mask)
    u = PolyField([P.polyder(psi, axis=1), -P.polyder(psi, axis=0)])
    lap = u.laplacian()

    def f(pts):
        return -lap(pts)

    return ExactSolution("random", u, u.grad, _zero, f, degree_u=degree + 7, degree_p=0)


def _zero_vec(pts):
    return np.zeros(np.shape(pts)[:-1] + (2,))


def _zero_ten(pts):
    return np.zeros(np.shape(pts)[:-1] + (2, 2))


def _zero(pts):
    return np.zeros(np.shape(pts)[:-1])


def zero_solution() -> ExactSolution:
    return ExactSolution("zero", _zero_vec, _zero_ten, _zero, _zero_vec, 0, 0)


EXAMPLES: dict[str, Callable[[], ExactSolution]] = {
    "ex1": example_5_1,
    "zero": zero_solution,
}


def get_example(name: str) -> ExactSolution:
    try:
        return EXAMPLES[name]()
    except KeyError:
        raise KeyError(f"unknown example {name!r}; known: {sorted(EXAMPLES)}") from None


def project_pressure(p, pressure_space, degree: int = 16):
    """Elementwise ``Q_ell p`` coefficients."""
    return pressure_space.project(p, degree)


def l2_project_stress(sigma, stress_space, degree: int = 16):
    """Elementwise ``Q_k sigma`` coefficients in the traceless frame."""
    return stress_space.l2_project(sigma, degree)
