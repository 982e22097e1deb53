"""Saddle-point assembly and solve for the mixed Stokes method.

Unknown layout: free velocity DoFs, interior-edge multipliers, pressure
coefficients, and one scalar multiplier enforcing a zero pressure mean::

    [ A    B^T  0 ] [u, lambda]   [F]
    [ B    0    m ] [p       ] = [0]
    [ 0    m^T  0 ] [c       ]   [0]
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Mesh
from .spaces import MultiplierSpace, PressureSpace, SpaceConfig, StressSpace, VelocitySpace
from .weakops import LocalWeakGrad, assemble_A, assemble_B, assemble_load, local_weak_devgrad

log = logging.getLogger(__name__)


REFINEMENT_STEPS = 2


class SolverError(RuntimeError):
    pass


@dataclass
class Discretization:
    """All spaces of one (mesh, k, ell) configuration plus local weak gradients."""

    mesh: Mesh
    config: SpaceConfig
    velocity: VelocitySpace
    multiplier: MultiplierSpace
    pressure: PressureSpace
    stress: StressSpace
    local: LocalWeakGrad
    flip_normals: bool = False

    @classmethod
    def build(cls, mesh: Mesh, config: SpaceConfig, flip_normals: bool = False):
        velocity = VelocitySpace(mesh, config)
        multiplier = MultiplierSpace(mesh, config.k)
        stress = StressSpace(mesh, config.k)
        local = local_weak_devgrad(velocity, multiplier, stress, flip_normals=flip_normals)
        return cls(
            mesh,
            config,
            velocity,
            multiplier,
            PressureSpace(mesh, config.ell),
            stress,
            local,
            flip_normals,
        )

    @property
    def n_uw(self) -> int:
        return self.velocity.n_free + self.multiplier.n_dofs


@dataclass
class SaddleSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    #: start of the (u, lambda), p and mean-multiplier blocks
    offsets: tuple[int, int, int]
    A: sp.csr_matrix = field(repr=False)
    B: sp.csr_matrix = field(repr=False)
    mean: np.ndarray = field(repr=False)


@dataclass
class StokesSolution:
    disc: Discretization
    #: full-length velocity coefficients (constrained entries zero)
    u: np.ndarray
    lam: np.ndarray
    p: np.ndarray
    #: per-cell traceless frame coefficients of sigma_h
    sigma: np.ndarray
    residual: float

    @property
    def mesh(self):
        return self.disc.mesh

    @property
    def config(self):
        return self.disc.config

    def local_uw(self):
        """Per-cell (velocity DoFs, multiplier coefficients on all 3 edges)."""
        d = self.disc
        lam = np.concatenate([self.lam, [0.0]])
        return np.concatenate([self.u[d.velocity.local_dofs], lam[d.multiplier.local_dofs]], axis=1)


def assemble_system(disc: Discretization, f) -> SaddleSystem:
    n_uw = disc.n_uw
    A = assemble_A(disc.velocity, disc.multiplier, disc.stress, local=disc.local)
    B = assemble_B(disc.velocity, disc.pressure, n_cols=n_uw)
    mean = disc.pressure.means()
    n_p = disc.pressure.n_dofs
    m = sp.csr_matrix(mean[:, None])
    K = sp.bmat(
        [[A, B.T, None], [B, None, m], [None, m.T, None]],
        format="csr",
    )
    rhs = np.zeros(K.shape[0])
    rhs[:n_uw] = assemble_load(disc.velocity, f, n_rows=n_uw)
    return SaddleSystem(K, rhs, (0, n_uw, n_uw + n_p), A, B, mean)


def _factor_solve(system: SaddleSystem, pin: int):
    """Solve with pressure DoF ``pin`` fixed to zero instead of the dense mean row.

    The mean row would couple every pressure unknown and ruin the fill;
    the gauge is restored afterwards by shifting constants.
    """
    n = system.offsets[2]
    K = system.matrix[:n, :n].tocsr()
    keep = np.ones(n, dtype=bool)
    keep[pin] = False
    K = K[keep][:, keep].tocsc()
    lu = spla.splu(K, permc_spec="COLAMD")
    b = system.rhs[:n][keep]
    y = lu.solve(b)
    # iterative refinement: the constraint rows carry the divergence, whose
    # accuracy matters far below the global residual level
    for _ in range(REFINEMENT_STEPS):
        y += lu.solve(b - K @ y)
    x = np.zeros(n + 1)
    x[np.flatnonzero(keep)] = y
    return x


def recover_stress(disc: Discretization, u: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """``sigma_h = dev grad_w(u_h, lambda_h)`` per cell."""
    lam_ext = np.concatenate([lam, [0.0]])
    x = np.concatenate([u[disc.velocity.local_dofs], lam_ext[disc.multiplier.local_dofs]], axis=1)
    return np.einsum("cil,cl->ci", disc.local.G, x)


def solve_stokes(mesh: Mesh, config: SpaceConfig, f, disc: Discretization | None = None,
                 flip_normals: bool = False) -> StokesSolution:
    """Assemble and solve; ``f`` is a callable ``f(points) -> (..., 2)``."""
    if disc is None:
        disc = Discretization.build(mesh, config, flip_normals=flip_normals)
    system = assemble_system(disc, f)
    K, rhs = system.matrix, system.rhs
    p0 = system.offsets[1]
    try:
        x = _factor_solve(system, p0 + int(disc.pressure.local_dofs[0, 0]))
    except RuntimeError as exc:
        raise SolverError(
            f"factorization failed for {config.family} on {mesh.n_cells} cells: {exc}"
        ) from exc
    if not np.all(np.isfinite(x)):
        raise SolverError(f"non-finite solution for {config.family} on {mesh.n_cells} cells")
    # shift p by a constant so that its mean vanishes
    c0 = system.offsets[2]
    area = float(np.sum(mesh.areas))
    x[p0 + disc.pressure.local_dofs[:, 0]] -= float(system.mean @ x[p0:c0]) / area
    scale = max(np.linalg.norm(rhs), np.finfo(float).tiny)
    residual = float(np.linalg.norm(K @ x - rhs) / scale) if np.any(rhs) else float(np.linalg.norm(K @ x))

    n_uw = system.offsets[1]
    v = disc.velocity
    u = np.zeros(v.n_dofs)
    u[v.free] = x[: v.n_free]
    lam = x[v.n_free : n_uw].copy()
    p = x[p0:c0].copy()
    sigma = recover_stress(disc, u, lam)
    log.debug("solved %s, %d unknowns, residual %.2e", config.family, K.shape[0], residual)
    return StokesSolution(disc, u, lam, p, sigma, residual)
