"""Executable invariants shared by the CLI property suite and the tests.

Every check returns a :class:`Check` holding the worst observed value and the
tolerance it is compared against.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .exact import PolyField, random_stream_solution
from .mesh import Mesh, build_uniform_unit_square
from .polybasis import dim_p, triangle_rule
from .postproc import postprocess
from .spaces import PressureSpace, SpaceConfig, StressSpace, VelocitySpace
from .system import Discretization, solve_stokes
from .weakops import (
    assemble_A,
    local_multiplier_moments,
    weak_devgrad_of_fields,
)

N_RANDOM = 20


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tolerance)

    def to_dict(self):
        return {**asdict(self), "passed": self.passed}


def _rel(diff, ref):
    return float(diff) / max(float(ref), 1e-300)


# mesh -----------------------------------------------------------------------


def check_mesh(mesh: Mesh) -> Check:
    """Euler characteristic, edge incidences and area sum (0 when consistent)."""
    bad = abs(mesh.n_vertices - mesh.n_edges + mesh.n_cells - 1)
    inner = mesh.edge_cells[:, 1] >= 0
    bad += int(np.sum(inner == mesh.boundary_edges))
    counts = np.bincount(mesh.cell_edges.ravel(), minlength=mesh.n_edges)
    bad += int(np.sum(counts != np.where(mesh.boundary_edges, 1, 2)))
    return Check("mesh_topology", bad + abs(float(np.sum(mesh.areas)) - 1.0), 1e-12)


def check_quadrature(exactness: int = 10) -> Check:
    """Reference-triangle monomial integrals ``a! b! / (a + b + 2)!``."""
    from math import factorial

    rule = triangle_rule(exactness)
    x, y = rule.points[:, 0], rule.points[:, 1]
    worst = 0.0
    for a in range(exactness + 1):
        for b in range(exactness + 1 - a):
            exact = factorial(a) * factorial(b) / factorial(a + b + 2)
            worst = max(worst, abs(rule.weights @ (x**a * y**b) - exact) / exact)
    return Check("quadrature_exactness", worst, 1e-12, f"exactness {exactness}")


# spaces ---------------------------------------------------------------------


def check_unisolvence(space: VelocitySpace) -> Check:
    eye = np.eye(space.n_loc)
    err = np.max(np.abs(np.einsum("cij,cjk->cik", space.dof_matrix, space.coef) - eye))
    return Check("velocity_unisolvence", float(err), 1e-10, space.config.family)


def check_normal_continuity(space: VelocitySpace, rng) -> Check:
    """``u . n_F`` of a random global field agrees from both sides of every interior edge."""
    from .polybasis import edge_rule

    mesh = space.mesh
    u = rng.standard_normal(space.n_dofs) * space.free
    inner = mesh.interior_edges
    pts, _ = edge_rule(2 * space.k + 2).on_edges(mesh, inner)
    sides = []
    for side in (0, 1):
        cells = mesh.edge_cells[inner, side]
        vals, _, _ = space.evaluate(u, pts, cells)
        sides.append(np.einsum("epd,ed->ep", vals, mesh.edge_normals[inner]))
    err = np.max(np.abs(sides[0] - sides[1]), initial=0.0)
    return Check("normal_continuity", _rel(err, np.max(np.abs(u))), 1e-10, space.config.family)


def check_commuting_div(space: VelocitySpace, rng, n_random: int = N_RANDOM) -> Check:
    """``div(I v) = Q_ell div v`` for random polynomial ``v``."""
    mesh = space.mesh
    pressure = PressureSpace(mesh, space.ell)
    pts, wts = triangle_rule(2 * space.k + 4).on_cells(mesh)
    worst = 0.0
    for _ in range(n_random):
        v = PolyField.random(rng, space.k + 2)
        _, div_iv, _ = space.evaluate(space.interpolate(v), pts)
        q = pressure.evaluate(pressure.project(v.div), pts)
        err = np.sqrt(np.sum(wts * (div_iv - q) ** 2))
        ref = np.sqrt(np.sum(wts * q**2))
        worst = max(worst, _rel(err, ref))
    return Check("commuting_div", worst, 1e-9, space.config.family)


def _dev(g):
    tr = 0.5 * (g[..., 0, 0] + g[..., 1, 1])
    return g - tr[..., None, None] * np.eye(2)


def _mass_norm(stress: StressSpace, coeffs):
    return float(np.sqrt(np.einsum("ci,cij,cj->", coeffs, stress.mass, coeffs)))


def check_weak_devgrad(stress: StressSpace, rng, n_random: int = N_RANDOM) -> Check:
    """``dev grad_w(v, v . t) = Q_k dev grad v`` cell by cell for smooth ``v``."""
    worst = 0.0
    for _ in range(n_random):
        v = PolyField.random(rng, stress.k + 3)
        lhs = weak_devgrad_of_fields(stress, v, mu=v)
        rhs = stress.l2_project(lambda pts: _dev(v.grad(pts)))
        worst = max(worst, _rel(_mass_norm(stress, lhs - rhs), _mass_norm(stress, rhs)))
    return Check("weak_devgrad_identity", worst, 1e-9, f"k={stress.k}")


def check_discrete_weak_devgrad(disc: Discretization, rng, n_random: int = N_RANDOM) -> Check:
    """``dev grad_w(I v, Q lambda) = Q_k dev grad v`` with the Raviart-Thomas interpolant."""
    if not disc.velocity.rt:
        raise ValueError("identity requires the Raviart-Thomas velocity space")
    worst = 0.0
    for _ in range(n_random):
        v = PolyField.random(rng, disc.config.k + 3)
        x = np.concatenate(
            [disc.velocity.apply_dofs(v), local_multiplier_moments(disc.multiplier, v)], axis=1
        )
        lhs = np.einsum("cil,cl->ci", disc.local.G, x)
        rhs = disc.stress.l2_project(lambda pts: _dev(v.grad(pts)))
        worst = max(worst, _rel(_mass_norm(disc.stress, lhs - rhs), _mass_norm(disc.stress, rhs)))
    return Check("discrete_weak_devgrad_identity", worst, 1e-9, disc.config.family)


def check_A(disc: Discretization) -> Check:
    """Symmetry and positive semi-definiteness of the weak gradient form."""
    A = assemble_A(disc.velocity, disc.multiplier, disc.stress, local=disc.local).toarray()
    scale = np.max(np.abs(A))
    sym = np.max(np.abs(A - A.T)) / scale
    neg = max(-np.min(np.linalg.eigvalsh(0.5 * (A + A.T))), 0.0) / scale
    return Check("A_symmetric_psd", float(max(sym, neg)), 1e-10, disc.config.family)


# solutions ------------------------------------------------------------------


def divergence_ratio(solution, degree: int = 10) -> float:
    """``max |div u_h| / (max |u_h| / h)`` over volume quadrature points."""
    pts, _ = triangle_rule(degree).on_cells(solution.mesh)
    vals, div, _ = solution.disc.velocity.evaluate(solution.u, pts)
    scale = np.max(np.linalg.norm(vals, axis=-1)) / solution.mesh.h
    return _rel(np.max(np.abs(div)), scale)


def tn_jump_ratio(solution) -> float:
    """Largest interior-edge jump of the ``t^T sigma_h n_F`` moments, relative to the largest moment."""
    disc = solution.disc
    mesh, k = disc.mesh, disc.config.k
    d = disc.stress.tn_matrix()[:, : 3 * (k + 1), :]
    mom = np.einsum("cij,cj->ci", d, solution.sigma).reshape(mesh.n_cells, 3, k + 1)
    inner = mesh.interior_edges
    vals = []
    for side in (0, 1):
        cells = mesh.edge_cells[inner, side]
        local = np.argmax(mesh.cell_edges[cells] == inner[:, None], axis=1)
        vals.append(mom[cells, local])
    jump = np.max(np.abs(vals[0] - vals[1]), initial=0.0)
    return _rel(jump, np.max(np.abs(mom)))


def pressure_mean_ratio(solution) -> float:
    disc = solution.disc
    mean = float(disc.pressure.means() @ solution.p)
    norm = float(np.sqrt(solution.p @ (_block_mass(disc.pressure) @ solution.p)))
    area = float(np.sum(solution.mesh.areas))
    return _rel(abs(mean), norm * np.sqrt(area))


def _block_mass(pressure: PressureSpace):
    import scipy.linalg

    return scipy.linalg.block_diag(*pressure.mass())


def superconvergence_identity_error(solution, exact, rt_disc: Discretization | None = None) -> float:
    """Relative gap between ``||G(I u - u_h, Q lambda - lambda_h)||`` and ``||Q_k sigma - sigma_h||``."""
    disc = solution.disc
    if rt_disc is None:
        rt_disc = disc if disc.velocity.rt else Discretization.build(
            disc.mesh, SpaceConfig(disc.config.k, disc.config.k)
        )
    rt = rt_disc.velocity
    mesh = disc.mesh

    def uh(pts):
        flat = pts.reshape(mesh.n_cells, -1, 2)
        vals, _, _ = disc.velocity.evaluate(solution.u, flat)
        return vals.reshape(pts.shape)

    du = rt.apply_dofs(exact.u) - rt.apply_dofs(uh)
    lam_h = np.concatenate([solution.lam, [0.0]])[disc.multiplier.local_dofs]
    dl = local_multiplier_moments(disc.multiplier, exact.u) - lam_h
    lhs = _mass_norm(disc.stress, np.einsum("cil,cl->ci", rt_disc.local.G, np.concatenate([du, dl], 1)))
    rhs = _mass_norm(disc.stress, disc.stress.l2_project(exact.sigma) - solution.sigma)
    return _rel(abs(lhs - rhs), rhs)


def postprocess_checks(solution, upost) -> tuple[float, float]:
    """Worst relative ``div u*`` and worst edge-mean flux mismatch."""
    from .polybasis import edge_rule

    mesh = solution.mesh
    pts, _ = triangle_rule(2 * solution.config.k + 2).on_cells(mesh)
    vals, grads = upost.evaluate(pts)
    div = grads[..., 0, 0] + grads[..., 1, 1]
    scale = np.max(np.linalg.norm(vals, axis=-1)) / mesh.h
    div_ratio = _rel(np.max(np.abs(div)), scale)

    erule = edge_rule(2 * solution.config.k + 2)
    epts, ewts = erule.on_edges(mesh)
    ce = mesh.cell_edges
    cpts = epts[ce].reshape(mesh.n_cells, -1, 2)
    us, _ = upost.evaluate(cpts)
    uh, _, _ = solution.disc.velocity.evaluate(solution.u, cpts)
    diff = np.einsum("cepd,ced->cep", (us - uh).reshape(epts[ce].shape), mesh.edge_normals[ce])
    mean = np.einsum("cep,cep->ce", ewts[ce], diff) / mesh.h_F[ce]
    ref = np.max(np.abs(uh), initial=0.0)
    return div_ratio, _rel(np.max(np.abs(mean)), max(ref, 1e-300))


def zero_forcing_norm(mesh: Mesh, config: SpaceConfig, flip_normals: bool = False) -> float:
    def f(pts):
        return np.zeros(pts.shape)

    sol = solve_stokes(mesh, config, f, flip_normals=flip_normals)
    return float(max(np.max(np.abs(a), initial=0.0) for a in (sol.u, sol.lam, sol.p, sol.sigma)))


def expected_dof_counts(n: int, k: int, ell: int) -> dict:
    """Closed-form global counts on the uniform ``n x n`` square mesh."""
    cells, edges = 2 * n * n, 3 * n * n + 2 * n
    interior_edges = edges - 4 * n
    n_int = dim_p(ell) - 1 + dim_p(k - 2)
    return {
        "velocity": edges * (k + 1) + cells * n_int,
        "velocity_free": interior_edges * (k + 1) + cells * n_int,
        "multiplier": interior_edges * (k + 1),
        "pressure": cells * dim_p(ell),
        "stress": cells * 3 * dim_p(k),
    }


def check_dof_counts(disc: Discretization, n: int) -> Check:
    exp = expected_dof_counts(n, disc.config.k, disc.config.ell)
    got = {
        "velocity": disc.velocity.n_dofs,
        "velocity_free": disc.velocity.n_free,
        "multiplier": disc.multiplier.n_dofs,
        "pressure": disc.pressure.n_dofs,
        "stress": disc.mesh.n_cells * disc.stress.n_loc,
    }
    bad = sum(got[key] != exp[key] for key in exp)
    return Check("dof_counts", float(bad), 0.0, f"{disc.config.family} n={n}")


# suite ----------------------------------------------------------------------


def _merge(checks: list[Check]) -> list[Check]:
    """Keep the worst value per invariant name; details list every configuration."""
    out: dict[str, Check] = {}
    for c in checks:
        if c.name not in out:
            out[c.name] = Check(c.name, c.value, c.tolerance, c.detail)
            continue
        cur = out[c.name]
        cur.value = max(cur.value, c.value)
        cur.detail = ", ".join(filter(None, [cur.detail, c.detail]))
    return list(out.values())


def run_properties(sizes=(2, 4), degrees=(0, 1), flip_normals: bool = False, seed: int = 0,
                   n_random: int = N_RANDOM) -> list[Check]:
    """Evaluate every invariant on all ``(n, k, ell)`` combinations."""
    rng = np.random.default_rng(seed)
    checks = [check_quadrature()]
    for n in sizes:
        mesh = build_uniform_unit_square(n)
        checks.append(check_mesh(mesh))
        for k in degrees:
            stress = StressSpace(mesh, k)
            checks.append(check_weak_devgrad(stress, rng, n_random))
            for ell in sorted({k, k - 1} - {-1}, reverse=True):
                config = SpaceConfig(k, ell)
                tag = f"{config.family} n={n}"
                disc = Discretization.build(mesh, config, flip_normals=flip_normals)
                checks += [
                    check_dof_counts(disc, n),
                    check_unisolvence(disc.velocity),
                    check_normal_continuity(disc.velocity, rng),
                    check_commuting_div(disc.velocity, rng, n_random),
                    check_A(disc),
                ]
                if disc.velocity.rt:
                    checks.append(check_discrete_weak_devgrad(disc, rng, n_random))
                exact = random_stream_solution(rng)
                sol = solve_stokes(mesh, config, exact.f, disc=disc)
                upost = postprocess(sol)
                div_post, flux_post = postprocess_checks(sol, upost)
                checks += [
                    Check("divergence_free", divergence_ratio(sol), 1e-10, tag),
                    Check("tn_continuity", tn_jump_ratio(sol), 1e-9, tag),
                    Check("pressure_mean_zero", pressure_mean_ratio(sol), 1e-10, tag),
                    Check("galerkin_residual", sol.residual, 1e-10, tag),
                    Check("postprocess_divergence_free", div_post, 1e-9, tag),
                    Check("postprocess_flux_match", flux_post, 1e-10, tag),
                    Check("zero_forcing_uniqueness", zero_forcing_norm(mesh, config, flip_normals),
                          1e-12, tag),
                ]
                if disc.velocity.rt:
                    checks.append(Check(
                        "superconvergence_identity",
                        superconvergence_identity_error(sol, exact, disc),
                        1e-9,
                        tag,
                    ))
    return _merge(checks)
