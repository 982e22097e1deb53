import numpy as np
import pytest

import dfstokes.system as system_mod
from dfstokes.exact import example_5_1, random_stream_solution
from dfstokes.mesh import build_uniform_unit_square
from dfstokes.postproc import error_norms
from dfstokes.properties import (
    divergence_ratio,
    expected_dof_counts,
    pressure_mean_ratio,
    tn_jump_ratio,
)
from dfstokes.spaces import SpaceConfig
from dfstokes.system import Discretization, SolverError, assemble_system, solve_stokes

CONFIGS = [(0, 0), (1, 0), (1, 1), (2, 1)]


def _zero(p):
    return np.zeros(p.shape)


@pytest.fixture(scope="module", params=CONFIGS, ids=lambda c: f"k{c[0]}l{c[1]}")
def solved(request):
    k, ell = request.param
    ex = random_stream_solution(np.random.default_rng(k + 10 * ell))
    return solve_stokes(build_uniform_unit_square(4), SpaceConfig(k, ell), ex.f)


@pytest.mark.parametrize("k, ell", CONFIGS)
def test_zero_forcing(k, ell):
    sol = solve_stokes(build_uniform_unit_square(2), SpaceConfig(k, ell), _zero)
    for arr in (sol.u, sol.lam, sol.p, sol.sigma):
        assert np.abs(arr).max(initial=0.0) == 0.0


def test_invariants(solved):
    assert divergence_ratio(solved) <= 1e-10
    assert tn_jump_ratio(solved) <= 1e-9
    assert pressure_mean_ratio(solved) <= 1e-10
    assert solved.residual <= 1e-10


def test_sigma_is_traceless(solved):
    pts = solved.mesh.centroids[:, None, :]
    s = solved.disc.stress.evaluate(solved.sigma, pts)
    np.testing.assert_allclose(s[..., 0, 0] + s[..., 1, 1], 0.0, atol=1e-15)


def test_example_tn_jumps_k1():
    sol = solve_stokes(build_uniform_unit_square(8), SpaceConfig(1, 0), example_5_1().f)
    assert tn_jump_ratio(sol) <= 1e-9


@pytest.mark.parametrize("n", [1, 2, 4, 8])
@pytest.mark.parametrize("k, ell", [(0, 0), (1, 0), (1, 1)])
def test_dof_counts(n, k, ell):
    d = Discretization.build(build_uniform_unit_square(n), SpaceConfig(k, ell))
    exp = expected_dof_counts(n, k, ell)
    assert d.velocity.n_dofs == exp["velocity"]
    assert d.velocity.n_free == exp["velocity_free"]
    assert d.multiplier.n_dofs == exp["multiplier"]
    assert d.pressure.n_dofs == exp["pressure"]
    system = assemble_system(d, _zero)
    size = exp["velocity_free"] + exp["multiplier"] + exp["pressure"] + 1
    assert system.matrix.shape == (size, size)


def test_saddle_matrix_symmetric_with_mean_row():
    d = Discretization.build(build_uniform_unit_square(4), SpaceConfig(1, 0))
    s = assemble_system(d, example_5_1().f)
    K = s.matrix
    assert abs(K - K.T).max() <= 1e-12 * abs(K).max()
    np.testing.assert_allclose(K[-1, s.offsets[1] : s.offsets[2]].toarray().ravel(), s.mean)
    assert np.all(s.rhs[s.offsets[1] :] == 0)


def test_reference_value_bdm1():
    ex = example_5_1()
    errs = []
    for n in (8, 16):
        sol = solve_stokes(build_uniform_unit_square(n), SpaceConfig(1, 0), ex.f)
        errs.append(error_norms(sol, None, ex)["err_u"])
    assert errs[1] == pytest.approx(8.382e-05, rel=1e-2)
    assert np.log2(errs[0] / errs[1]) == pytest.approx(1.98, abs=0.05)


def test_factorization_failure_reported(monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("Factor is exactly singular")

    monkeypatch.setattr(system_mod.spla, "splu", boom)
    with pytest.raises(SolverError, match="BDM1 on 8 cells"):
        solve_stokes(build_uniform_unit_square(2), SpaceConfig(1, 0), _zero)
