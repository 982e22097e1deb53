"""Acceptance criteria 1-9.

Each check prints ``criterion N [label]: PASS|FAIL ...`` and is recorded for
the per-criterion summary printed at the end of the session.
"""
import numpy as np
import pytest

from dfstokes.cli import RunConfig, run_convergence_study
from dfstokes.exact import example_5_1, random_stream_solution
from dfstokes.mesh import build_uniform_unit_square
from dfstokes.postproc import ERROR_COLUMNS, error_norms, observed_orders, postprocess
from dfstokes.properties import (
    check_commuting_div,
    check_discrete_weak_devgrad,
    check_weak_devgrad,
    divergence_ratio,
    superconvergence_identity_error,
    tn_jump_ratio,
    zero_forcing_norm,
)
from dfstokes.spaces import SpaceConfig, StressSpace, VelocitySpace
from dfstokes.system import Discretization, solve_stokes

LEVELS = range(3, 8)
VALUE_RTOL = 0.01
ORDER_ATOL = 0.05

# reference errors on levels 3..7 and observed orders between consecutive levels
REF_SOLVE = {
    (0, 0): {
        "err_u": [2.988e-03, 1.284e-03, 5.988e-04, 2.907e-04, 1.436e-04],
        "err_sigma": [3.103e-02, 1.677e-02, 8.700e-03, 4.440e-03, 2.247e-03],
        "err_p": [7.810e-02, 3.914e-02, 1.963e-02, 9.840e-03, 4.931e-03],
    },
    (1, 0): {
        "err_u": [3.296e-04, 8.382e-05, 2.104e-05, 5.266e-06, 1.317e-06],
        "err_sigma": [2.447e-03, 6.305e-04, 1.597e-04, 4.016e-05, 1.007e-05],
        "err_p": [7.453e-02, 3.760e-02, 1.880e-02, 9.428e-03, 4.715e-03],
    },
}
REF_SOLVE_ORDERS = {
    (0, 0): {
        "err_u": [1.22, 1.10, 1.04, 1.02],
        "err_sigma": [0.89, 0.95, 0.97, 0.98],
        "err_p": [1.00, 1.00, 1.00, 1.00],
    },
    (1, 0): {
        "err_u": [1.98, 1.99, 2.00, 2.00],
        "err_sigma": [1.96, 1.98, 1.99, 2.00],
        "err_p": [0.99, 1.00, 1.00, 1.00],
    },
}
REF_POST = {
    (0, 0): {
        "err_upost": [1.233e-03, 3.277e-04, 8.353e-05, 2.099e-05, 5.256e-06],
        "err_grad_upost": [2.890e-02, 1.481e-02, 7.453e-03, 3.733e-03, 1.867e-03],
    },
    (1, 0): {
        "err_upost": [3.296e-05, 4.167e-06, 5.264e-07, 6.625e-08, 8.315e-09],
        "err_grad_upost": [2.286e-03, 5.183e-04, 1.463e-04, 3.666e-05, 9.178e-06],
    },
}
REF_POST_ORDERS = {
    (0, 0): {"err_upost": [1.91, 1.97, 1.99, 2.00], "err_grad_upost": [0.96, 0.99, 1.00, 1.00]},
    (1, 0): {"err_upost": [2.98, 2.99, 2.99, 2.99], "err_grad_upost": [1.98, 1.99, 2.00, 2.00]},
}

_STUDIES = {}


def study(k, ell):
    """Example 5.1 on levels 3..7 with postprocessing; solved once per session."""
    if (k, ell) not in _STUDIES:
        ex = example_5_1()
        rows = []
        for level in LEVELS:
            sol = solve_stokes(build_uniform_unit_square(2**level), SpaceConfig(k, ell), ex.f)
            row = error_norms(sol, postprocess(sol), ex)
            row["div_ratio"] = divergence_ratio(sol)
            row["tn_ratio"] = tn_jump_ratio(sol)
            rows.append(row)
        orders = {c: observed_orders([r[c] for r in rows]) for c in ERROR_COLUMNS}
        _STUDIES[k, ell] = rows, orders
    return _STUDIES[k, ell]


def record(log, crit, label, ok, detail):
    log[crit].append((label, bool(ok), detail))
    print(f"criterion {crit} [{label}]: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def _value_cases(table):
    return [(cfg, col, i) for cfg, cols in table.items() for col in cols for i in range(len(LEVELS))]


def _order_cases(table):
    return [(cfg, col, i) for cfg, cols in table.items() for col in cols for i in range(len(LEVELS) - 1)]


def _ids(case):
    (k, ell), col, i = case
    return f"k{k}l{ell}-{col}-{i + LEVELS[0]}"


def _order_ids(case):
    cfg, col, i = case
    return "order-" + _ids((cfg, col, i + 1))


def _check_value(log, crit, table, case):
    cfg, col, i = case
    got = study(*cfg)[0][i][col]
    ref = table[cfg][col][i]
    rel = abs(got - ref) / ref
    record(log, crit, _ids(case), rel <= VALUE_RTOL, f"got {got:.4e} expected {ref:.3e} rel {rel:.2%}")


def _check_order(log, crit, table, case):
    cfg, col, i = case
    got = study(*cfg)[1][col][i + 1]
    ref = table[cfg][col][i]
    record(log, crit, _order_ids(case), abs(got - ref) <= ORDER_ATOL,
           f"got {got:.3f} expected {ref:.2f}")


# criteria 1 and 2: errors of u_h, sigma_h, p_h ------------------------------

SOLVE_VALUES = _value_cases(REF_SOLVE)
SOLVE_ORDERS = _order_cases(REF_SOLVE_ORDERS)


@pytest.mark.parametrize("case", [c for c in SOLVE_VALUES if c[0] == (0, 0)], ids=_ids)
def test_criterion1_values(case, acceptance_log):
    _check_value(acceptance_log, 1, REF_SOLVE, case)


@pytest.mark.parametrize("case", [c for c in SOLVE_ORDERS if c[0] == (0, 0)], ids=_order_ids)
def test_criterion1_orders(case, acceptance_log):
    _check_order(acceptance_log, 1, REF_SOLVE_ORDERS, case)


@pytest.mark.parametrize("case", [c for c in SOLVE_VALUES if c[0] == (1, 0)], ids=_ids)
def test_criterion2_values(case, acceptance_log):
    _check_value(acceptance_log, 2, REF_SOLVE, case)


@pytest.mark.parametrize("case", [c for c in SOLVE_ORDERS if c[0] == (1, 0)], ids=_order_ids)
def test_criterion2_orders(case, acceptance_log):
    _check_order(acceptance_log, 2, REF_SOLVE_ORDERS, case)


# criterion 3: errors of the postprocessed velocity -------------------------


@pytest.mark.parametrize("case", _value_cases(REF_POST), ids=_ids)
def test_criterion3_values(case, acceptance_log):
    _check_value(acceptance_log, 3, REF_POST, case)


@pytest.mark.parametrize("case", _order_cases(REF_POST_ORDERS), ids=_order_ids)
def test_criterion3_orders(case, acceptance_log):
    _check_order(acceptance_log, 3, REF_POST_ORDERS, case)


# criterion 4: superconvergence of I u - u_h -----------------------------------


@pytest.mark.parametrize("k", [0, 1])
def test_criterion4_superconvergence(k, acceptance_log):
    order = study(k, 0)[1]["err_Iu"][-1]
    record(acceptance_log, 4, f"k{k}", order >= k + 1.8, f"order {order:.3f} >= {k + 1.8}")


# criteria 5 and 6: invariants on every tested configuration -------------------

SMALL = [(n, k, ell) for n in (2, 4) for k, ell in [(0, 0), (1, 0), (1, 1)]]


def _small_solution(n, k, ell):
    ex = random_stream_solution(np.random.default_rng(100 * n + 10 * k + ell))
    return solve_stokes(build_uniform_unit_square(n), SpaceConfig(k, ell), ex.f)


@pytest.mark.parametrize("cfg", [(0, 0), (1, 0)], ids=lambda c: f"k{c[0]}l{c[1]}")
def test_criterion5_study(cfg, acceptance_log):
    worst = max(r["div_ratio"] for r in study(*cfg)[0])
    record(acceptance_log, 5, f"ex1-k{cfg[0]}l{cfg[1]}", worst <= 1e-9, f"max |div u_h| h / max |u_h| = {worst:.2e}")


@pytest.mark.parametrize("n, k, ell", SMALL)
def test_criterion5_random(n, k, ell, acceptance_log):
    r = divergence_ratio(_small_solution(n, k, ell))
    record(acceptance_log, 5, f"random-n{n}-k{k}l{ell}", r <= 1e-9, f"ratio {r:.2e}")


@pytest.mark.parametrize("cfg", [(0, 0), (1, 0)], ids=lambda c: f"k{c[0]}l{c[1]}")
def test_criterion6_study(cfg, acceptance_log):
    worst = max(r["tn_ratio"] for r in study(*cfg)[0])
    record(acceptance_log, 6, f"ex1-k{cfg[0]}l{cfg[1]}", worst <= 1e-9, f"relative jump {worst:.2e}")


@pytest.mark.parametrize("n, k, ell", SMALL)
def test_criterion6_random(n, k, ell, acceptance_log):
    r = tn_jump_ratio(_small_solution(n, k, ell))
    record(acceptance_log, 6, f"random-n{n}-k{k}l{ell}", r <= 1e-9, f"relative jump {r:.2e}")


# criterion 7: commuting identities with 20 random inputs ----------------------

N_RANDOM = 20
GRID = [(n, k) for n in (2, 4) for k in (0, 1)]


@pytest.mark.parametrize("n, k", GRID)
def test_criterion7_commuting_div(n, k, acceptance_log):
    mesh = build_uniform_unit_square(n)
    rng = np.random.default_rng(n + k)
    for ell in sorted({k, k - 1} - {-1}):
        c = check_commuting_div(VelocitySpace(mesh, SpaceConfig(k, ell)), rng, N_RANDOM)
        record(acceptance_log, 7, f"div-n{n}-k{k}l{ell}", c.passed, f"worst rel {c.value:.2e}")


@pytest.mark.parametrize("n, k", GRID)
def test_criterion7_elementwise_identity(n, k, acceptance_log):
    mesh = build_uniform_unit_square(n)
    rng = np.random.default_rng(10 + n + k)
    c = check_weak_devgrad(StressSpace(mesh, k), rng, N_RANDOM)
    record(acceptance_log, 7, f"devgrad-n{n}-k{k}", c.passed, f"worst rel {c.value:.2e}")
    c = check_discrete_weak_devgrad(Discretization.build(mesh, SpaceConfig(k, k)), rng, N_RANDOM)
    record(acceptance_log, 7, f"devgrad-interp-n{n}-k{k}", c.passed, f"worst rel {c.value:.2e}")


@pytest.mark.parametrize("n, k", GRID)
def test_criterion7_superconvergence_identity(n, k, acceptance_log):
    mesh = build_uniform_unit_square(n)
    rng = np.random.default_rng(20 + n + k)
    rt = Discretization.build(mesh, SpaceConfig(k, k))
    for ell in sorted({k, k - 1} - {-1}):
        disc = rt if ell == k else Discretization.build(mesh, SpaceConfig(k, ell))
        worst = 0.0
        for _ in range(N_RANDOM):
            ex = random_stream_solution(rng)
            sol = solve_stokes(mesh, SpaceConfig(k, ell), ex.f, disc=disc)
            worst = max(worst, superconvergence_identity_error(sol, ex, rt))
        record(acceptance_log, 7, f"supercv-n{n}-k{k}l{ell}", worst <= 1e-9, f"worst rel {worst:.2e}")


# criterion 8: uniqueness ----------------------------------------------------


@pytest.mark.parametrize("n, k, ell", SMALL)
def test_criterion8_zero_forcing(n, k, ell, acceptance_log):
    norm = zero_forcing_norm(build_uniform_unit_square(n), SpaceConfig(k, ell))
    record(acceptance_log, 8, f"n{n}-k{k}l{ell}", norm <= 1e-12, f"max coefficient {norm:.2e}")


# criterion 9: determinism ---------------------------------------------------


def test_criterion9_determinism(tmp_path, acceptance_log):
    blobs = []
    for run in ("first", "second"):
        cfg = RunConfig(1, 0, levels=(2, 4), out=tmp_path / run, postprocess=True)
        run_convergence_study(cfg)
        blobs.append((cfg.out / f"{cfg.stem}.csv").read_bytes())
    record(acceptance_log, 9, "csv", blobs[0] == blobs[1], f"{len(blobs[0])} bytes")
