import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dfstokes.exact import PolyField, example_5_1, get_example, project_pressure, random_stream_solution
from dfstokes.mesh import build_uniform_unit_square
from dfstokes.polybasis import triangle_rule
from dfstokes.spaces import PressureSpace

EX = example_5_1()
RNG = np.random.default_rng(42)
PTS = RNG.uniform(0.01, 0.99, (100, 2))


def _boundary_points(n=20):
    s = np.linspace(0, 1, n // 4 + 1)[:-1]
    z, o = np.zeros_like(s), np.ones_like(s)
    return np.concatenate([np.stack(a, 1) for a in [(s, z), (o, s), (1 - s, o), (z, 1 - s)]])


def test_divergence_free():
    assert np.abs(EX.div_u(PTS)).max() <= 1e-12


def test_boundary_values():
    np.testing.assert_allclose(EX.u(_boundary_points()), 0.0, atol=1e-15)


def test_point_values():
    np.testing.assert_allclose(EX.u(np.array([0.5, 0.5])), [0.0, 0.0], atol=1e-16)
    assert EX.p(np.array([0.0, 0.0])) == pytest.approx(1 / 3)


def _fd_forcing(ex, pts, h=1e-4):
    ex_, ey = np.array([h, 0.0]), np.array([0.0, h])
    lap = (ex.u(pts + ex_) + ex.u(pts - ex_) + ex.u(pts + ey) + ex.u(pts - ey) - 4 * ex.u(pts)) / h**2
    gp = np.stack([(ex.p(pts + ex_) - ex.p(pts - ex_)) / (2 * h), (ex.p(pts + ey) - ex.p(pts - ey)) / (2 * h)], -1)
    return -lap - gp


def test_forcing_matches_finite_differences():
    assert np.abs(EX.f(PTS) - _fd_forcing(EX, PTS)).max() <= 1e-5


def test_gradient_matches_finite_differences():
    h = 1e-6
    for d in range(2):
        e = np.zeros(2)
        e[d] = h
        fd = (EX.u(PTS + e) - EX.u(PTS - e)) / (2 * h)
        np.testing.assert_allclose(EX.grad_u(PTS)[..., d], fd, atol=1e-8)


def test_pressure_mean_zero():
    mesh = build_uniform_unit_square(4)
    pts, wts = triangle_rule(10).on_cells(mesh)
    assert abs(np.sum(wts * EX.p(pts))) <= 1e-12


def test_sigma_traceless():
    s = EX.sigma(PTS)
    np.testing.assert_allclose(s[..., 0, 0] + s[..., 1, 1], 0, atol=1e-15)


def test_registry():
    assert get_example("ex1").name == "ex1"
    with pytest.raises(KeyError, match="unknown example"):
        get_example("nope")


def test_projection():
    mesh = build_uniform_unit_square(4)
    q = PressureSpace(mesh, 0)
    c = project_pressure(lambda p: np.full(p.shape[:-1], 2.5), q)
    np.testing.assert_allclose(c, 2.5)
    c = project_pressure(lambda p: p[..., 0], q)
    np.testing.assert_allclose(c, mesh.centroids[:, 0])
    pts, wts = triangle_rule(10).on_cells(mesh)
    assert q.means() @ project_pressure(EX.p, q) == pytest.approx(np.sum(wts * EX.p(pts)), abs=1e-14)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_stream_solutions(seed):
    ex = random_stream_solution(np.random.default_rng(seed))
    pts = np.random.default_rng(seed).uniform(0.05, 0.95, (20, 2))
    scale = max(np.abs(ex.grad_u(pts)).max(), 1.0)
    assert np.abs(ex.div_u(pts)).max() <= 1e-12 * scale
    np.testing.assert_allclose(ex.u(_boundary_points()), 0.0, atol=1e-13 * scale)
    ref = np.abs(ex.f(pts)).max()
    assert np.abs(ex.f(pts) - _fd_forcing(ex, pts, 1e-3)).max() <= 1e-4 * max(ref, 1.0)


def test_polyfield_laplacian():
    v = PolyField([np.array([[0, 0, 1.0], [0, 0, 0], [3.0, 0, 0]]), np.array([[1.0]])])
    lap = v.laplacian()
    np.testing.assert_allclose(lap(np.array([0.3, 0.4])), [8.0, 0.0])
