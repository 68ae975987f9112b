import numpy as np
import pytest

from qpat.illumination import (
    Illumination,
    laplace_beltrami_basis,
    sample_illuminations,
    trace_on_mesh,
)
from qpat.mesh import build_unit_square_mesh


def trapezoid(f, m=1000):
    """Periodic trapezoid rule on [0, 4)."""
    s = np.linspace(0.0, 4.0, m, endpoint=False)
    return 4.0 / m * np.sum(f(s))


def test_basis_entries():
    basis = laplace_beltrami_basis(5)
    assert [e.kind for e in basis] == ["constant", "cos", "sin", "cos", "sin"]
    e1 = basis[0]
    assert e1.eigenvalue == 0.0 and e1.normalization == 1.0
    np.testing.assert_allclose(e1(np.array([0.0, 1.3, 3.9])), 0.5)
    assert abs(basis[1].eigenvalue - (2 * np.pi / 4) ** 2) < 1e-12
    assert abs(basis[1].eigenvalue - 2.4674011) < 1e-6
    assert np.all(np.diff([e.eigenvalue for e in basis[1::2]]) > 0)
    with pytest.raises(ValueError):
        laplace_beltrami_basis(0)


def test_orthogonality():
    b = laplace_beltrami_basis(5)
    assert abs(trapezoid(lambda s: b[1].eigenfunction(s) * b[2].eigenfunction(s))) < 1e-12
    for e in b:
        assert abs(trapezoid(lambda s: e.eigenfunction(s) ** 2) - 1.0) < 1e-12


def test_h_half_normalization():
    for e in laplace_beltrami_basis(9):
        inner = trapezoid(lambda s: e(s) * e.eigenfunction(s), m=4000)
        assert abs((1 + e.eigenvalue) ** 0.5 * inner**2 - 1.0) < 1e-10


def test_corner_continuity():
    for e in laplace_beltrami_basis(9):
        assert abs(e(4.0 - 1e-15) - e(0.0)) <= 1e-12


def test_sampling_deterministic():
    a = sample_illuminations(4, 5, seed=7)
    b = sample_illuminations(4, 5, seed=7)
    np.testing.assert_array_equal(a.coefficients, b.coefficients)
    c = sample_illuminations(4, 5, seed=8)
    assert not np.array_equal(a.coefficients, c.coefficients)


def test_prefix_nesting():
    small = sample_illuminations(2, 5, seed=3)
    large = sample_illuminations(5, 5, seed=3)
    np.testing.assert_array_equal(small.coefficients, large.coefficients[:2])
    np.testing.assert_array_equal(large.prefix(2).coefficients, small.coefficients)


def test_first_illumination_is_one_and_m1_constant():
    ill = sample_illuminations(3, 1, seed=0)
    s = np.linspace(0, 3.99, 50)
    traces = ill.traces
    assert traces[0].is_constant_one
    np.testing.assert_array_equal(traces[0](s), 1.0)
    for g in traces[1:]:
        vals = g(s)
        np.testing.assert_allclose(vals, vals[0], atol=1e-15)


def test_theta_schedule_monte_carlo():
    ill = sample_illuminations(100_000, 5, seed=11)
    sd = ill.coefficients.std(axis=0)
    assert abs(sd[2] - 3.0**-3) / 3.0**-3 < 0.02
    var = ill.coefficients.var(axis=0)
    assert np.all(np.diff(var) < 0)


def test_trace_on_mesh():
    mesh = build_unit_square_mesh(4)
    ones = trace_on_mesh(Illumination(None), mesh)
    assert set(ones) == set(mesh.boundary_nodes.tolist())
    assert all(v == 1.0 for v in ones.values())
    basis = laplace_beltrami_basis(2)
    e1 = Illumination(np.array([1.0]), tuple(basis[:1]))
    assert all(abs(v - 0.5) < 1e-15 for v in trace_on_mesh(e1, mesh).values())
    cos1 = Illumination(np.array([0.0, 1.0]), tuple(basis))
    vals = trace_on_mesh(cos1, mesh)
    node = mesh.grid_index(2, 0)  # (0.5, 0)
    expected = np.sqrt(2 / 4) * (1 + (np.pi / 2) ** 2) ** -0.25 * np.cos(2 * np.pi * 0.5 / 4)
    assert abs(vals[node] - expected) < 1e-14
