import numpy as np
import pytest
import scipy.sparse as sp
import sympy

from qpat.fem import (
    FeFunction,
    SolverError,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    constant,
    element_gradient,
    h1_seminorm,
    l2_error,
    l2_norm,
    local_stiffness,
    nodal_interpolate,
    pcg,
    solve_dirichlet,
    transfer_fine_to_coarse,
)
from qpat.mesh import build_unit_square_mesh


@pytest.fixture
def mesh8():
    return build_unit_square_mesh(8)


def _midpoint_l2_error(u: FeFunction, exact) -> float:
    """Edge-midpoint rule, independent of the library quadrature."""
    mesh = u.mesh
    total = 0.0
    for t, tri in enumerate(mesh.triangles):
        p = mesh.nodes[tri]
        v = u.values[tri]
        for a, b in ((0, 1), (1, 2), (2, 0)):
            x, y = 0.5 * (p[a] + p[b])
            total += mesh.areas[t] / 3 * (0.5 * (v[a] + v[b]) - exact(x, y)) ** 2
    return np.sqrt(total)


def test_stiffness_rows_sum_to_zero():
    mesh = build_unit_square_mesh(1)
    K = assemble_stiffness(mesh, 1.0).toarray()
    np.testing.assert_allclose(K.sum(axis=1), 0.0, atol=1e-14)


def test_local_stiffness_reference_triangle():
    mesh = build_unit_square_mesh(1)
    # first triangle is (SW, SE, NE) with the right angle at SE
    sw, se, ne = mesh.triangles[0]
    assert tuple(mesh.nodes[se]) == (1.0, 0.0)
    local = local_stiffness(mesh)[0]
    order = [1, 0, 2]  # right-angle corner, then the leg endpoints
    expected = 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]])
    np.testing.assert_allclose(local[np.ix_(order, order)], expected, atol=1e-14)


def test_stiffness_linear_in_q(mesh8):
    K1 = assemble_stiffness(mesh8, 1.0)
    K2 = assemble_stiffness(mesh8, 2.0)
    np.testing.assert_allclose(K2.toarray(), 2 * K1.toarray(), rtol=0, atol=1e-14)


def test_stiffness_m_matrix(mesh8):
    K = assemble_stiffness(mesh8, 1.0).toarray()
    off = K - np.diag(np.diag(K))
    assert off.max() <= 1e-14
    np.testing.assert_allclose(K, K.T, atol=1e-12)


def test_mass_totals(mesh8):
    assert abs(assemble_mass(mesh8, 1.0).sum() - 1.0) < 1e-12
    assert assemble_mass(mesh8, 0.0).count_nonzero() == 0


def test_mass_local_reference():
    mesh = build_unit_square_mesh(1)
    M = assemble_mass(mesh, 1.0).toarray()
    area = 0.5
    # node 1 (SE) and node 2 (NW) each belong to exactly one triangle
    assert abs(M[1, 1] - area / 12 * 2) < 1e-15
    assert abs(M[2, 2] - area / 12 * 2) < 1e-15
    # shared diagonal nodes SW (0) and NE (3) belong to both triangles
    assert abs(M[0, 0] - 2 * area / 12 * 2) < 1e-15
    assert abs(M[0, 3] - 2 * area / 12) < 1e-15
    assert abs(M[1, 0] - area / 12) < 1e-15


def test_mass_p1_coefficient_exact():
    """Exact symbolic integration of sigma * phi_i * phi_j on one triangle."""
    mesh = build_unit_square_mesh(1)
    sig = np.array([1.3, 0.2, 2.5, 0.7])
    M = assemble_mass(mesh, sig).toarray()

    x, y = sympy.symbols("x y")
    # triangle (SW, SE, NE): hat functions
    hats = {0: 1 - x, 1: x - y, 3: y}
    sigma_T = sum(sympy.Rational(str(sig[k])) * hats[k] for k in hats)
    expected = np.zeros((4, 4))
    for i in hats:
        for j in hats:
            val = sympy.integrate(sympy.integrate(sigma_T * hats[i] * hats[j], (y, 0, x)), (x, 0, 1))
            expected[i, j] += float(val)
    hats2 = {0: 1 - y, 3: x, 2: y - x}  # triangle (SW, NE, NW)
    sigma_T = sum(sympy.Rational(str(sig[k])) * hats2[k] for k in hats2)
    for i in hats2:
        for j in hats2:
            val = sympy.integrate(sympy.integrate(sigma_T * hats2[i] * hats2[j], (y, x, 1)), (x, 0, 1))
            expected[i, j] += float(val)
    np.testing.assert_allclose(M, expected, atol=1e-14)


def test_mass_positive_definite(mesh8):
    rng = np.random.default_rng(1)
    M = assemble_mass(mesh8, 0.5 + rng.random(mesh8.num_nodes)).toarray()
    assert np.linalg.eigvalsh(M).min() > 0


def test_mismatched_mesh_rejected(mesh8):
    other = build_unit_square_mesh(8)
    with pytest.raises(ValueError):
        assemble_stiffness(mesh8, constant(other, 1.0))
    with pytest.raises(ValueError):
        assemble_mass(mesh8, np.ones(5))


def test_solve_reproduces_affine(mesh8):
    K = assemble_stiffness(mesh8, 1.0)
    bx = mesh8.nodes[mesh8.boundary_nodes, 0]
    u = solve_dirichlet(K, None, dict(zip(mesh8.boundary_nodes.tolist(), bx)), mesh8)
    np.testing.assert_allclose(u.values, mesh8.nodes[:, 0], atol=1e-10)


def test_solve_zero_data(mesh8):
    A = assemble_stiffness(mesh8, 1.0) + assemble_mass(mesh8, 1.0)
    u = solve_dirichlet(A, None, 0.0, mesh8)
    assert np.all(u.values == 0.0)


@pytest.mark.parametrize("seed", range(3))
def test_cg_matches_dense(mesh8, seed):
    rng = np.random.default_rng(seed)
    q = 0.5 + rng.random(mesh8.num_nodes)
    s = rng.random(mesh8.num_nodes)
    A = assemble_stiffness(mesh8, q) + assemble_mass(mesh8, s)
    rhs = rng.standard_normal(mesh8.num_nodes)
    bv = rng.standard_normal(len(mesh8.boundary_nodes))
    u_cg = solve_dirichlet(A, rhs, bv, mesh8, method="cg")
    u_dense = solve_dirichlet(A, rhs, bv, mesh8, method="dense")
    u_lu = solve_dirichlet(A, rhs, bv, mesh8, method="direct")
    assert np.max(np.abs(u_cg.values - u_dense.values)) <= 1e-8
    assert np.max(np.abs(u_lu.values - u_dense.values)) <= 1e-10


def test_pcg_rejects_indefinite():
    A = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(SolverError):
        pcg(A, np.array([1.0, -1.0]))


def test_pcg_iteration_cap():
    rng = np.random.default_rng(0)
    B = rng.standard_normal((40, 40))
    A = sp.csr_matrix(B @ B.T + 1e-6 * np.eye(40))
    with pytest.raises(SolverError):
        pcg(A, rng.standard_normal(40), rtol=1e-14, maxiter=2)


def test_maximum_principle_surrogate():
    mesh = build_unit_square_mesh(16)
    q = nodal_interpolate(lambda x, y: 1 + x * y, mesh)
    A = assemble_stiffness(mesh, q) + assemble_mass(mesh, nodal_interpolate(lambda x, y: 3 + np.sin(5 * x), mesh))
    u = solve_dirichlet(A, None, 1.0, mesh)
    assert u.values.min() > 0
    assert u.values.max() <= 1 + 1e-8


def test_interpolation():
    mesh = build_unit_square_mesh(5)
    f = nodal_interpolate(lambda x, y: x + y, mesh)
    np.testing.assert_allclose(f.values, mesh.nodes.sum(axis=1))
    assert l2_error(f, lambda x, y: x + y) < 1e-14
    assert np.all(nodal_interpolate(lambda x, y: 2.5, mesh).values == 2.5)
    with pytest.raises(ValueError), np.errstate(divide="ignore"):
        nodal_interpolate(lambda x, y: np.log(x), mesh)


def test_interpolation_error_rate():
    f = lambda x, y: x**2  # noqa: E731
    e8 = _midpoint_l2_error(nodal_interpolate(f, build_unit_square_mesh(8)), f)
    e16 = _midpoint_l2_error(nodal_interpolate(f, build_unit_square_mesh(16)), f)
    assert 3.8 < e8 / e16 < 4.2
    # the library quadrature agrees with the independent rule on the ratio
    e8b = l2_error(nodal_interpolate(f, build_unit_square_mesh(8)), f)
    e16b = l2_error(nodal_interpolate(f, build_unit_square_mesh(16)), f)
    assert abs(e8b / e16b - e8 / e16) < 0.05


def test_element_gradient(mesh8):
    g = element_gradient(nodal_interpolate(lambda x, y: x, mesh8))
    np.testing.assert_allclose(g, np.tile([1.0, 0.0], (mesh8.num_triangles, 1)), atol=1e-12)
    g = element_gradient(constant(mesh8, 4.0))
    np.testing.assert_allclose(g, 0.0, atol=1e-12)
    g = element_gradient(nodal_interpolate(lambda x, y: 3 * x - 2 * y, mesh8))
    np.testing.assert_allclose(g, np.tile([3.0, -2.0], (mesh8.num_triangles, 1)), atol=1e-12)


def test_norms(mesh8):
    one = constant(mesh8, 1.0)
    assert abs(l2_norm(one) - 1.0) < 1e-12
    assert h1_seminorm(one) < 1e-7
    x = nodal_interpolate(lambda x, y: x, mesh8)
    assert abs(h1_seminorm(x) - 1.0) < 1e-12
    assert abs(l2_norm(x) - 1 / np.sqrt(3)) < 1e-12


def test_transfer():
    fine, coarse = build_unit_square_mesh(16), build_unit_square_mesh(8)
    assert np.all(transfer_fine_to_coarse(constant(fine, 3.0), coarse).values == 3.0)
    f = lambda x, y: x**2  # noqa: E731
    t = transfer_fine_to_coarse(nodal_interpolate(f, fine), coarse)
    np.testing.assert_array_equal(t.values, nodal_interpolate(f, coarse).values)
    with pytest.raises(ValueError):
        transfer_fine_to_coarse(constant(build_unit_square_mesh(12), 1.0), coarse)


def manufactured_error(n: int) -> float:
    pi = np.pi
    u = lambda x, y: np.sin(pi * x) * np.sin(pi * y)  # noqa: E731

    def f(x, y):
        return (-pi * np.cos(pi * x) * np.sin(pi * y)
                + (1 + x) * 2 * pi**2 * u(x, y) + u(x, y))

    mesh = build_unit_square_mesh(n)
    A = assemble_stiffness(mesh, nodal_interpolate(lambda x, y: 1 + x, mesh)) + assemble_mass(mesh, 1.0)
    uh = solve_dirichlet(A, assemble_load(mesh, f), 0.0, mesh)
    return l2_error(uh, u)


def test_manufactured_solution_rate():
    errs = [manufactured_error(n) for n in (8, 16, 32)]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 3.5) & (ratios < 4.5))


def test_fefunction_validation(mesh8):
    with pytest.raises(ValueError):
        FeFunction(mesh8, np.ones(3))
    with pytest.raises(ValueError):
        FeFunction(mesh8, np.full(mesh8.num_nodes, np.nan))
