"""P1 finite elements on :class:`~qpat.mesh.Mesh`.

Assembly, Dirichlet solves (condensation of boundary rows/columns), norms,
element gradients and nested nodal transfer.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Mesh

log = logging.getLogger(__name__)

DENSE_ORACLE_MAX_NODES = 2000


class SolverError(RuntimeError):
    """Linear solver failed to converge."""


@dataclass(frozen=True, eq=False)
class FeFunction:
    """Nodal values of a continuous piecewise-linear field."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.mesh.num_nodes,):
            raise ValueError(
                f"expected {self.mesh.num_nodes} nodal values, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("FeFunction values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)

    def with_values(self, values) -> "FeFunction":
        return FeFunction(self.mesh, values)


def constant(mesh: Mesh, c: float) -> FeFunction:
    return FeFunction(mesh, np.full(mesh.num_nodes, float(c)))


def _values(mesh: Mesh, f) -> np.ndarray:
    if isinstance(f, FeFunction):
        if f.mesh is not mesh:
            raise ValueError("FeFunction lives on a different mesh")
        return f.values
    v = np.asarray(f, dtype=float)
    if np.ndim(v) == 0:
        return np.full(mesh.num_nodes, float(v))
    if v.shape != (mesh.num_nodes,):
        raise ValueError("nodal vector length does not match the mesh")
    return v


# -- assembly ---------------------------------------------------------------

def local_stiffness(mesh: Mesh) -> np.ndarray:
    """Unit-coefficient element stiffness matrices, (T, 3, 3)."""
    G = mesh.basis_gradients
    return mesh.areas[:, None, None] * np.einsum("tik,tjk->tij", G, G)


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    N = mesh.num_nodes
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(N, N)).tocsr()


def assemble_stiffness(mesh: Mesh, q) -> sp.csr_matrix:
    """Stiffness of ``-div(q grad u)`` with the element mean of a P1 ``q``.

    The mean is exact here because the basis gradients are constant per element.
    """
    qbar = _values(mesh, q)[mesh.triangles].mean(axis=1)
    return _scatter(mesh, qbar[:, None, None] * local_stiffness(mesh))


def assemble_mass(mesh: Mesh, sigma=1.0) -> sp.csr_matrix:
    """Mass matrix weighted by a P1 coefficient, integrated exactly."""
    s = _values(mesh, sigma)[mesh.triangles]  # (T, 3)
    total = s.sum(axis=1)
    A = mesh.areas
    local = np.empty((mesh.num_triangles, 3, 3))
    for i in range(3):
        for j in range(3):
            if i == j:
                # int l_i^2 l_k = |T|/10 (k=i), |T|/30 (k!=i)
                local[:, i, i] = A * (s[:, i] / 10.0 + (total - s[:, i]) / 30.0)
            else:
                k = 3 - i - j
                local[:, i, j] = A * ((s[:, i] + s[:, j]) / 30.0 + s[:, k] / 60.0)
    return _scatter(mesh, local)


def assemble_load(mesh: Mesh, f: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> np.ndarray:
    """Load vector ``(f, phi_i)`` by the 6-point degree-4 triangle rule."""
    lam, w = _DUNAVANT4
    p = mesh.nodes[mesh.triangles]  # (T, 3, 2)
    xq = np.einsum("qk,tkd->tqd", lam, p)
    fq = f(xq[..., 0], xq[..., 1])  # (T, Q)
    local = mesh.areas[:, None] * np.einsum("q,tq,qk->tk", w, fq, lam)
    b = np.zeros(mesh.num_nodes)
    np.add.at(b, mesh.triangles, local)
    return b


_a, _b = 0.445948490915965, 0.091576213509771
_DUNAVANT4 = (
    np.array([
        [_a, _a, 1 - 2 * _a], [_a, 1 - 2 * _a, _a], [1 - 2 * _a, _a, _a],
        [_b, _b, 1 - 2 * _b], [_b, 1 - 2 * _b, _b], [1 - 2 * _b, _b, _b],
    ]),
    np.array([0.223381589678011] * 3 + [0.109951743655322] * 3),
)


# -- linear solvers -----------------------------------------------------------

def pcg(A, b: np.ndarray, x0=None, rtol: float = 1e-10, maxiter: int | None = None):
    """Jacobi-preconditioned conjugate gradients.

    Returns ``(x, iterations)``; raises :class:`SolverError` if the relative
    residual has not dropped below ``rtol`` after ``maxiter`` steps.
    """
    n = b.shape[0]
    if maxiter is None:
        maxiter = 20 * max(n, 1)
    d = A.diagonal()
    if np.any(d <= 0):
        raise SolverError("non-positive diagonal: matrix is not SPD")
    dinv = 1.0 / d
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for k in range(1, maxiter + 1):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise SolverError("indefinite system encountered in CG")
        a = rz / pAp
        x += a * p
        r -= a * Ap
        if np.linalg.norm(r) <= rtol * bnorm:
            return x, k
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"CG did not reach rtol={rtol:g} in {maxiter} iterations")


def _boundary_array(mesh: Mesh, boundary_values) -> np.ndarray:
    if isinstance(boundary_values, Mapping):
        bv = np.array([boundary_values[int(i)] for i in mesh.boundary_nodes], dtype=float)
    else:
        bv = np.asarray(boundary_values, dtype=float)
        if bv.ndim == 0:
            bv = np.full(len(mesh.boundary_nodes), float(bv))
    if bv.shape != (len(mesh.boundary_nodes),):
        raise ValueError("boundary values do not match the boundary node count")
    return bv


def _condense(A, rhs, bv, mesh):
    I, B = mesh.interior_nodes, mesh.boundary_nodes
    A = sp.csr_matrix(A)
    A_II = A[I][:, I]
    b = np.asarray(rhs, dtype=float)[I] - A[I][:, B] @ bv
    return A_II, b


def solve_dirichlet(
    A,
    rhs,
    boundary_values,
    mesh: Mesh,
    method: str = "cg",
    rtol: float = 1e-10,
) -> FeFunction:
    """Solve ``A u = rhs`` on interior nodes with ``u`` fixed on the boundary.

    ``method`` is ``"cg"`` (default), ``"dense"`` (Cholesky; the oracle) or
    ``"direct"`` (sparse LU).  A CG failure on a small system falls back to
    the dense factorization.
    """
    rhs = np.zeros(mesh.num_nodes) if rhs is None else _values(mesh, rhs)
    bv = _boundary_array(mesh, boundary_values)
    A_II, b = _condense(A, rhs, bv, mesh)
    u = np.empty(mesh.num_nodes)
    u[mesh.boundary_nodes] = bv
    if len(b) == 0:
        return FeFunction(mesh, u)
    if method == "cg":
        try:
            x, _ = pcg(A_II, b, rtol=rtol)
        except SolverError:
            if mesh.num_nodes > DENSE_ORACLE_MAX_NODES:
                raise
            log.warning("CG failed; falling back to dense factorization")
            x = _dense_solve(A_II, b)
    elif method == "dense":
        x = _dense_solve(A_II, b)
    elif method == "direct":
        x = spla.splu(A_II.tocsc()).solve(b)
    else:
        raise ValueError(f"unknown method {method!r}")
    u[mesh.interior_nodes] = x
    return FeFunction(mesh, u)


def _dense_solve(A_II, b):
    try:
        return scipy.linalg.solve(A_II.toarray(), b, assume_a="pos")
    except np.linalg.LinAlgError as exc:
        raise SolverError(str(exc)) from exc


class DirichletSolver:
    """Factorize the interior block once, then solve for many right-hand sides.

    Used where one operator is shared by several illuminations and adjoints.
    """

    def __init__(self, A, mesh: Mesh):
        self.mesh = mesh
        A = sp.csr_matrix(A)
        I, B = mesh.interior_nodes, mesh.boundary_nodes
        A_I = A[I]
        self._A_IB = A_I[:, B]
        self._lu = spla.splu(A_I[:, I].tocsc()) if len(I) else None

    def solve(self, rhs=None, boundary_values=0.0) -> np.ndarray:
        mesh = self.mesh
        bv = _boundary_array(mesh, boundary_values)
        u = np.empty(mesh.num_nodes)
        u[mesh.boundary_nodes] = bv
        if self._lu is None:
            return u
        b = -(self._A_IB @ bv)
        if rhs is not None:
            b = b + np.asarray(rhs, dtype=float)[mesh.interior_nodes]
        u[mesh.interior_nodes] = self._lu.solve(b)
        return u


# -- interpolation, gradients, norms -----------------------------------------

def nodal_interpolate(f: Callable, mesh: Mesh) -> FeFunction:
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    v = np.broadcast_to(np.asarray(f(x, y), dtype=float), x.shape)
    if not np.all(np.isfinite(v)):
        raise ValueError("interpolated function is not finite at every node")
    return FeFunction(mesh, v.copy())


def element_gradient(u: FeFunction) -> np.ndarray:
    """Per-triangle gradient of a P1 field, shape (T, 2)."""
    mesh = u.mesh
    return np.einsum("tk,tkd->td", u.values[mesh.triangles], mesh.basis_gradients)


def l2_norm(u: FeFunction) -> float:
    M = assemble_mass(u.mesh, 1.0)
    return float(np.sqrt(max(u.values @ (M @ u.values), 0.0)))


def h1_seminorm(u: FeFunction) -> float:
    K = assemble_stiffness(u.mesh, 1.0)
    return float(np.sqrt(max(u.values @ (K @ u.values), 0.0)))


def l2_error(u: FeFunction, exact: Callable) -> float:
    """``||u - exact||_{L^2}`` by the degree-4 triangle rule."""
    mesh = u.mesh
    lam, w = _DUNAVANT4
    p = mesh.nodes[mesh.triangles]
    xq = np.einsum("qk,tkd->tqd", lam, p)
    uq = np.einsum("qk,tk->tq", lam, u.values[mesh.triangles])
    err = uq - exact(xq[..., 0], xq[..., 1])
    return float(np.sqrt(np.sum(mesh.areas[:, None] * w * err**2)))


# -- nested transfer ----------------------------------------------------------

def coarse_in_fine_index(n_fine: int, n_coarse: int) -> np.ndarray:
    if n_fine % n_coarse:
        raise ValueError(f"meshes are not nested: {n_coarse} does not divide {n_fine}")
    r = n_fine // n_coarse
    j, i = np.divmod(np.arange((n_coarse + 1) ** 2), n_coarse + 1)
    return r * i + r * j * (n_fine + 1)


def transfer_fine_to_coarse(u_fine: FeFunction, mesh_coarse: Mesh) -> FeFunction:
    """Sample a fine-mesh field at the coinciding coarse nodes."""
    idx = coarse_in_fine_index(u_fine.mesh.n, mesh_coarse.n)
    return FeFunction(mesh_coarse, u_fine.values[idx])
