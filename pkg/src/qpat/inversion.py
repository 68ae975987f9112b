"""Two-stage reconstruction of the diffusion and absorption coefficients.

Stage 1 recovers ``q = D u1^2`` from the quotient data by minimizing

    J(q) = 1/2 sum_l ||w_l(q) - w_delta_l||^2 + (alpha L / 2) ||grad q||^2

over a box with ``q`` fixed on the boundary, where ``w_l(q)`` solves
``(q grad w, grad v) = 0`` with ``w = f_l`` on the boundary.  The gradient is
computed by the adjoint method and the minimization is a projected gradient
iteration with Armijo backtracking.

Stage 2 solves ``(q* grad v, grad phi) = (Z1, phi)`` with ``v = 0`` on the
boundary and sets ``D* = q* (v + 1)^2``, ``sigma* = Z1 (v + 1)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .fem import (
    DirichletSolver,
    FeFunction,
    assemble_mass,
    assemble_stiffness,
    solve_dirichlet,
)
from .mesh import Mesh

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AdmissibleBox:
    lower: float
    upper: float
    fixed_boundary: np.ndarray  # ordered as mesh.boundary_nodes

    def __post_init__(self):
        if not 0 < self.lower <= self.upper:
            raise ValueError(f"need 0 < lower <= upper, got {self.lower}, {self.upper}")
        fb = np.asarray(self.fixed_boundary, dtype=float)
        if np.any(fb < self.lower) or np.any(fb > self.upper):
            raise ValueError("fixed boundary values fall outside the box")
        object.__setattr__(self, "fixed_boundary", fb)


@dataclass
class InversionConfig:
    alpha: float
    max_iters: int = 500
    grad_tol: float = 1e-8
    step0: float = 1.0
    shrink: float = 0.5
    armijo_c: float = 1e-4
    max_backtracks: int = 60
    # Barzilai-Borwein trial step after the first iteration
    spectral_step: bool = True

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("regularization weight alpha must be positive")
        if not 0 < self.shrink < 1:
            raise ValueError("Armijo shrink factor must lie in (0, 1)")


@dataclass
class Stage1Result:
    q: FeFunction
    objective_history: list
    iterations: int
    converged: bool
    stagnated: bool
    evaluations: int = 0


@dataclass
class InversionResult:
    q_h: FeFunction
    q_star: FeFunction
    v_h: FeFunction
    D_star: FeFunction
    sigma_star: FeFunction
    objective_history: list
    iterations: int
    e_D: float = float("nan")
    e_sigma: float = float("nan")
    converged: bool = False
    stagnated: bool = False
    extras: dict = field(default_factory=dict)


class LeastSquaresProblem:
    """Regularized output least squares for the inverse diffusivity problem.

    ``w_delta`` holds the ``L`` observed quotient fields and
    ``boundary_traces`` the matching Dirichlet data ordered as
    ``mesh.boundary_nodes``.
    """

    def __init__(self, mesh: Mesh, w_delta, boundary_traces, alpha: float):
        if len(w_delta) != len(boundary_traces) or len(w_delta) == 0:
            raise ValueError("need one boundary trace per observed field")
        self.mesh = mesh
        self.w_delta = [np.asarray(getattr(w, "values", w), dtype=float) for w in w_delta]
        self.traces = [np.asarray(f, dtype=float) for f in boundary_traces]
        self.alpha = float(alpha)
        self.L = len(self.w_delta)
        self.M = assemble_mass(mesh, 1.0)
        self.K1 = assemble_stiffness(mesh, 1.0)
        self.evaluations = 0

    def states(self, q: np.ndarray):
        cached = getattr(self, "_cache", None)
        if cached is not None and np.array_equal(cached[0], q):
            return cached[1], cached[2]
        solver = DirichletSolver(assemble_stiffness(self.mesh, q), self.mesh)
        ws = [solver.solve(None, f) for f in self.traces]
        self._cache = (q.copy(), solver, ws)
        return solver, ws

    def split(self, q: np.ndarray) -> tuple[float, float]:
        """Data-fit and penalty parts of the objective."""
        self.evaluations += 1
        _, ws = self.states(q)
        data = 0.0
        for w, z in zip(ws, self.w_delta):
            r = w - z
            data += 0.5 * r @ (self.M @ r)
        penalty = 0.5 * self.alpha * self.L * (q @ (self.K1 @ q))
        return float(data), float(penalty)

    def objective(self, q: np.ndarray) -> float:
        data, penalty = self.split(q)
        return data + penalty

    def value_and_gradient(self, q: np.ndarray) -> tuple[float, np.ndarray]:
        self.evaluations += 1
        mesh = self.mesh
        solver, ws = self.states(q)
        G = mesh.basis_gradients
        tri = mesh.triangles
        acc = np.zeros(mesh.num_triangles)
        data = 0.0
        for w, z in zip(ws, self.w_delta):
            r = w - z
            Mr = self.M @ r
            data += 0.5 * r @ Mr
            p = solver.solve(Mr, 0.0)
            gw = np.einsum("tk,tkd->td", w[tri], G)
            gp = np.einsum("tk,tkd->td", p[tri], G)
            acc += np.einsum("td,td->t", gw, gp)
        # d/dq_i of the element-mean stiffness: |T|/3 on each incident element
        contrib = -(mesh.areas / 3.0) * acc
        grad = np.bincount(tri.ravel(), weights=np.repeat(contrib, 3), minlength=mesh.num_nodes)
        Kq = self.K1 @ q
        grad += self.alpha * self.L * Kq
        grad[mesh.boundary_nodes] = 0.0
        J = data + 0.5 * self.alpha * self.L * (q @ Kq)
        return float(J), grad


def objective(q: FeFunction, w_delta, boundary_traces, alpha: float) -> float:
    return LeastSquaresProblem(q.mesh, w_delta, boundary_traces, alpha).objective(q.values)


def objective_gradient(q: FeFunction, w_delta, boundary_traces, alpha: float) -> FeFunction:
    _, g = LeastSquaresProblem(q.mesh, w_delta, boundary_traces, alpha).value_and_gradient(q.values)
    return FeFunction(q.mesh, g)


def project_box(q, box: AdmissibleBox, mesh: Mesh | None = None):
    """Clamp interior values into the box and impose the fixed boundary values.

    Accepts a :class:`FeFunction` (returns one) or a raw nodal vector together
    with ``mesh``.
    """
    if isinstance(q, FeFunction):
        return FeFunction(q.mesh, _project(q.values, box, q.mesh))
    return _project(np.asarray(q, dtype=float), box, mesh)


def _project(v: np.ndarray, box: AdmissibleBox, mesh: Mesh) -> np.ndarray:
    out = np.clip(v, box.lower, box.upper)
    out[mesh.boundary_nodes] = box.fixed_boundary
    return out


def initial_guess(mesh: Mesh, box: AdmissibleBox) -> np.ndarray:
    q0 = np.full(mesh.num_nodes, float(np.mean(box.fixed_boundary)))
    return _project(q0, box, mesh)


def invert_stage1(problem: LeastSquaresProblem, box: AdmissibleBox, cfg: InversionConfig,
                  q0: np.ndarray | None = None) -> Stage1Result:
    """Projected gradient descent with Armijo backtracking."""
    mesh = problem.mesh
    q = _project(initial_guess(mesh, box) if q0 is None else np.asarray(q0, float), box, mesh)
    J, g = problem.value_and_gradient(q)
    history = [J]
    step = cfg.step0
    converged = stagnated = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        pg = q - _project(q - g, box, mesh)
        # nodal gradients carry a factor h^2; dividing by h gives the L2 scale
        if np.linalg.norm(pg) / mesh.h <= cfg.grad_tol * (1.0 + abs(J)):
            converged = True
            it -= 1
            break
        t = step
        for _ in range(cfg.max_backtracks):
            q_new = _project(q - t * g, box, mesh)
            d = q_new - q
            J_new = problem.objective(q_new)
            if J_new <= J + cfg.armijo_c * (g @ d):
                break
            t *= cfg.shrink
        else:
            stagnated = True
            it -= 1
            log.info("stage 1 stagnated after %d iterations", it)
            break
        J_new, g_new = problem.value_and_gradient(q_new)
        s, y = q_new - q, g_new - g
        sy = s @ y
        if cfg.spectral_step and sy > 0:
            step = float(np.clip((s @ s) / sy, 1e-12, 1e12))
        else:
            step = t / cfg.shrink
        q, J, g = q_new, J_new, g_new
        history.append(J)
    return Stage1Result(FeFunction(mesh, q), history, it, converged, stagnated, problem.evaluations)


def complement_only_nodes(mesh: Mesh) -> np.ndarray:
    """Boolean mask of nodes touching no triangle tagged as the subdomain."""
    inside = np.zeros(mesh.num_nodes, dtype=bool)
    inside[mesh.triangles[mesh.subdomain_tags].ravel()] = True
    return ~inside


def splice_qstar(q_h: FeFunction, Z1: FeFunction, D_true: FeFunction | None = None,
                 sigma_true: FeFunction | None = None) -> FeFunction:
    """Keep ``q_h`` on the tagged subdomain; use ``D (Z1 / sigma)^2`` elsewhere.

    Nodes shared by both regions keep the reconstructed value.
    """
    mesh = q_h.mesh
    outside = complement_only_nodes(mesh)
    q = q_h.values.copy()
    if outside.any():
        if D_true is None or sigma_true is None:
            raise ValueError("known coefficients are required outside the subdomain")
        q[outside] = D_true.values[outside] * (Z1.values[outside] / sigma_true.values[outside]) ** 2
    return FeFunction(mesh, q)


def invert_stage2(q_star: FeFunction, Z1: FeFunction, method: str = "cg"):
    """Direct solve for ``v = 1/u1 - 1`` and algebraic recovery of ``D``, ``sigma``."""
    mesh = q_star.mesh
    if np.any(q_star.values <= 0):
        raise ValueError("q* must be positive")
    A = assemble_stiffness(mesh, q_star)
    rhs = assemble_mass(mesh, 1.0) @ Z1.values
    v = solve_dirichlet(A, rhs, 0.0, mesh, method=method)
    vp1 = v.values + 1.0
    D_star = FeFunction(mesh, q_star.values * vp1**2)
    sigma_star = FeFunction(mesh, Z1.values * vp1)
    return v, D_star, sigma_star


def relative_l2(approx: FeFunction, reference: FeFunction) -> float:
    M = assemble_mass(reference.mesh, 1.0)
    diff = approx.values - reference.values
    return float(np.sqrt(diff @ (M @ diff)) / np.sqrt(reference.values @ (M @ reference.values)))


def relative_errors(D_star: FeFunction, sigma_star: FeFunction, D_true: FeFunction,
                    sigma_true: FeFunction) -> tuple[float, float]:
    return relative_l2(D_star, D_true), relative_l2(sigma_star, sigma_true)
