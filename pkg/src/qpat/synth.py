"""Forward QPAT model and synthetic optical-energy data.

For each illumination ``g`` the fluence ``u`` solves
``-div(D grad u) + sigma u = 0`` with ``u = g`` on the boundary, and the
measured optical energy is ``H = sigma * u``.  Noisy channels are
``Z = H + delta * max|H| * xi`` with iid standard normal ``xi`` per node.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coefficients import ExampleSpec
from .fem import (
    DirichletSolver,
    FeFunction,
    assemble_mass,
    assemble_stiffness,
    nodal_interpolate,
    solve_dirichlet,
    transfer_fine_to_coarse,
)
from .illumination import NOISE_STREAM, IlluminationSet, substream, trace_values
from .mesh import Mesh, build_unit_square_mesh

C_LOWER_FLOOR = 0.05


def solve_qpat_forward(mesh: Mesh, D: FeFunction, sigma: FeFunction, g, method: str = "cg") -> FeFunction:
    A = assemble_stiffness(mesh, D) + assemble_mass(mesh, sigma)
    return solve_dirichlet(A, None, trace_values(g, mesh), mesh, method=method)


def forward_all(mesh: Mesh, D: FeFunction, sigma: FeFunction, traces) -> list[FeFunction]:
    """Fluence for every illumination, sharing one factorization."""
    A = assemble_stiffness(mesh, D) + assemble_mass(mesh, sigma)
    solver = DirichletSolver(A, mesh)
    return [FeFunction(mesh, solver.solve(None, trace_values(g, mesh))) for g in traces]


def optical_energy(sigma: FeFunction, u: FeFunction) -> FeFunction:
    if sigma.mesh is not u.mesh:
        raise ValueError("sigma and u live on different meshes")
    return FeFunction(u.mesh, sigma.values * u.values)


def add_noise(H: FeFunction, delta: float, noise_seed: int, channel: int = 1) -> FeFunction:
    """Additive Gaussian noise scaled by the nodal maximum of ``|H|``.

    ``channel`` selects the noise sub-stream so that channels are independent
    and can be generated in any order.
    """
    if delta < 0:
        raise ValueError("noise level must be non-negative")
    scale = delta * float(np.max(np.abs(H.values)))
    if scale == 0.0:
        return FeFunction(H.mesh, H.values.copy())
    xi = substream(noise_seed, NOISE_STREAM, channel).standard_normal(H.mesh.num_nodes)
    return FeFunction(H.mesh, H.values + scale * xi)


def clamp_reference(Z1: FeFunction, c_lower: float, c_upper: float = 1.0) -> FeFunction:
    """Pointwise projection of the reference channel onto ``[c_lower, c_upper]``."""
    if not 0.0 < c_lower < c_upper:
        raise ValueError(f"need 0 < c_lower < c_upper, got {c_lower}, {c_upper}")
    return FeFunction(Z1.mesh, np.clip(Z1.values, c_lower, c_upper))


def default_c_lower(Z1: FeFunction, floor: float = C_LOWER_FLOOR) -> float:
    return max(0.5 * float(Z1.values.min()), floor)


@dataclass(frozen=True, eq=False)
class NoisyDataSet:
    delta: float
    Z: list            # L + 1 channels, reference first (clamped)
    w_delta: list      # L quotients Z^(l+1) / Z^(1)
    c_lower: float
    c_upper: float
    noise_seed: int
    H: list | None = None        # exact energies on the same mesh
    w_exact: list | None = None
    noise_scale: list = field(default_factory=list)  # delta * max|H| per channel

    @property
    def mesh(self) -> Mesh:
        return self.Z[0].mesh

    @property
    def L(self) -> int:
        return len(self.w_delta)


def quotient_data(Z: list, H: list | None = None):
    """Quotients ``Z^(l+1) / Z^(1)``; also the exact ones if ``H`` is given."""
    ref = Z[0].values
    if np.any(ref <= 0):
        raise ValueError("reference channel must be clamped away from zero")
    w_delta = [FeFunction(z.mesh, z.values / ref) for z in Z[1:]]
    if H is None:
        return w_delta, None
    w = [FeFunction(h.mesh, h.values / H[0].values) for h in H[1:]]
    return w_delta, w


def make_dataset(
    H: list,
    delta: float,
    noise_seed: int,
    c_upper: float,
    c_lower: float | None = None,
    c_lower_floor: float = C_LOWER_FLOOR,
) -> NoisyDataSet:
    """Noise every channel, clamp the reference and build the quotients."""
    Z = [add_noise(h, delta, noise_seed, channel=ell + 1) for ell, h in enumerate(H)]
    if c_lower is None:
        c_lower = default_c_lower(Z[0], c_lower_floor)
    c_upper = max(c_upper, c_lower * (1 + 1e-12))
    Z[0] = clamp_reference(Z[0], c_lower, c_upper)
    w_delta, w = quotient_data(Z, H)
    return NoisyDataSet(
        delta=float(delta),
        Z=Z,
        w_delta=w_delta,
        c_lower=float(c_lower),
        c_upper=float(c_upper),
        noise_seed=int(noise_seed),
        H=list(H),
        w_exact=w,
        noise_scale=[delta * float(np.max(np.abs(h.values))) for h in H],
    )


def fine_size_for(n: int, n_fine: int) -> int:
    """Smallest multiple of ``n`` that is at least ``n_fine``."""
    return n * -(-n_fine // n)


@dataclass(frozen=True, eq=False)
class ExactData:
    """Noise-free fine-mesh synthesis sampled on a working mesh."""

    mesh: Mesh
    n_fine: int
    u: list      # fluences on the working mesh
    H: list      # optical energies on the working mesh
    D: FeFunction
    sigma: FeFunction


def synthesize_exact(spec: ExampleSpec, illums: IlluminationSet, n: int, n_fine: int,
                     mesh: Mesh | None = None) -> ExactData:
    n_fine = fine_size_for(n, n_fine)
    fine = build_unit_square_mesh(n_fine)
    D_f = nodal_interpolate(spec.D, fine)
    s_f = nodal_interpolate(spec.sigma, fine)
    u_f = forward_all(fine, D_f, s_f, illums.traces)
    mesh = mesh if mesh is not None else build_unit_square_mesh(n)
    u = [transfer_fine_to_coarse(v, mesh) for v in u_f]
    sigma = nodal_interpolate(spec.sigma, mesh)
    H = [optical_energy(sigma, v) for v in u]
    return ExactData(mesh, n_fine, u, H, nodal_interpolate(spec.D, mesh), sigma)
