"""Random Dirichlet illuminations on the boundary of the unit square.

The boundary is a closed curve of length 4 parameterized by arc length ``s``.
Its Laplace-Beltrami eigenfunctions are the Fourier modes in ``s``; scaling
them by ``(1 + lambda)^(-1/4)`` gives an orthonormal basis of ``H^{1/2}``.

Random coefficients come from numpy's ``PCG64`` bit generator seeded through
``SeedSequence(seed, spawn_key=(ILLUMINATION_STREAM, l))``, one sub-stream per
illumination index ``l``, with Gaussians from ``Generator.standard_normal``
(ziggurat).  Because each illumination owns its stream, the set for ``L`` is a
prefix of the set for ``L + 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import PERIMETER, Mesh

GENERATOR = "numpy.random.PCG64 via SeedSequence(seed, spawn_key=(stream, index)); standard_normal (ziggurat)"
ILLUMINATION_STREAM = 0
NOISE_STREAM = 1


def substream(seed: int, stream: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(index)))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class BasisEntry:
    index: int        # 1-based
    eigenvalue: float
    kind: str         # "constant", "cos" or "sin"
    frequency: int
    normalization: float  # (1 + eigenvalue) ** -0.25

    def eigenfunction(self, s) -> np.ndarray:
        """L2-orthonormal eigenfunction (without the H^{1/2} scaling)."""
        s = np.asarray(s, dtype=float)
        if self.kind == "constant":
            return np.full(s.shape, 1.0 / np.sqrt(PERIMETER))
        arg = 2.0 * np.pi * self.frequency * s / PERIMETER
        trig = np.cos if self.kind == "cos" else np.sin
        return np.sqrt(2.0 / PERIMETER) * trig(arg)

    def __call__(self, s) -> np.ndarray:
        return self.normalization * self.eigenfunction(s)


def laplace_beltrami_basis(K: int) -> list[BasisEntry]:
    """First ``K`` entries ordered (const, cos 1, sin 1, cos 2, sin 2, ...)."""
    if K < 1:
        raise ValueError("basis size must be at least 1")
    out = [BasisEntry(1, 0.0, "constant", 0, 1.0)]
    m = 1
    while len(out) < K:
        lam = (2.0 * np.pi * m / PERIMETER) ** 2
        for kind in ("cos", "sin"):
            if len(out) < K:
                out.append(BasisEntry(len(out) + 1, lam, kind, m, (1.0 + lam) ** -0.25))
        m += 1
    return out


@dataclass(frozen=True)
class Illumination:
    """A boundary trace ``g(s) = sum_k a_k e_k(s)``; the empty sum means ``g = 1``."""

    coefficients: np.ndarray | None
    basis: tuple = field(default=(), repr=False)

    @property
    def is_constant_one(self) -> bool:
        return self.coefficients is None

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.coefficients is None:
            return np.ones(s.shape)
        out = np.zeros(s.shape)
        for a, e in zip(self.coefficients, self.basis):
            out += a * e(s)
        return out


@dataclass(frozen=True, eq=False)
class IlluminationSet:
    L: int
    M: int
    seed: int
    theta_power: float
    coefficients: np.ndarray  # (L, M)

    @property
    def theta(self) -> np.ndarray:
        return np.arange(1, self.M + 1, dtype=float) ** -self.theta_power

    @property
    def basis(self) -> list[BasisEntry]:
        return laplace_beltrami_basis(self.M)

    @property
    def traces(self) -> list[Illumination]:
        """``g^(1) = 1`` followed by the ``L`` random illuminations."""
        basis = tuple(self.basis)
        return [Illumination(None)] + [Illumination(a, basis) for a in self.coefficients]

    def prefix(self, L: int) -> "IlluminationSet":
        if not 1 <= L <= self.L:
            raise ValueError(f"prefix length {L} outside 1..{self.L}")
        return IlluminationSet(L, self.M, self.seed, self.theta_power, self.coefficients[:L])


def sample_illuminations(L: int, M: int, seed: int, theta_power: float = 3.0) -> IlluminationSet:
    if L < 1 or M < 1:
        raise ValueError("L and M must be positive")
    theta = np.arange(1, M + 1, dtype=float) ** -theta_power
    coeffs = np.empty((L, M))
    for ell in range(L):
        # sub-stream index = illumination number g^(ell + 2)
        rng = substream(seed, ILLUMINATION_STREAM, ell + 2)
        coeffs[ell] = theta * rng.standard_normal(M)
    return IlluminationSet(L, M, int(seed), float(theta_power), coeffs)


def trace_values(g, mesh: Mesh) -> np.ndarray:
    """Nodal boundary interpolant of ``g``, ordered as ``mesh.boundary_nodes``."""
    return np.asarray(g(mesh.arclength), dtype=float)


def trace_on_mesh(g, mesh: Mesh) -> dict[int, float]:
    return dict(zip(mesh.boundary_nodes.tolist(), trace_values(g, mesh).tolist()))
