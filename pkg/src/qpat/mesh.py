"""Structured triangulations of the unit square.

Nodes are numbered row by row, ``index = i + j * (n + 1)`` for the grid point
``(i / n, j / n)``.  Every grid cell is split along its south-west to
north-east diagonal into two counter-clockwise triangles:

    (SW, SE, NE)  with the right angle at SE
    (SW, NE, NW)  with the right angle at NW
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable

import numpy as np

PERIMETER = 4.0


@dataclass(frozen=True, eq=False)
class Mesh:
    n: int
    nodes: np.ndarray          # (N, 2)
    triangles: np.ndarray      # (T, 3), counter-clockwise
    boundary_nodes: np.ndarray  # sorted node indices on the boundary
    subdomain_tags: np.ndarray = field(default=None)  # (T,) bool

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        mask = np.ones(self.num_nodes, dtype=bool)
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)

    @cached_property
    def is_boundary(self) -> np.ndarray:
        mask = np.zeros(self.num_nodes, dtype=bool)
        mask[self.boundary_nodes] = True
        return mask

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas)

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """Constant gradients of the three hat functions on each triangle, (T, 3, 2)."""
        p = self.nodes[self.triangles]
        twice_area = 2.0 * self.signed_areas
        # grad(lambda_i) = rot90(opposite edge) / (2|T|)
        g = np.empty((self.num_triangles, 3, 2))
        for i in range(3):
            a = p[:, (i + 1) % 3]
            b = p[:, (i + 2) % 3]
            g[:, i, 0] = (a[:, 1] - b[:, 1]) / twice_area
            g[:, i, 1] = (b[:, 0] - a[:, 0]) / twice_area
        return g

    @cached_property
    def barycenters(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    @cached_property
    def arclength(self) -> np.ndarray:
        """Arc-length coordinate of each entry of ``boundary_nodes``."""
        return _arclength(self.nodes[self.boundary_nodes])

    def grid_index(self, i: int, j: int) -> int:
        return i + j * (self.n + 1)


def build_unit_square_mesh(n: int) -> Mesh:
    if int(n) != n or n < 1:
        raise ValueError(f"mesh needs n >= 1 subdivisions, got {n!r}")
    n = int(n)
    m = n + 1
    t = np.linspace(0.0, 1.0, m)
    X, Y = np.meshgrid(t, t)  # row j holds y = t[j]
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    # pin the exact boundary coordinates
    nodes[np.isclose(nodes, 0.0, atol=1e-15)] = 0.0
    nodes[np.isclose(nodes, 1.0, atol=1e-15)] = 1.0

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    sw = i + j * m
    se = sw + 1
    nw = sw + m
    ne = nw + 1
    lower = np.column_stack([sw, se, ne])
    upper = np.column_stack([sw, ne, nw])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    on_bnd = (
        (nodes[:, 0] == 0.0) | (nodes[:, 0] == 1.0)
        | (nodes[:, 1] == 0.0) | (nodes[:, 1] == 1.0)
    )
    boundary = np.flatnonzero(on_bnd)
    return Mesh(
        n=n,
        nodes=nodes,
        triangles=triangles,
        boundary_nodes=boundary,
        subdomain_tags=np.zeros(len(triangles), dtype=bool),
    )


def tag_subdomain(mesh: Mesh, inside: Callable[[float, float], bool]) -> Mesh:
    """Return a copy of ``mesh`` whose tags mark triangles with barycenter inside."""
    tags = np.array([bool(inside(x, y)) for x, y in mesh.barycenters], dtype=bool)
    return replace(mesh, subdomain_tags=tags)


def default_subdomain(mesh: Mesh) -> Mesh:
    """Tag every triangle that does not touch the boundary."""
    h = mesh.h
    lo, hi = h, 1.0 - h
    return tag_subdomain(mesh, lambda x, y: lo < x < hi and lo < y < hi)


def _arclength(xy: np.ndarray) -> np.ndarray:
    x, y = xy[:, 0], xy[:, 1]
    s = np.full(len(xy), np.nan)
    bottom = y == 0.0
    right = (x == 1.0) & ~bottom
    top = (y == 1.0) & ~right
    left = (x == 0.0) & ~bottom & ~top
    s[bottom] = x[bottom]
    s[right] = 1.0 + y[right]
    s[top] = 2.0 + (1.0 - x[top])
    s[left] = 3.0 + (1.0 - y[left])
    if np.isnan(s).any():
        raise ValueError("point not on the boundary of the unit square")
    return s


def boundary_arclength(mesh: Mesh) -> dict[int, float]:
    """Counter-clockwise arc length from (0, 0), in [0, 4)."""
    return dict(zip(mesh.boundary_nodes.tolist(), mesh.arclength.tolist()))


def edge_multiplicity(mesh: Mesh) -> dict[tuple[int, int], int]:
    counts: dict[tuple[int, int], int] = {}
    for tri in mesh.triangles:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (int(min(a, b)), int(max(a, b)))
            counts[key] = counts.get(key, 0) + 1
    return counts


def mesh_info(mesh: Mesh) -> dict[str, float | int]:
    return {
        "n": mesh.n,
        "h": mesh.h,
        "nodes": mesh.num_nodes,
        "triangles": mesh.num_triangles,
        "boundary_nodes": len(mesh.boundary_nodes),
        "interior_nodes": len(mesh.interior_nodes),
    }
