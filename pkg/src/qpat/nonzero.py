"""Empirical check of the non-vanishing directional gradient condition.

A triangle satisfies the condition when ``max_l |grad w_l . nu| >= C0`` with
the constant per-element gradients of the P1 quotient fields ``w_l``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fem import FeFunction, element_gradient

DEFAULT_NU = (1.0, 0.0)
DEFAULT_C0 = 0.1


@dataclass(frozen=True, eq=False)
class RegionMask:
    flags: np.ndarray
    area_fraction: float
    nu: np.ndarray
    C0: float

    @property
    def count(self) -> int:
        return int(self.flags.sum())


def directional_strength(ws: Sequence[FeFunction], nu) -> np.ndarray:
    """Per-triangle ``max_l |grad w_l . nu|``."""
    if len(ws) == 0:
        raise ValueError("need at least one field")
    nu = _unit(nu)
    mesh = ws[0].mesh
    if any(w.mesh is not mesh for w in ws):
        raise ValueError("all fields must share one mesh")
    return np.max([np.abs(element_gradient(w) @ nu) for w in ws], axis=0)


def nonzero_region(ws: Sequence[FeFunction], nu=DEFAULT_NU, C0: float = DEFAULT_C0) -> RegionMask:
    if C0 <= 0:
        raise ValueError("threshold C0 must be positive")
    strength = directional_strength(ws, nu)
    flags = strength >= C0
    areas = ws[0].mesh.areas
    return RegionMask(flags, float(areas[flags].sum() / areas.sum()), _unit(nu), float(C0))


def region_growth_curve(ws: Sequence[FeFunction], nu=DEFAULT_NU, C0: float = DEFAULT_C0,
                        nested: Sequence[Sequence[FeFunction]] | None = None) -> list[RegionMask]:
    """Masks for the prefixes ``ws[:1], ws[:2], ...``.

    Alternatively pass explicit per-L field lists via ``nested``; each must
    extend the previous one.
    """
    if nested is None:
        nested = [ws[: L + 1] for L in range(len(ws))]
    else:
        for short, long in zip(nested, nested[1:]):
            if len(long) < len(short) or any(a is not b and not np.array_equal(a.values, b.values)
                                              for a, b in zip(short, long)):
                raise ValueError("illumination sets are not nested")
    return [nonzero_region(list(fs), nu, C0) for fs in nested]


def _unit(nu) -> np.ndarray:
    nu = np.asarray(nu, dtype=float).reshape(2)
    norm = np.linalg.norm(nu)
    if norm == 0:
        raise ValueError("direction nu must be non-zero")
    return nu / norm
