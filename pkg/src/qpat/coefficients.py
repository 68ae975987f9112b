"""Ground-truth diffusion and absorption coefficients for the five test cases.

Each case declares bounds ``Lambda_D``, ``Lambda_sigma`` with
``1/Lambda <= coefficient <= Lambda`` on the unit square.  Case 5 is piecewise
constant and only run qualitatively.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]

sin, exp, pi = np.sin, np.exp, np.pi


@dataclass(frozen=True)
class ExampleSpec:
    id: int
    D: Field
    sigma: Field
    Lambda_D: float
    Lambda_sigma: float
    smooth: bool = True
    # (n, alpha) anchor for the rate study at the largest noise level
    anchor_n: int = 12
    anchor_alpha: float = 3e-7


def _D1(x, y):
    return 2.0 + sin(2 * pi * x) * sin(2 * pi * y)


def _s1(x, y):
    s1 = exp(-20 * (x - 0.3) ** 2 - 20 * (y - 0.7) ** 2)
    s2 = exp(-20 * (x - 0.7) ** 2 - 20 * (y - 0.3) ** 2)
    return 6.0 + 4.0 * s1 + 4.0 * s2


def _D2(x, y):
    d1 = exp(-40 * (x - 0.5) ** 2 - 40 * (y - 0.7) ** 2)
    d2 = exp(-15 * (x - 0.3) ** 2 - 15 * (y - 0.3) ** 2)
    d3 = exp(-15 * (x - 0.7) ** 2 - 15 * (y - 0.3) ** 2)
    return 1.0 + d1 - 0.5 * d2 - 0.5 * d3


def _s2(x, y):
    return 1.0 + 0.5 * sin(pi * x) * sin(pi * y) * exp(-4 * (1 - x) * y)


def _D3(x, y):
    return 1.0 + 0.5 * sin(2 * pi * x) * sin(2 * pi * y) * exp(x * y)


def _s3(x, y):
    return 3.0 + sin(3 * pi * x) * sin(3 * pi * y)


def _D4(x, y):
    return np.minimum(1.4, 1.0 + 2.0 * x * (1 - x) * sin(pi * y))


def _s4(x, y):
    return 6.0 + 2.0 * np.tanh(20 * x - 10)


def _D5(x, y):
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    return 1.0 + 0.2 * ((x - 0.3) ** 2 + (y - 0.3) ** 2 < 0.1**2)


def _s5(x, y):
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    box = (x >= 0.6) & (x <= 0.8) & (y >= 0.2) & (y <= 0.6)
    return 1.0 + 0.2 * box


EXAMPLES: dict[int, ExampleSpec] = {
    1: ExampleSpec(1, _D1, _s1, Lambda_D=3.0, Lambda_sigma=11.0, anchor_n=12, anchor_alpha=3e-7),
    2: ExampleSpec(2, _D2, _s2, Lambda_D=2.5, Lambda_sigma=2.0, anchor_n=12, anchor_alpha=5e-7),
    3: ExampleSpec(3, _D3, _s3, Lambda_D=3.0, Lambda_sigma=4.0, anchor_n=16, anchor_alpha=2e-6),
    4: ExampleSpec(4, _D4, _s4, Lambda_D=1.5, Lambda_sigma=8.0, anchor_n=12, anchor_alpha=1e-5),
    5: ExampleSpec(5, _D5, _s5, Lambda_D=1.5, Lambda_sigma=1.5, smooth=False),
}


def get_example(example_id: int) -> ExampleSpec:
    try:
        return EXAMPLES[int(example_id)]
    except KeyError:
        raise ValueError(f"unknown example {example_id!r}; choose 1..5") from None
