"""End-to-end experiments: single reconstructions and noise-level rate studies."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import illumination as illum
from .coefficients import ExampleSpec
from .fem import FeFunction
from .illumination import IlluminationSet, sample_illuminations, trace_values
from .inversion import (
    AdmissibleBox,
    InversionConfig,
    InversionResult,
    LeastSquaresProblem,
    invert_stage1,
    invert_stage2,
    relative_errors,
    relative_l2,
    splice_qstar,
)
from .mesh import build_unit_square_mesh, default_subdomain
from .outputs import emit_heatmap, write_table_csv  # noqa: F401  (re-exported)
from .synth import C_LOWER_FLOOR, ExactData, NoisyDataSet, make_dataset, synthesize_exact

log = logging.getLogger(__name__)

RATE_COLUMNS = ["delta", "n", "alpha", "L", "seed", "e_D", "e_sigma", "iters", "J_final"]
BOX_SAFETY = 2.0


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage} failed: {cause}")
        self.stage = stage


def make_box(spec: ExampleSpec, data: NoisyDataSet, D_h: FeFunction, safety: float = BOX_SAFETY) -> AdmissibleBox:
    """Box for ``q = D u1^2`` implied by the declared coefficient bounds.

    ``u1 <= 1`` by the maximum principle and ``u1 >= c_lower / Lambda_sigma``
    after clamping the reference energy; both ends are widened by ``safety``.
    On the boundary ``u1 = 1``, so ``q`` equals ``D`` there.
    """
    u_min = data.c_lower / spec.Lambda_sigma
    lower = u_min**2 / spec.Lambda_D / safety
    upper = spec.Lambda_D * safety
    return AdmissibleBox(lower, upper, D_h.values[D_h.mesh.boundary_nodes])


def run_pipeline(spec: ExampleSpec, illums: IlluminationSet, data: NoisyDataSet, exact_D: FeFunction,
                 exact_sigma: FeFunction, alpha: float, max_iters: int = 500, grad_tol: float = 1e-8,
                 q_override: FeFunction | None = None) -> InversionResult:
    """Stage 1, splice, Stage 2 and error metrics on prepared data.

    ``q_override`` skips Stage 1 and uses the given field on the subdomain.
    """
    mesh = data.mesh
    try:
        box = make_box(spec, data, exact_D)
        if q_override is None:
            traces = [trace_values(g, mesh) for g in illums.traces[1:]]
            problem = LeastSquaresProblem(mesh, data.w_delta, traces, alpha)
            cfg = InversionConfig(alpha=alpha, max_iters=max_iters, grad_tol=grad_tol)
            s1 = invert_stage1(problem, box, cfg)
            q_h, history, iters = s1.q, s1.objective_history, s1.iterations
            converged, stagnated = s1.converged, s1.stagnated
        else:
            q_h, history, iters, converged, stagnated = q_override, [], 0, True, False
    except Exception as exc:  # noqa: BLE001
        raise StageError("stage 1", exc) from exc
    try:
        Z1 = data.Z[0]
        q_star = splice_qstar(q_h, Z1, exact_D, exact_sigma)
        v, D_star, sigma_star = invert_stage2(q_star, Z1)
    except Exception as exc:  # noqa: BLE001
        raise StageError("stage 2", exc) from exc
    e_D, e_s = relative_errors(D_star, sigma_star, exact_D, exact_sigma)
    return InversionResult(
        q_h=q_h, q_star=q_star, v_h=v, D_star=D_star, sigma_star=sigma_star,
        objective_history=list(history), iterations=iters, e_D=e_D, e_sigma=e_s,
        converged=converged, stagnated=stagnated,
        extras={"box_lower": box.lower, "box_upper": box.upper},
    )


@dataclass
class ExampleRun:
    result: InversionResult
    data: NoisyDataSet
    exact: ExactData
    illuminations: IlluminationSet
    manifest: dict


def synthesize(spec: ExampleSpec, delta: float, n: int, L: int = 5, M: int = 5, seed: int = 0,
               n_fine: int = 128, theta_power: float = 3.0,
               c_lower_floor: float = C_LOWER_FLOOR):
    """Illuminations, fine-mesh forward solves, transfer and noisy data."""
    try:
        illums = sample_illuminations(L, M, seed, theta_power)
    except Exception as exc:  # noqa: BLE001
        raise StageError("illumination", exc) from exc
    try:
        mesh = default_subdomain(build_unit_square_mesh(n))
        exact = synthesize_exact(spec, illums, n, n_fine, mesh=mesh)
        data = make_dataset(exact.H, delta, noise_seed=seed, c_upper=spec.Lambda_sigma,
                            c_lower_floor=c_lower_floor)
    except Exception as exc:  # noqa: BLE001
        raise StageError("synthesis", exc) from exc
    return illums, exact, data


def synth_manifest(spec: ExampleSpec, illums: IlluminationSet, exact: ExactData, data: NoisyDataSet) -> dict:
    m = {
        "example": spec.id,
        "n": exact.mesh.n,
        "n_fine": exact.n_fine,
        "delta": data.delta,
        "L": illums.L,
        "M": illums.M,
        "seed": illums.seed,
        "theta_power": illums.theta_power,
        "generator": illum.GENERATOR,
        "illumination_substreams": ",".join(
            f"({illum.ILLUMINATION_STREAM};{ell + 2})" for ell in range(illums.L)),
        "noise_seed": data.noise_seed,
        "noise_substreams": ",".join(
            f"({illum.NOISE_STREAM};{c})" for c in range(1, illums.L + 2)),
        "noise_model": "iid standard normal per working-mesh node, scaled by delta*max_nodes|H|",
        "noise_scale": data.noise_scale,
        "c_lower": data.c_lower,
        "c_upper": data.c_upper,
        "subdomain": "triangles with barycenter in (h,1-h)^2",
        "diagonal": "south-west to north-east",
    }
    for ell, row in enumerate(illums.coefficients):
        m[f"a_{ell + 2}"] = row
    return m


def run_example(spec: ExampleSpec, delta: float, n: int, alpha: float, L: int = 5, M: int = 5,
                seed: int = 0, n_fine: int = 128, max_iters: int = 500, grad_tol: float = 1e-8,
                theta_power: float = 3.0, c_lower_floor: float = C_LOWER_FLOOR,
                skip_stage1: bool = False) -> ExampleRun:
    """Full pipeline for one (example, delta, n, alpha, seed) cell.

    With ``skip_stage1`` the interpolant of the exact ``q = D u1^2`` replaces
    the Stage 1 reconstruction.
    """
    illums, exact, data = synthesize(spec, delta, n, L, M, seed, n_fine, theta_power, c_lower_floor)
    q_override = exact_q(exact) if skip_stage1 else None
    result = run_pipeline(spec, illums, data, exact.D, exact.sigma, alpha, max_iters, grad_tol,
                          q_override=q_override)
    manifest = synth_manifest(spec, illums, exact, data)
    manifest.update(result_manifest(result, alpha, max_iters, grad_tol, exact))
    return ExampleRun(result, data, exact, illums, manifest)


def exact_q(exact: ExactData) -> FeFunction:
    return FeFunction(exact.mesh, exact.D.values * exact.u[0].values ** 2)


def result_manifest(result: InversionResult, alpha, max_iters, grad_tol, exact: ExactData | None = None) -> dict:
    m = {
        "alpha": float(alpha),
        "max_iters": int(max_iters),
        "grad_tol": float(grad_tol),
        "optimizer": "projected gradient, Armijo backtracking, Barzilai-Borwein trial step",
        "box_lower": result.extras.get("box_lower"),
        "box_upper": result.extras.get("box_upper"),
        "iterations": result.iterations,
        "converged": result.converged,
        "stagnated": result.stagnated,
        "J_final": result.objective_history[-1] if result.objective_history else float("nan"),
        "e_D": result.e_D,
        "e_sigma": result.e_sigma,
    }
    if exact is not None:
        m["e_q"] = relative_l2(result.q_h, exact_q(exact))
    return m


# -- rate studies ---------------------------------------------------------------

def coupled_parameters(delta_list, base_n: int, base_alpha: float) -> list[tuple[int, float]]:
    """Mesh and weight per noise level: ``h ~ delta^(1/2)``, ``alpha ~ delta^2``.

    Anchored at the largest noise level; ``n`` is rounded to the nearest integer.
    """
    d0 = max(delta_list)
    return [(max(1, int(round(base_n * (d0 / d) ** 0.5))), base_alpha * (d / d0) ** 2)
            for d in delta_list]


def fit_rate(deltas, errors) -> float:
    """Least-squares slope of ``log e`` against ``log delta``."""
    x, y = np.log(np.asarray(deltas, float)), np.log(np.asarray(errors, float))
    if len(x) < 2:
        raise ValueError("need at least two points to fit a rate")
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


@dataclass
class RateStudy:
    example: int
    delta_list: list
    records: list = field(default_factory=list)  # one dict per (delta, seed)
    h_exponent: float = 0.5
    alpha_exponent: float = 2.0

    def mean_errors(self) -> tuple[np.ndarray, np.ndarray]:
        eD, es = [], []
        for d in self.delta_list:
            rows = [r for r in self.records if r["delta"] == d]
            eD.append(np.mean([r["e_D"] for r in rows]))
            es.append(np.mean([r["e_sigma"] for r in rows]))
        return np.array(eD), np.array(es)

    @property
    def r_D(self) -> float:
        return fit_rate(self.delta_list, self.mean_errors()[0])

    @property
    def r_sigma(self) -> float:
        return fit_rate(self.delta_list, self.mean_errors()[1])

    def rows(self):
        return [[r[c] for c in RATE_COLUMNS] for r in self.records]

    def table(self) -> str:
        eD, es = self.mean_errors()
        head = "delta    | " + " ".join(f"{d:>9.0e}" for d in self.delta_list) + " | rate"
        line_D = "e_D      | " + " ".join(f"{v:9.2e}" for v in eD) + f" | O(delta^{self.r_D:.2f})"
        line_s = "e_sigma  | " + " ".join(f"{v:9.2e}" for v in es) + f" | O(delta^{self.r_sigma:.2f})"
        return "\n".join([f"Example {self.example}", head, line_D, line_s])


def rate_study(spec: ExampleSpec, delta_list, base_n: int | None = None, base_alpha: float | None = None,
               L: int = 5, M: int = 5, seed: int = 0, n_seeds: int = 1, n_fine: int = 128,
               max_iters: int = 500, grad_tol: float = 1e-8, theta_power: float = 3.0,
               c_lower_floor: float = C_LOWER_FLOOR) -> RateStudy:
    delta_list = [float(d) for d in delta_list]
    if len(delta_list) < 3:
        raise ValueError("a rate study needs at least three noise levels")
    if any(b >= a for a, b in zip(delta_list, delta_list[1:])):
        raise ValueError("noise levels must be strictly decreasing")
    base_n = spec.anchor_n if base_n is None else base_n
    base_alpha = spec.anchor_alpha if base_alpha is None else base_alpha
    study = RateStudy(spec.id, delta_list)
    for d, (n, alpha) in zip(delta_list, coupled_parameters(delta_list, base_n, base_alpha)):
        for s in range(seed, seed + n_seeds):
            run = run_example(spec, d, n, alpha, L, M, s, n_fine, max_iters, grad_tol,
                              theta_power, c_lower_floor)
            r = run.result
            log.info("delta=%g n=%d seed=%d e_D=%.3e e_sigma=%.3e iters=%d", d, n, s, r.e_D, r.e_sigma, r.iterations)
            study.records.append({
                "delta": d, "n": n, "alpha": alpha, "L": L, "seed": s,
                "e_D": r.e_D, "e_sigma": r.e_sigma, "iters": r.iterations,
                "J_final": r.objective_history[-1],
            })
    return study
