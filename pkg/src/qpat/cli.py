"""Command line entry point: ``qpat <subcommand> ...``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .coefficients import get_example
from .config import resolve
from .fem import FeFunction, nodal_interpolate
from .illumination import IlluminationSet, sample_illuminations
from .inversion import InversionResult
from .mesh import build_unit_square_mesh, default_subdomain, mesh_info
from .nonzero import nonzero_region
from .outputs import (
    emit_heatmap,
    mask_image,
    read_manifest,
    read_nodal_csv,
    write_manifest,
    write_nodal_csv,
    write_pgm,
    write_table_csv,
)
from .synth import NoisyDataSet, quotient_data, synthesize_exact


def _global(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--config", type=Path, default=None, help="key=value file overriding defaults")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qpat", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh-info", help="print mesh counts")
    _global(p)
    p.add_argument("--n", type=int, default=None)

    p = sub.add_parser("synth", help="synthesize noisy optical-energy data")
    _global(p)
    p.add_argument("--example", type=int, default=None)
    p.add_argument("--n-fine", dest="n_fine", type=int, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--L", type=int, default=None)
    p.add_argument("--M", type=int, default=None)

    p = sub.add_parser("nonzero", help="region where the directional gradient condition holds")
    _global(p)
    p.add_argument("--example", type=int, default=None)
    p.add_argument("--n", type=int, default=None, help="working mesh (default 64)")
    p.add_argument("--n-fine", dest="n_fine", type=int, default=None)
    p.add_argument("--L", type=int, default=None)
    p.add_argument("--M", type=int, default=None)
    p.add_argument("--C0", type=float, default=None)
    p.add_argument("--nu", type=str, default=None, help="direction as x,y")
    p.add_argument("--trials", type=int, default=1)

    p = sub.add_parser("invert", help="two-stage reconstruction from a synth directory")
    _global(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--max-iters", dest="max_iters", type=int, default=None)
    p.add_argument("--grad-tol", dest="grad_tol", type=float, default=None)

    p = sub.add_parser("rates", help="noise-level convergence study")
    _global(p)
    p.add_argument("--example", type=int, default=None)
    p.add_argument("--deltas", type=str, default="1e-2,5e-3,2e-3,1e-3")
    p.add_argument("--base-n", dest="base_n", type=int, default=None)
    p.add_argument("--base-alpha", dest="base_alpha", type=float, default=None)
    p.add_argument("--L", type=int, default=None)
    p.add_argument("--M", type=int, default=None)
    p.add_argument("--n-seeds", dest="n_seeds", type=int, default=1)
    p.add_argument("--n-fine", dest="n_fine", type=int, default=None)
    p.add_argument("--max-iters", dest="max_iters", type=int, default=None)
    p.add_argument("--grad-tol", dest="grad_tol", type=float, default=None)
    return parser


def _cfg(args, *keys) -> dict:
    overrides = {k: getattr(args, k, None) for k in keys}
    overrides["seed"] = args.seed
    return resolve(overrides, args.config)


def _out(args, default: str) -> Path:
    out = args.out or Path(default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_mesh_info(args) -> int:
    cfg = _cfg(args, "n")
    for k, v in mesh_info(build_unit_square_mesh(cfg["n"])).items():
        print(f"{k}={v}")
    return 0


def cmd_synth(args) -> int:
    cfg = _cfg(args, "example", "n_fine", "n", "delta", "L", "M")
    spec = get_example(cfg["example"])
    illums, exact, data = harness.synthesize(
        spec, cfg["delta"], cfg["n"], cfg["L"], cfg["M"], cfg["seed"], cfg["n_fine"],
        cfg["theta_power"], cfg["c_lower_floor"])
    out = _out(args, "synth_out")
    for ell, z in enumerate(data.Z, start=1):
        write_nodal_csv(out / f"Z_{ell}.csv", z)
    for ell, h in enumerate(data.H, start=1):
        write_nodal_csv(out / f"H_{ell}.csv", h)
    write_manifest(out / "manifest.txt", harness.synth_manifest(spec, illums, exact, data))
    print(f"wrote {len(data.Z)} channels on n={cfg['n']} (fine n={exact.n_fine}) to {out}")
    return 0


def load_synth(directory: Path):
    """Rebuild the data set, illuminations and ground truth from a synth directory."""
    man = read_manifest(directory / "manifest.txt")
    spec = get_example(int(man["example"]))
    L, M = int(man["L"]), int(man["M"])
    mesh = default_subdomain(build_unit_square_mesh(int(man["n"])))
    coeffs = np.array([[float(x) for x in man[f"a_{ell + 2}"].split(",")] for ell in range(L)])
    illums = IlluminationSet(L, M, int(man["seed"]), float(man["theta_power"]), coeffs)
    Z = [read_nodal_csv(directory / f"Z_{ell}.csv", mesh) for ell in range(1, L + 2)]
    w_delta, _ = quotient_data(Z)
    data = NoisyDataSet(
        delta=float(man["delta"]), Z=Z, w_delta=w_delta,
        c_lower=float(man["c_lower"]), c_upper=float(man["c_upper"]),
        noise_seed=int(man["noise_seed"]),
    )
    D_h = nodal_interpolate(spec.D, mesh)
    s_h = nodal_interpolate(spec.sigma, mesh)
    return man, spec, illums, data, D_h, s_h


def write_result(out: Path, result: InversionResult, manifest: dict) -> None:
    write_nodal_csv(out / "q_star.csv", result.q_star)
    write_nodal_csv(out / "D_star.csv", result.D_star)
    write_nodal_csv(out / "sigma_star.csv", result.sigma_star)
    write_table_csv(out / "objective_history.csv", ["iteration", "J"],
                    list(enumerate(result.objective_history)))
    emit_heatmap(result.D_star, out / "D_star.pgm")
    emit_heatmap(result.sigma_star, out / "sigma_star.pgm")
    write_manifest(out / "manifest.txt", manifest)


def cmd_invert(args) -> int:
    cfg = _cfg(args, "alpha", "max_iters", "grad_tol")
    man, spec, illums, data, D_h, s_h = load_synth(args.data)
    result = harness.run_pipeline(spec, illums, data, D_h, s_h, cfg["alpha"],
                                  cfg["max_iters"], cfg["grad_tol"])
    manifest = dict(man)
    manifest["data"] = str(args.data)
    manifest.update(harness.result_manifest(result, cfg["alpha"], cfg["max_iters"], cfg["grad_tol"]))
    out = _out(args, "invert_out")
    write_result(out, result, manifest)
    print(f"e_D={result.e_D:.4e} e_sigma={result.e_sigma:.4e} iterations={result.iterations}")
    return 0


def quotient_fields(spec, illums: IlluminationSet, n: int, n_fine: int):
    mesh = default_subdomain(build_unit_square_mesh(n))
    exact = synthesize_exact(spec, illums, n, n_fine, mesh=mesh)
    ref = exact.H[0].values
    return mesh, [FeFunction(mesh, h.values / ref) for h in exact.H[1:]]


def cmd_nonzero(args) -> int:
    cfg = _cfg(args, "example", "n_fine", "L", "M", "C0")
    n = args.n or 64
    nu = tuple(float(t) for t in args.nu.split(",")) if args.nu else (cfg["nu_x"], cfg["nu_y"])
    spec = get_example(cfg["example"])
    out = _out(args, "nonzero_out")
    covered = 0
    for trial in range(args.trials):
        seed = cfg["seed"] + trial
        illums = sample_illuminations(cfg["L"], cfg["M"], seed, cfg["theta_power"])
        mesh, ws = quotient_fields(spec, illums, n, cfg["n_fine"])
        masks = [nonzero_region(ws[:L], nu, cfg["C0"]) for L in range(1, cfg["L"] + 1)]
        final = masks[-1]
        covered += bool(np.all(final.flags[mesh.subdomain_tags]))
        if trial == 0:
            for L, m in enumerate(masks, start=1):
                print(f"L={L} area_fraction={m.area_fraction:.6f}")
                write_table_csv(out / f"mask_L{L}.csv", ["triangle_id", "flagged"],
                                [(i, int(f)) for i, f in enumerate(m.flags)])
                write_pgm(out / f"mask_L{L}.pgm", mask_image(mesh, m.flags))
    if args.trials > 1:
        print(f"trials={args.trials} covering_fraction={covered / args.trials:.6f}")
    return 0


def cmd_rates(args) -> int:
    cfg = _cfg(args, "example", "L", "M", "n_fine", "max_iters", "grad_tol")
    spec = get_example(cfg["example"])
    deltas = [float(t) for t in args.deltas.split(",")]
    study = harness.rate_study(
        spec, deltas, args.base_n, args.base_alpha, cfg["L"], cfg["M"], cfg["seed"], args.n_seeds,
        cfg["n_fine"], cfg["max_iters"], cfg["grad_tol"], cfg["theta_power"], cfg["c_lower_floor"])
    out = _out(args, "rates_out")
    write_table_csv(out / "rates.csv", harness.RATE_COLUMNS, study.rows())
    table = study.table()
    (out / "table.txt").write_text(table + "\n")
    print(table)
    return 0


COMMANDS = {
    "mesh-info": cmd_mesh_info,
    "synth": cmd_synth,
    "nonzero": cmd_nonzero,
    "invert": cmd_invert,
    "rates": cmd_rates,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, harness.StageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
