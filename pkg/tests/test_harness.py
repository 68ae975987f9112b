import numpy as np
import pytest

from qpat.coefficients import get_example
from qpat.config import DEFAULTS, load_config, resolve
from qpat.fem import nodal_interpolate
from qpat.harness import (
    RateStudy,
    coupled_parameters,
    fit_rate,
    make_box,
    rate_study,
    run_example,
    synthesize,
)
from qpat.mesh import build_unit_square_mesh
from qpat.outputs import (
    emit_heatmap,
    read_manifest,
    read_nodal_csv,
    read_pgm,
    write_manifest,
    write_nodal_csv,
)


def test_fit_rate():
    d = np.array([1e-2, 5e-3, 2e-3, 1e-3])
    assert abs(fit_rate(d, 3 * d**0.25) - 0.25) < 1e-12
    assert abs(fit_rate(d, np.full(4, 0.1))) < 1e-12
    with pytest.raises(ValueError):
        fit_rate([1e-2], [1.0])


def test_coupled_parameters():
    pairs = coupled_parameters([1e-2, 5e-3, 2e-3, 1e-3], 12, 3e-7)
    assert [n for n, _ in pairs] == [12, 17, 27, 38]
    np.testing.assert_allclose([a for _, a in pairs], [3e-7, 7.5e-8, 1.2e-8, 3e-9])


def test_rate_study_rejects_bad_delta_lists():
    spec = get_example(1)
    with pytest.raises(ValueError):
        rate_study(spec, [1e-2, 1e-3])
    with pytest.raises(ValueError):
        rate_study(spec, [1e-3, 1e-2, 1e-4])


def test_rate_study_table():
    study = RateStudy(1, [1e-2, 1e-3, 1e-4])
    for d in study.delta_list:
        for s in range(2):
            study.records.append({"delta": d, "n": 1, "alpha": 1.0, "L": 5, "seed": s,
                                  "e_D": d**0.5 * (1 + s), "e_sigma": d, "iters": 1, "J_final": 0.0})
    assert abs(study.r_D - 0.5) < 1e-12 and abs(study.r_sigma - 1.0) < 1e-12
    assert "O(delta^0.50)" in study.table()
    assert len(study.rows()) == 6 and len(study.rows()[0]) == 9


def test_box_contains_truth():
    spec = get_example(1)
    _, exact, data = synthesize(spec, 1e-2, 12, L=2, seed=1)
    box = make_box(spec, data, exact.D)
    q = exact.D.values * exact.u[0].values ** 2
    assert box.lower <= q.min() and q.max() <= box.upper
    np.testing.assert_array_equal(box.fixed_boundary, exact.D.values[exact.mesh.boundary_nodes])


def test_run_example_deterministic():
    spec = get_example(1)
    a = run_example(spec, 1e-2, 8, 3e-7, L=2, seed=4, n_fine=32, max_iters=20)
    b = run_example(spec, 1e-2, 8, 3e-7, L=2, seed=4, n_fine=32, max_iters=20)
    np.testing.assert_array_equal(a.result.D_star.values, b.result.D_star.values)
    assert a.result.e_D == b.result.e_D
    assert {k: str(v) for k, v in a.manifest.items()} == {k: str(v) for k, v in b.manifest.items()}


def test_run_example_with_exact_q_is_accurate():
    spec = get_example(1)
    run = run_example(spec, 0.0, 16, 1e-7, L=1, seed=0, n_fine=128, skip_stage1=True)
    assert run.result.e_D < 0.02 and run.result.e_sigma < 0.02
    assert run.manifest["e_q"] == 0.0


def test_heatmap_codec(tmp_path):
    mesh = build_unit_square_mesh(4)
    path, side = emit_heatmap(nodal_interpolate(lambda x, y: 7.0, mesh), tmp_path / "c.pgm")
    img = read_pgm(path)
    assert img.shape == (5, 5) and np.all(img == 128)
    path, side = emit_heatmap(nodal_interpolate(lambda x, y: x, mesh), tmp_path / "x.pgm")
    img = read_pgm(path)
    assert np.all(np.diff(img.astype(int), axis=1) > 0)
    assert img[0, 0] == 0 and img[0, -1] == 255
    meta = read_manifest(side)
    assert float(meta["min"]) == 0.0 and float(meta["max"]) == 1.0 and meta["rows"] == "5"
    # top row is y = 1
    _, _ = emit_heatmap(nodal_interpolate(lambda x, y: y, mesh), tmp_path / "y.pgm")
    img = read_pgm(tmp_path / "y.pgm")
    assert img[0, 0] == 255 and img[-1, 0] == 0


def test_nodal_csv_round_trip(tmp_path):
    mesh = build_unit_square_mesh(3)
    f = nodal_interpolate(lambda x, y: np.exp(x) / 3 + y, mesh)
    write_nodal_csv(tmp_path / "f.csv", f)
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == "node_id,x,y,value"
    np.testing.assert_array_equal(read_nodal_csv(tmp_path / "f.csv", mesh).values, f.values)


def test_manifest_round_trip(tmp_path):
    write_manifest(tmp_path / "m.txt", {"a": 1, "b": 0.1, "c": "text"})
    assert read_manifest(tmp_path / "m.txt") == {"a": "1", "b": "0.1", "c": "text"}


def test_config(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("# comment\nn = 20\ndelta=5e-3\ntheta_power=2\n")
    cfg = load_config(cfg_file)
    assert cfg == {"n": 20, "delta": 5e-3, "theta_power": 2.0}
    merged = resolve({"n": 30, "L": None}, cfg_file)
    assert merged["n"] == 30 and merged["L"] == DEFAULTS["L"] and merged["delta"] == 5e-3
    cfg_file.write_text("bogus=1\n")
    with pytest.raises(ValueError):
        load_config(cfg_file)
