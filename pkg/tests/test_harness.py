import json

import numpy as np
import pytest

from rgmsfem.coefficient import read_raster
from rgmsfem.errors import ArtifactError, ConfigError
from rgmsfem.fem import energy_norm, weighted_l2_norm
from rgmsfem.harness import artifacts, outputs, pipeline
from rgmsfem.harness.cli import main, parse_mu
from rgmsfem.harness.config import load_config, preset, resolve

from conftest import small_config

SMALL = {"preset": "paper41", "mesh": {"nx": 20, "ny": 20, "Nx": 4, "Ny": 4}, "n_s": 12, "l": 3,
         "gpc_degree": 2}


def write_config(path, **overrides):
    path.write_text(json.dumps({**SMALL, **overrides}))
    return path


def test_config_defaults_and_presets():
    cfg = preset("paper41")
    assert cfg["mesh"] == {"nx": 100, "ny": 100, "Nx": 5, "Ny": 5}
    assert (cfg["n_s"], cfg["l"], cfg["pod_eps"], cfg["mu_star"]) == (50, 5, 1e-6, [[0.6]])
    assert preset("case3")["M"] == 4 and len(preset("case3")["coefficient"]) == 4
    with pytest.raises(ConfigError):
        preset("nope")


@pytest.mark.parametrize("bad", [
    {"colour": "red"},
    {"mesh": {"nx": 20, "ny": 20, "Nx": 4}},
    {"mu_star": [[0.1, 0.2]]},
    {"pod_eps": 1.5},
    {"predictor": "svm"},
    {"problem": {"source": "benchmark", "extra": 1}},
])
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        resolve({**SMALL, **bad})


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.json")


def test_parse_mu():
    assert parse_mu("0.6") == [[0.6]]
    assert parse_mu("0.1,0.2/0.3,0.4", 2) == [[0.1, 0.2], [0.3, 0.4]]
    with pytest.raises(ConfigError):
        parse_mu("0.1,0.2", 1)
    with pytest.raises(ConfigError):
        parse_mu("abc")


def test_bundle_round_trip(tmp_path, rng):
    import scipy.sparse as sp
    A = sp.random(12, 9, density=0.3, random_state=3, format="csr")
    a = {"x": rng.standard_normal((3, 4)), "n": np.arange(5)}
    artifacts.pack_sparse("A", A, a)
    artifacts.pack_list("L", [np.ones(2), np.zeros((2, 2))], a)
    artifacts.save_bundle(tmp_path / "b.npz", {"k": 1}, a)
    header, b = artifacts.load_bundle(tmp_path / "b.npz")
    assert header["k"] == 1 and header["format"] == "rgmsfem-bundle"
    assert np.array_equal(b["x"], a["x"]) and np.array_equal(b["n"], a["n"])
    assert (artifacts.unpack_sparse("A", b) != A).nnz == 0
    assert [x.shape for x in artifacts.unpack_list("L", b)] == [(2,), (2, 2)]
    (tmp_path / "junk.npz").write_bytes(b"nope")
    with pytest.raises(ArtifactError):
        artifacts.load_bundle(tmp_path / "junk.npz")
    with pytest.raises(ArtifactError):
        artifacts.load_bundle(tmp_path / "absent.npz")


def test_offline_rerun_is_bit_identical(small_model, tmp_path):
    first = pipeline.save_model(small_model, tmp_path / "a")
    again = pipeline.save_model(pipeline.run_offline(small_config()), tmp_path / "b")
    assert first.read_bytes() == again.read_bytes()


def test_reload_equals_memory(small_q2_model, tmp_path):
    m = small_q2_model
    pipeline.save_model(m, tmp_path)
    r = pipeline.load_model(tmp_path)
    for A, B in zip(m.reduced.A, r.reduced.A):
        assert (A != B).nnz == 0
    assert np.array_equal(m.reduced.F, r.reduced.F)
    assert all(np.array_equal(a, b) for a, b in zip(m.reduced.G, r.reduced.G))
    assert (m.R_tilde != r.R_tilde).nnz == 0
    assert np.array_equal(m.layout.entries, r.layout.entries)
    for kind in ("gpc", "gpr"):
        mu = [0.8, 0.3]
        assert np.array_equal(m.predictors[kind].predict(mu), r.predictors[kind].predict(mu))
        assert np.array_equal(pipeline.online_solve(m, mu, 2, kind).values,
                              pipeline.online_solve(r, mu, 2, kind).values)


def test_q1_pod_rank_one(small_model, paper41_model):
    assert np.all(small_model.pod_sizes == 1)
    assert np.all(paper41_model.pod_sizes == 1)
    assert small_model.pod_tails.max() <= 1e-12


def test_pooled_pod_mode():
    m = pipeline.run_offline(small_config(pod_mode="neighborhood", predictor="gpc"))
    assert len(m.pod_V) == m.mesh.n_coarse_nodes
    assert np.all(m.blocks[:, 1] == -1)
    sol = pipeline.online_solve(m, 0.6, 3)
    ref = pipeline.online_solve(pipeline.run_offline(small_config(predictor="gpc")), 0.6, 3)
    assert np.allclose(sol.values, ref.values, atol=1e-8 * abs(ref.values).max())


def test_error_report_rows(small_model):
    report = pipeline.run_online(small_model, [[0.6], [1.2]])
    methods = [r["method"] for r in report.rows]
    assert methods == ["FEM-fine", "GMsFEM", "gPC-GMsFEM", "GPR-GMsFEM"] * 2
    for r in report.rows:
        assert r["l2_rel"] >= 0 and r["energy_rel"] >= 0
    by = {(tuple(r["mu"]), r["method"]): r for r in report.rows}
    for mu in ((0.6,), (1.2,)):
        for kind in ("gPC-GMsFEM", "GPR-GMsFEM"):
            for key in ("l2_rel", "energy_rel"):
                assert abs(by[mu, kind][key] - by[mu, "GMsFEM"][key]) <= 1e-6
    d = report.diagnostics
    assert d["pod_size_max"] == 1 and d["Lambda_star"] == small_model.gap(3)


def test_emit_outputs(small_model, tmp_path):
    report = pipeline.run_online(small_model, [[0.6]])
    files = outputs.emit_outputs(report, tmp_path, small_model.mesh, small_model.config)
    text = (tmp_path / "errors.csv").read_text()
    assert text.splitlines()[0] == "mu,method,l2_rel,energy_rel,t_predict_s,t_assemble_s,t_solve_s"
    assert len(text.splitlines()) == 5
    img, maxval = outputs.read_pgm(tmp_path / "u_000_GMsFEM.pgm")
    assert img.shape == (small_model.mesh.ny + 1, small_model.mesh.nx + 1) and maxval == 65535
    assert img.min() == 0 and img.max() == 65535
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seed"] == 0 and sorted(files) == manifest["files"]
    assert "numpy" in manifest["versions"]


def test_pgm_orientation():
    v = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])  # bottom row low, top row high
    lines = outputs.pgm(v).splitlines()
    assert lines[:3] == ["P2", "3 2", "65535"]
    assert lines[3] == "65535 65535 65535" and lines[4] == "0 0 0"
    assert outputs.pgm(np.ones((2, 2))).splitlines()[3] == "0 0"


def test_norms_recomputed_from_rasters(small_q2_model, tmp_path):
    m = small_q2_model
    report = pipeline.run_online(m, [[0.6, 0.4]])
    outputs.emit_outputs(report, tmp_path, m.mesh, m.config)
    rows = outputs.read_error_csv(tmp_path / "errors.csv")
    mu = np.array([0.6, 0.4])
    u = read_raster(tmp_path / "u_000_FEM-fine.txt").ravel()
    nu = (weighted_l2_norm(m.mesh, m.coeff, mu, u), energy_norm(m.mesh, m.coeff, mu, u))
    for r in rows[1:]:
        v = read_raster(tmp_path / f"u_000_{r['method']}.txt").ravel()
        l2 = weighted_l2_norm(m.mesh, m.coeff, mu, u - v) / nu[0]
        en = energy_norm(m.mesh, m.coeff, mu, u - v) / nu[1]
        assert abs(l2 - r["l2_rel"]) <= 1e-12
        assert abs(en - r["energy_rel"]) <= 1e-12


def test_manifest_reproduces_run(tmp_path):
    cfg_path = write_config(tmp_path / "cfg.json", predictor="gpc")
    runs = []
    for name in ("a", "b"):
        cfg = load_config(cfg_path if name == "a" else tmp_path / "a" / "manifest.json")
        model = pipeline.run_offline(cfg)
        outputs.emit_outputs(pipeline.run_online(model), tmp_path / name, model.mesh, cfg)
        runs.append((tmp_path / name / "errors.csv").read_bytes())
    assert runs[0] == runs[1]


def test_sweep_and_timing(small_model):
    rows = pipeline.sweep_basis(small_model, [0.6], kinds=("gpc",))
    assert [r["dof"] for r in rows if r["method"] == "gPC-GMsFEM"] == [25, 50, 75]
    with pytest.raises(ConfigError):
        pipeline.compare_timing(small_model, reps=0)
    t = pipeline.compare_timing(small_model, [[0.6]], l_values=(1, 2), reps=2)
    assert [r["l"] for r in t] == [1, 2]
    assert all(r["online_eigensolves"] == 0 and r["online_fine_assembly"] == 0 for r in t)
    text = outputs.table_csv(outputs.TIMING_HEADER, t)
    assert text.splitlines()[0] == outputs.TIMING_HEADER


def test_reference_without_training(tmp_path):
    cfg = resolve(SMALL)
    report, mesh, _, _ = pipeline.reference(cfg, [[0.6]], 2)
    assert [r["method"] for r in report.rows] == ["FEM-fine", "GMsFEM"]
    assert 0 < report.rows[1]["l2_rel"] < 0.5


def test_cli_end_to_end(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json")
    art = tmp_path / "art"
    assert main(["offline", "--config", str(cfg), "--out", str(art)]) == 0
    assert (art / "offline.npz").exists() and (art / "manifest.json").exists()
    assert main(["online", "--artifacts", str(art), "--mu", "0.6/1.1", "--compare", "--l", "2"]) == 0
    lines = (art / "online" / "errors.csv").read_text().splitlines()
    assert len(lines) == 1 + 2 * 4
    assert main(["sweep", "--artifacts", str(art), "--lmax", "3", "--mu", "0.6"]) == 0
    assert (art / "sweep" / "decay.pgm").exists()
    assert main(["timing", "--artifacts", str(art), "--reps", "1", "--l", "1", "2"]) == 0
    assert main(["reference", "--config", str(cfg), "--mu", "0.6", "--l", "1",
                 "--out", str(tmp_path / "ref")]) == 0
    out = capsys.readouterr().out
    assert "offline artifacts written" in out and "t_online_s" in out


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**SMALL, "surprise": True}))
    assert main(["offline", "--config", str(bad)]) == 2
    assert main(["online", "--artifacts", str(tmp_path / "nowhere"), "--mu", "0.6"]) == 4
    cfg = write_config(tmp_path / "cfg.json", predictor="gpc")
    art = tmp_path / "art"
    assert main(["offline", "--config", str(cfg), "--out", str(art)]) == 0
    assert main(["online", "--artifacts", str(art), "--mu", "0.1,0.2"]) == 2
    assert main(["online", "--artifacts", str(art), "--mu", "-0.3"]) == 2
    assert main(["timing", "--artifacts", str(art), "--reps", "0"]) == 2
    assert "error:" in capsys.readouterr().err
