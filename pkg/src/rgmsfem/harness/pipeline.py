"""Offline training, online prediction, basis sweeps and timing comparisons."""
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .. import instrument
from ..coefficient import AffineCoefficient, ThetaTerm, load_field, sample_training_set
from ..errors import ConfigError, InadmissibleParameterError, RGMsFEMError
from ..fem import (assemble_load, benchmark_boundary, benchmark_source, combine,
                   dirichlet_lift, fine_operators, relative_errors, solve_fine)
from ..grid import all_neighborhoods, build_mesh
from ..msbasis import (align_signs, basis_matrix, build_pou,
                       build_snapshots, check_crossings, local_operators, offline_basis,
                       project_pencil, solve_pencil)
from ..online import (CoarseSolution, OnlineLayout, _spd_coarse_solve, build_online_space,
                      gmsfem_reference_solve, gmsfem_setup, solve_online)
from ..predict import GpcPredictor, GprPredictor, HermiteBasis, fit_gpc, fit_gpr
from ..rom import ReducedOperators, assemble_snapshot_matrix, pod_reduce, reduce_operators
from . import artifacts

log = logging.getLogger(__name__)

METHODS = {"fine": "FEM-fine", "gmsfem": "GMsFEM", "gpc": "gPC-GMsFEM", "gpr": "GPR-GMsFEM"}
BUNDLE = "offline.npz"


def _data_function(choice, default):
    if choice == "benchmark":
        return default
    if choice == "zero":
        choice = 0.0
    value = float(choice)
    return lambda x, y: np.full(np.shape(x), value)


def problem_data(cfg):
    """Source ``f`` and boundary data ``p`` as callables of ``(x, y)``."""
    pb = cfg["problem"]
    return (_data_function(pb["source"], benchmark_source),
            _data_function(pb["boundary"], benchmark_boundary))


def build_problem(cfg):
    m = cfg["mesh"]
    mesh = build_mesh(m["nx"], m["ny"], m["Nx"], m["Ny"])
    base = Path(cfg.get("_base_dir", "."))
    terms = [ThetaTerm(c["theta_id"], c["component"]) for c in cfg["coefficient"]]
    rasters = [load_field(c, mesh, base) for c in cfg["coefficient"]]
    return mesh, AffineCoefficient(terms, rasters, cfg["M"])


@dataclass
class OfflineModel:
    """Everything the online stage needs, plus offline diagnostics."""

    config: dict
    mesh: object
    coeff: object
    mus: np.ndarray
    mu_ref: np.ndarray
    eigenvalues: np.ndarray = field(repr=False)  # (n_s, n_coarse, l_max + 1)
    layout: OnlineLayout = field(repr=False)
    blocks: np.ndarray = field(repr=False)  # (n_blocks, 2) neighborhood, eigen-index (-1 pooled)
    pod_V: list = field(repr=False)
    pod_sigma: list = field(repr=False)
    predictors: dict = field(repr=False)
    reduced: ReducedOperators = field(repr=False)
    R_tilde: sp.csr_matrix = field(repr=False)
    lift: np.ndarray = field(repr=False)
    snap_R: list = field(repr=False)
    chi: list = field(repr=False)
    timings: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def l_max(self):
        return self.eigenvalues.shape[2] - 1

    def gap(self, l=None):
        """``Lambda_*``: smallest first excluded eigenvalue over neighborhoods and samples."""
        l = self.l_max if l is None else l
        return float(self.eigenvalues[:, :, l].min())

    @property
    def pod_sizes(self):
        return np.array([V.shape[1] for V in self.pod_V])

    @property
    def pod_tails(self):
        out = []
        for V, s in zip(self.pod_V, self.pod_sigma):
            s2 = s**2
            out.append(1.0 - s2[:V.shape[1]].sum() / s2.sum())
        return np.array(out)

    def gpc_residual(self):
        p = self.predictors.get("gpc")
        return float(np.max(p.residuals)) if p is not None else float("nan")

    # lazily built pieces that need fine-grid assembly; never touched by online_solve
    def fine(self):
        if "ops" not in self._cache:
            f, p = problem_data(self.config)
            ops = fine_operators(self.mesh, self.coeff)
            self._cache["ops"] = ops
            self._cache["F"] = assemble_load(self.mesh, f)
            self._cache["p"] = p
        return self._cache["ops"], self._cache["F"], self._cache["p"]

    def gmsfem(self):
        if "setup" not in self._cache:
            ops, F, p = self.fine()
            self._cache["setup"] = gmsfem_setup(self.mesh, self.coeff, F, p, ops)
        return self._cache["setup"]


def _admissible(coeff, mu):
    mu = coeff.as_mu(mu)
    if not coeff.is_admissible(mu):
        raise InadmissibleParameterError(f"parameter {mu.tolist()} is not admissible")
    return mu


def _neighborhood_eigen(mesh, coeff, nbhd, mu_ref, mus, n_ev):
    """Snapshots at ``mu_ref`` and eigenpairs of the projected pencil at every sample."""
    lo = local_operators(mesh, coeff, nbhd)
    snap = build_snapshots(mesh, coeff, mu_ref, nbhd, lo)
    Aoff, Soff = project_pencil(snap, lo.A, lo.S)
    S_ref = combine(coeff.thetas(mu_ref), Soff)
    values, vectors = [], []
    for j, mu in enumerate(mus):
        th = coeff.thetas(mu)
        try:
            w, X, _ = solve_pencil(combine(th, Aoff), combine(th, Soff), n_ev)
        except RGMsFEMError as exc:
            raise type(exc)(f"neighborhood {nbhd.index}, sample {j}: {exc}") from exc
        X = X[:, :n_ev - 1]
        # unit length in the reference weight: a Q=1 family then has identical vectors
        X = align_signs(X / np.sqrt(np.einsum("ik,ij,jk->k", X, S_ref, X)))
        values.append(w)
        vectors.append(X)
    return snap, np.array(values), np.array(vectors)


def run_offline(cfg, workers=None):
    """Snapshots, local eigenpairs for every training sample, POD, predictors, reduced operators."""
    t_start = time.perf_counter()
    mesh, coeff = build_problem(cfg)
    f, p = problem_data(cfg)
    l_max = cfg["l"]
    samples = sample_training_set(cfg["M"], cfg["n_s"], cfg["seed"], coeff)
    mus = np.array([s.mu for s in samples])
    mu_ref = np.median(mus, axis=0) if cfg["mu_ref"] is None else np.array(cfg["mu_ref"])
    mu_ref = _admissible(coeff, mu_ref)
    nbhds = all_neighborhoods(mesh)
    for n in nbhds:
        if l_max + 1 > n.L:
            raise ConfigError(f"l={l_max} needs {l_max + 1} snapshots, neighborhood {n.index} "
                              f"has {n.L}")

    pou = build_pou(mesh, coeff, mu_ref, nbhds)
    work = lambda n: _neighborhood_eigen(mesh, coeff, n, mu_ref, mus, l_max + 1)
    n_workers = workers or cfg.get("workers", 1)
    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            results = list(pool.map(work, nbhds))
    else:
        results = [work(n) for n in nbhds]
    snaps = [r[0] for r in results]
    eigenvalues = np.stack([r[1] for r in results], axis=1)
    t_eig = time.perf_counter()

    for i, (_, _, vec) in enumerate(results):
        flagged = check_crossings(list(vec))
        if flagged:
            log.warning("neighborhood %d: %d possible eigenvector crossings (sample, k): %s",
                        i, len(flagged), flagged[:5])

    # POD per (neighborhood, eigen-index) or pooled per neighborhood
    pooled = cfg["pod_mode"] == "neighborhood"
    blocks, pod_V, pod_sigma, entries, targets = [], [], [], [], []
    row, tcol = 0, 0
    for i, (_, _, vec) in enumerate(results):
        groups = [list(range(l_max))] if pooled else [[k] for k in range(l_max)]
        for ks in groups:
            S_n = assemble_snapshot_matrix(vec, ks)
            pod = pod_reduce(S_n, cfg["pod_eps"], i, -1 if pooled else ks[0])
            blocks.append((i, -1 if pooled else ks[0]))
            pod_V.append(pod.V)
            pod_sigma.append(pod.sigma)
            coords = (pod.V.T @ S_n).reshape(pod.N, len(mus), len(ks))
            for a, k in enumerate(ks):
                entries.append((i, k, row, pod.N, tcol))
                targets.append(coords[:, :, a].T)
                tcol += pod.N
            row += pod.N
    Y = np.hstack(targets)
    layout = OnlineLayout(np.array(entries, dtype=np.int64), row)
    t_pod = time.perf_counter()

    predictors = {}
    if cfg["predictor"] in ("gpc", "both"):
        predictors["gpc"] = fit_gpc(mus, Y, cfg["gpc_degree"])
    if cfg["predictor"] in ("gpr", "both"):
        predictors["gpr"] = fit_gpr(mus, Y)
    t_fit = time.perf_counter()

    mask = np.zeros(mesh.n_nodes, dtype=bool)
    mask[mesh.boundary_nodes] = True
    local_blocks = [(nbhds[i].nodes, offline_basis(pou, snaps[i], V, mask))
                    for (i, _), V in zip(blocks, pod_V)]
    R_tilde = basis_matrix(mesh, local_blocks)
    ops = fine_operators(mesh, coeff)
    F = assemble_load(mesh, f)
    lift = dirichlet_lift(mesh, p)
    offsets = np.concatenate([[0], np.cumsum([V.shape[1] for V in pod_V])])
    reduced = reduce_operators(ops.A, F, lift, R_tilde, offsets)
    t_end = time.perf_counter()

    model = OfflineModel(cfg, mesh, coeff, mus, mu_ref, eigenvalues, layout,
                         np.array(blocks, dtype=np.int64), pod_V, pod_sigma, predictors, reduced,
                         R_tilde, lift, [s.R for s in snaps], pou.chi,
                         {"eigen": t_eig - t_start, "pod": t_pod - t_eig, "fit": t_fit - t_pod,
                          "reduce": t_end - t_fit, "total": t_end - t_start})
    model._cache.update(ops=ops, F=F, p=p)
    log.info("offline: %d samples, %d neighborhoods, reduced dim %d, Lambda_* = %.6g",
             len(mus), len(nbhds), layout.dim, model.gap())
    log.info("POD sizes min/max %d/%d, largest tail %.3g", model.pod_sizes.min(),
             model.pod_sizes.max(), model.pod_tails.max())
    return model


def save_model(model, directory):
    directory = Path(directory)
    a = {"mus": model.mus, "mu_ref": model.mu_ref, "eigenvalues": model.eigenvalues,
         "layout": model.layout.entries, "blocks": model.blocks, "lift": model.lift,
         "reduced/F": model.reduced.F, "reduced/offsets": model.reduced.offsets}
    artifacts.pack_list("rasters", list(model.coeff.rasters), a)
    artifacts.pack_list("pod_V", model.pod_V, a)
    artifacts.pack_list("pod_sigma", model.pod_sigma, a)
    artifacts.pack_list("snap_R", model.snap_R, a)
    artifacts.pack_list("chi", model.chi, a)
    artifacts.pack_list("reduced/G", model.reduced.G, a)
    for q, A in enumerate(model.reduced.A):
        artifacts.pack_sparse(f"reduced/A/{q}", A, a)
    artifacts.pack_sparse("R_tilde", model.R_tilde, a)
    pred_meta = {}
    for kind, pr in model.predictors.items():
        if isinstance(pr, GpcPredictor):
            a["gpc/coef"], a["gpc/residuals"] = pr.coef, pr.residuals
            pred_meta[kind] = {"M": pr.basis.M, "p": pr.basis.p}
        else:
            for name in ("X", "mean", "signal_var", "chol", "weights"):
                a[f"gpr/{name}"] = getattr(pr, name)
            pred_meta[kind] = {"ell": pr.ell, "jitter": pr.jitter}
    config = {k: v for k, v in model.config.items() if not k.startswith("_")}
    header = {"config": config, "dim": model.layout.dim, "Q": model.reduced.Q,
              "predictors": pred_meta}
    artifacts.save_bundle(directory / BUNDLE, header, a)
    return directory / BUNDLE


def load_model(directory):
    directory = Path(directory)
    path = directory / BUNDLE if directory.is_dir() else directory
    header, a = artifacts.load_bundle(path)
    cfg = header["config"]
    m = cfg["mesh"]
    mesh = build_mesh(m["nx"], m["ny"], m["Nx"], m["Ny"])
    terms = [ThetaTerm(c["theta_id"], c["component"]) for c in cfg["coefficient"]]
    coeff = AffineCoefficient(terms, artifacts.unpack_list("rasters", a), cfg["M"])
    predictors = {}
    for kind, meta in header["predictors"].items():
        if kind == "gpc":
            predictors[kind] = GpcPredictor(HermiteBasis(meta["M"], meta["p"]), a["gpc/coef"],
                                            a["gpc/residuals"])
        else:
            predictors[kind] = GprPredictor(a["gpr/X"], meta["ell"], meta["jitter"],
                                            a["gpr/mean"], a["gpr/signal_var"], a["gpr/chol"],
                                            a["gpr/weights"])
    Q = header["Q"]
    reduced = ReducedOperators([artifacts.unpack_sparse(f"reduced/A/{q}", a) for q in range(Q)],
                               a["reduced/F"], artifacts.unpack_list("reduced/G", a),
                               a["reduced/offsets"])
    model = OfflineModel(cfg, mesh, coeff, a["mus"], a["mu_ref"], a["eigenvalues"],
                         OnlineLayout(a["layout"], int(header["dim"])), a["blocks"],
                         artifacts.unpack_list("pod_V", a), artifacts.unpack_list("pod_sigma", a),
                         predictors, reduced, artifacts.unpack_sparse("R_tilde", a), a["lift"],
                         artifacts.unpack_list("snap_R", a), artifacts.unpack_list("chi", a))
    if reduced.dim != model.layout.dim or model.R_tilde.shape != (mesh.n_nodes, reduced.dim):
        raise RGMsFEMError("artifact dimensions are inconsistent")
    return model


def online_solve(model, mu, l=None, kind="gpc", strategy=None):
    """Predictor-based coarse solve at ``mu`` using only stored offline data."""
    l = model.l_max if l is None else l
    if not 1 <= l <= model.l_max:
        raise ConfigError(f"l={l} outside 1..{model.l_max} available offline")
    if kind not in model.predictors:
        raise ConfigError(f"no {kind!r} predictor in this model")
    strategy = strategy or model.config.get("strategy", "pod")
    t0 = time.perf_counter()
    mu = _admissible(model.coeff, mu)
    thetas = model.coeff.thetas(mu)
    space = build_online_space(model.predictors[kind], model.layout.select(l), mu)
    t1 = time.perf_counter()
    if strategy == "snapshot":
        sol = _snapshot_strategy_solve(model, space, mu, thetas)
    else:
        sol = solve_online(model.reduced, space, thetas, model.R_tilde, model.lift)
    sol.mu, sol.method = mu, METHODS[kind]
    sol.timings = {"predict": t1 - t0, **sol.timings}
    return sol


def _snapshot_strategy_solve(model, space, mu, thetas):
    """Cross-check path: lift predicted coordinates to snapshot space and Galerkin-solve on the fine grid."""
    t0 = time.perf_counter()
    ops, F, _ = model.fine()
    mesh = model.mesh
    nbhds = model._cache.setdefault("nbhds", all_neighborhoods(mesh))
    mask = np.zeros(mesh.n_nodes, dtype=bool)
    mask[mesh.boundary_nodes] = True
    offsets = model.reduced.offsets
    C = space.C.tocsc()
    pieces = []
    for c, (i, k, r0, n, _) in enumerate(space.layout.entries):
        b = np.searchsorted(offsets, r0, side="right") - 1
        psi = model.pod_V[b] @ C[r0:r0 + n, c].toarray()
        phi = model.chi[i][:, None] * (model.snap_R[i] @ psi)
        phi[mask[nbhds[i].nodes]] = 0.0
        pieces.append((nbhds[i].nodes, phi))
    B = basis_matrix(mesh, pieces)
    A = ops.stiffness(mu)
    K = (B.T @ (A @ B)).toarray()
    rhs = B.T @ (F - A @ model.lift)
    t1 = time.perf_counter()
    c = _spd_coarse_solve(K, rhs)
    u = model.lift + B @ c
    return CoarseSolution(c, u, mu, {"assemble": t1 - t0, "solve": time.perf_counter() - t1})


def reference_solve(model, mu, l=None):
    """Full GMsFEM recompute at ``mu`` (snapshots, partition of unity, eigenpairs)."""
    l = model.l_max if l is None else l
    return gmsfem_reference_solve(model.gmsfem(), _admissible(model.coeff, mu), l)


def fine_solve(model, mu):
    ops, F, p = model.fine()
    t0 = time.perf_counter()
    sol = solve_fine(model.mesh, model.coeff, _admissible(model.coeff, mu), F, p, ops)
    return CoarseSolution(None, sol.values, sol.mu, {"solve": time.perf_counter() - t0},
                          METHODS["fine"])


@dataclass
class ErrorReport:
    rows: list
    solutions: dict = field(default_factory=dict, repr=False)
    diagnostics: dict = field(default_factory=dict)


def _row(sol, ref, ops):
    l2, en = (0.0, 0.0) if ref is None else relative_errors(ops, sol.mu, ref, sol.values)
    t = sol.timings
    return {"mu": [float(v) for v in sol.mu], "method": sol.method, "l2_rel": l2,
            "energy_rel": en, "t_predict_s": t.get("predict", 0.0),
            "t_assemble_s": t.get("assemble", 0.0), "t_solve_s": t.get("solve", 0.0)}


def run_online(model, mus=None, compare=True, l=None, kinds=None):
    """Predictor solves at each ``mu``; with ``compare`` also fine and GMsFEM reference solves."""
    mus = model.config["mu_star"] if mus is None else mus
    kinds = kinds or sorted(model.predictors)
    report = ErrorReport([])
    for n, mu in enumerate(mus):
        sols = [online_solve(model, mu, l, kind) for kind in kinds]
        ref = ops = None
        if compare:
            fine = fine_solve(model, mu)
            ref, ops = fine.values, model.fine()[0]
            sols = [fine, reference_solve(model, mu, l)] + sols
        for s in sols:
            report.rows.append(_row(s, None if s.method == METHODS["fine"] else ref, ops))
            report.solutions[(n, s.method)] = s.values
    lv = model.l_max if l is None else l
    report.diagnostics = {"l": lv, "Lambda_star": model.gap(lv),
                          "pod_tail_max": float(model.pod_tails.max()),
                          "pod_size_max": int(model.pod_sizes.max()),
                          "gpc_residual_max": model.gpc_residual()}
    return report


def sweep_basis(model, mu, l_values=None, kinds=("gpc",), reference=True):
    """Error rows for each per-node basis count; DOF = l times the number of coarse nodes."""
    l_values = range(1, model.l_max + 1) if l_values is None else l_values
    ops, _, _ = model.fine()
    u = fine_solve(model, mu).values
    n_coarse = model.mesh.n_coarse_nodes
    rows = []
    for l in l_values:
        sols = [online_solve(model, mu, l, k) for k in kinds]
        if reference:
            sols.append(reference_solve(model, mu, l))
        for s in sols:
            l2, en = relative_errors(ops, s.mu, u, s.values)
            rows.append({"l": l, "dof": l * n_coarse, "method": s.method, "l2_rel": l2,
                         "energy_rel": en, "Lambda_star": model.gap(l)})
    return rows


def compare_timing(model, mus=None, l_values=(1, 3, 5, 7), reps=10, kind="gpc"):
    """Mean wall time of predictor-online versus full GMsFEM recompute; warm-up run discarded."""
    if reps < 1:
        raise ConfigError("timing needs at least one repetition")
    mus = model.config["mu_star"] if mus is None else mus
    model.gmsfem()
    rows = []
    for l in l_values:
        if l > model.l_max:
            raise ConfigError(f"l={l} exceeds offline l={model.l_max}")
        t_on, t_ref = [], []
        with instrument.track() as counts:
            for mu in mus:
                online_solve(model, mu, l, kind)
                for _ in range(reps):
                    t0 = time.perf_counter()
                    online_solve(model, mu, l, kind)
                    t_on.append(time.perf_counter() - t0)
        online_counts = dict(counts)
        for mu in mus:
            reference_solve(model, mu, l)
            for _ in range(reps):
                t0 = time.perf_counter()
                reference_solve(model, mu, l)
                t_ref.append(time.perf_counter() - t0)
        on, ref = float(np.mean(t_on)), float(np.mean(t_ref))
        rows.append({"l": l, "t_online_s": on, "t_gmsfem_s": ref, "ratio": ref / on,
                     "online_eigensolves": online_counts.get("eigensolve", 0),
                     "online_fine_assembly": online_counts.get("fine_assembly", 0)})
    return rows


def reference(cfg, mus=None, l=None):
    """Fine and GMsFEM solves straight from a config, no offline training."""
    mesh, coeff = build_problem(cfg)
    f, p = problem_data(cfg)
    ops = fine_operators(mesh, coeff)
    F = assemble_load(mesh, f)
    setup = gmsfem_setup(mesh, coeff, F, p, ops)
    l = cfg["l"] if l is None else l
    mus = cfg["mu_star"] if mus is None else mus
    report = ErrorReport([])
    for n, mu in enumerate(mus):
        mu = _admissible(coeff, mu)
        t0 = time.perf_counter()
        u = solve_fine(mesh, coeff, mu, F, p, ops).values
        fine = CoarseSolution(None, u, mu, {"solve": time.perf_counter() - t0}, METHODS["fine"])
        ms = gmsfem_reference_solve(setup, mu, l)
        for s in (fine, ms):
            report.rows.append(_row(s, None if s is fine else u, ops))
            report.solutions[(n, s.method)] = s.values
    report.diagnostics = {"l": l}
    return report, mesh, coeff, ops


def config_json(cfg):
    return json.dumps({k: v for k, v in cfg.items() if not k.startswith("_")}, indent=1,
                      sort_keys=True)
