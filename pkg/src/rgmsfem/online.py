"""Online coarse solves: predictor-driven and the full-recompute GMsFEM baseline."""
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .errors import ArtifactError, DegenerateBasisError
from .fem import assemble_load, dirichlet_lift, fine_operators
from .grid import all_neighborhoods
from .msbasis import (basis_matrix, build_pou, build_snapshots, local_operators,
                      local_spectral, offline_basis)


@dataclass
class OnlineLayout:
    """Where each predicted reduced eigenvector lands in the global reduced space.

    Row ``e`` of ``entries`` is ``(i, k, row_start, n_modes, target_start)``:
    the predictor's output ``[target_start, target_start + n_modes)`` fills
    rows ``[row_start, row_start + n_modes)`` of online column ``(i, k)``.
    """

    entries: np.ndarray
    dim: int

    def select(self, l):
        keep = self.entries[:, 1] < l
        return OnlineLayout(self.entries[keep], self.dim)

    @property
    def n_columns(self):
        return len(self.entries)

    def scatter_indices(self):
        rows, cols, targets = [], [], []
        for c, (i, k, r0, n, t0) in enumerate(self.entries):
            rows.append(np.arange(r0, r0 + n))
            cols.append(np.full(n, c))
            targets.append(np.arange(t0, t0 + n))
        return np.concatenate(rows), np.concatenate(cols), np.concatenate(targets)


@dataclass
class OnlineSpace:
    C: sp.csr_matrix = field(repr=False)
    layout: OnlineLayout = field(repr=False)

    @property
    def n_columns(self):
        return self.C.shape[1]


def build_online_space(predictor, layout, mu):
    """Fill ``C_on`` from predictor output only."""
    y = np.asarray(predictor.predict(mu))
    rows, cols, targets = layout.scatter_indices()
    if targets.size and targets.max() >= y.size:
        raise ArtifactError(
            f"predictor yields {y.size} values but layout needs {targets.max() + 1}")
    C = sp.csr_matrix((y[targets], (rows, cols)), shape=(layout.dim, layout.n_columns))
    return OnlineSpace(C, layout)


@dataclass
class CoarseSolution:
    coef: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    mu: np.ndarray = None
    timings: dict = field(default_factory=dict)
    method: str = ""


def _spd_coarse_solve(K, b):
    K = 0.5 * (K + K.T)
    try:
        return la.cho_solve(la.cho_factor(K), b)
    except la.LinAlgError:
        pass
    jitter = 1e-12 * np.trace(K)
    try:
        return la.cho_solve(la.cho_factor(K + jitter * np.eye(len(K))), b)
    except la.LinAlgError:
        w, V = np.linalg.eigh(K)
        bad = np.flatnonzero(np.abs(V[:, 0]) > 0.1)
        raise DegenerateBasisError(
            f"coarse system is not positive definite (min eigenvalue {w[0]:.3e})", bad)


def solve_online(reduced, space, thetas, R_tilde, lift):
    """Theta-weighted reduced solve and fine-grid reconstruction ``lift + R C c``."""
    t0 = time.perf_counter()
    C = space.C
    A = reduced.matrix(thetas)
    K = (C.T @ (A @ C)).toarray()
    b = C.T @ reduced.rhs(thetas)
    t1 = time.perf_counter()
    c = _spd_coarse_solve(K, b)
    u = lift + R_tilde @ (C @ c)
    t2 = time.perf_counter()
    return CoarseSolution(c, u, None, {"assemble": t1 - t0, "solve": t2 - t1})


@dataclass
class GmsfemSetup:
    """Parameter-independent pieces reused by repeated full-recompute solves."""

    mesh: object
    coeff: object
    ops: object
    neighborhoods: list
    local_ops: list
    F: np.ndarray
    lift: np.ndarray
    boundary_mask: np.ndarray


def gmsfem_setup(mesh, coeff, f, p, ops=None):
    ops = ops or fine_operators(mesh, coeff)
    nbhds = all_neighborhoods(mesh)
    local = [local_operators(mesh, coeff, n) for n in nbhds]
    F = assemble_load(mesh, f) if callable(f) else np.asarray(f, dtype=np.float64)
    mask = np.zeros(mesh.n_nodes, dtype=bool)
    mask[mesh.boundary_nodes] = True
    return GmsfemSetup(mesh, coeff, ops, nbhds, local, F, dirichlet_lift(mesh, p), mask)


def gmsfem_reference_solve(setup, mu, l):
    """Rebuild snapshots, partition of unity and eigenpairs at ``mu``, then Galerkin-solve."""
    mesh, coeff = setup.mesh, setup.coeff
    mu = coeff.as_mu(mu)
    t0 = time.perf_counter()
    thetas = coeff.thetas(mu)
    pou = build_pou(mesh, coeff, mu, setup.neighborhoods)
    blocks = []
    for nbhd, lo in zip(setup.neighborhoods, setup.local_ops):
        snap = build_snapshots(mesh, coeff, mu, nbhd, lo)
        eig = local_spectral(snap, lo.A, lo.S, thetas, l)
        blocks.append((nbhd.nodes, offline_basis(pou, snap, eig.vectors, setup.boundary_mask)))
    B = basis_matrix(mesh, blocks)
    t1 = time.perf_counter()
    A = setup.ops.stiffness(mu)
    K = (B.T @ (A @ B)).toarray()
    b = B.T @ (setup.F - A @ setup.lift)
    t2 = time.perf_counter()
    c = _spd_coarse_solve(K, b)
    u = setup.lift + B @ c
    t3 = time.perf_counter()
    return CoarseSolution(c, u, mu, {"predict": t1 - t0, "assemble": t2 - t1, "solve": t3 - t2},
                          "GMsFEM")
