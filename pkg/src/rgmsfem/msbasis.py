"""Local snapshot spaces, partition of unity and local spectral problems."""
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import instrument
from .errors import NumericalRankError, SolverError
from .fem import assemble_box, combine
from .grid import all_neighborhoods, coarse_cell_box

CROSSING_THRESHOLD = 0.5


@dataclass
class LocalOperators:
    """Per-term stiffness and ``kappa_q``-weighted mass assembled on one neighborhood box."""

    A: list = field(repr=False)
    M: list = field(repr=False)
    H: float = 1.0

    @property
    def S(self):
        return [m / self.H**2 for m in self.M]


def local_operators(mesh, coeff, nbhd):
    box = nbhd.box
    A = [assemble_box(box.raster(r), mesh.hx, mesh.hy, "stiffness") for r in coeff.rasters]
    M = [assemble_box(box.raster(r), mesh.hx, mesh.hy, "mass") for r in coeff.rasters]
    return LocalOperators(A, M, mesh.H)


def _harmonic_extension(K, interior, boundary, data):
    """Values on all box nodes: ``data`` on ``boundary``, discrete-harmonic inside."""
    n = K.shape[0]
    out = np.zeros((n, data.shape[1]))
    out[boundary] = data
    if len(interior):
        K = K.tocsr()
        Kii = K[interior][:, interior].tocsc()
        Kib = K[interior][:, boundary]
        rhs = -(Kib @ data)
        try:
            out[interior] = spla.splu(Kii).solve(np.asarray(rhs))
        except RuntimeError as exc:
            raise SolverError(f"local Dirichlet solve failed: {exc}") from exc
        instrument.bump("local_solve")
    return out


@dataclass
class SnapshotSpace:
    """Harmonic extensions of discrete delta boundary data, one column per boundary node."""

    index: int
    nodes: np.ndarray = field(repr=False)
    R: np.ndarray = field(repr=False)

    @property
    def L(self):
        return self.R.shape[1]


def build_snapshots(mesh, coeff, mu, nbhd, local_ops=None):
    local_ops = local_ops or local_operators(mesh, coeff, nbhd)
    K = combine(coeff.thetas(mu), local_ops.A)
    R = _harmonic_extension(K, nbhd.local_interior, nbhd.local_boundary, np.eye(nbhd.L))
    return SnapshotSpace(nbhd.index, nbhd.nodes, R)


@dataclass
class PartitionOfUnity:
    """Multiscale hat functions; ``chi[i]`` lives on the box nodes of neighborhood ``i``."""

    chi: list = field(repr=False)
    nodes: list = field(repr=False)
    mu_ref: np.ndarray = None

    def global_vector(self, i, n_nodes):
        v = np.zeros(n_nodes)
        v[self.nodes[i]] = self.chi[i]
        return v

    def total(self, n_nodes):
        s = np.zeros(n_nodes)
        for nodes, chi in zip(self.nodes, self.chi):
            np.add.at(s, nodes, chi)
        return s


def _corner_hats(rx, ry):
    """Bilinear hats of the four cell corners (ccw from lower-left) on the cell's box nodes."""
    s = np.arange(rx + 1) / rx
    t = np.arange(ry + 1) / ry
    S, T = np.meshgrid(s, t)
    S, T = S.ravel(), T.ravel()
    return np.column_stack([(1 - S) * (1 - T), S * (1 - T), S * T, (1 - S) * T])


def build_pou(mesh, coeff, mu_ref, neighborhoods=None):
    if neighborhoods is None:
        neighborhoods = all_neighborhoods(mesh)
    thetas = coeff.thetas(mu_ref)
    kappa_ref = sum(t * r for t, r in zip(thetas, coeff.rasters))
    hats = _corner_hats(mesh.rx, mesh.ry)
    nodes = [n.nodes for n in neighborhoods]
    chi = [np.zeros(len(n.nodes)) for n in neighborhoods]
    # global fine node -> position within each neighborhood's node list
    lookup = [dict(zip(n.nodes.tolist(), range(len(n.nodes)))) for n in neighborhoods]
    for cy in range(mesh.Ny):
        for cx in range(mesh.Nx):
            box = coarse_cell_box(mesh, cx, cy)
            K = assemble_box(box.raster(kappa_ref), mesh.hx, mesh.hy, "stiffness")
            boundary, interior = box.local_boundary(), box.local_interior()
            sol = _harmonic_extension(K, interior, boundary, hats[boundary])
            cell_nodes = box.nodes(mesh)
            corners = [(cx, cy), (cx + 1, cy), (cx + 1, cy + 1), (cx, cy + 1)]
            for c, (I, J) in enumerate(corners):
                i = J * (mesh.Nx + 1) + I
                pos = np.fromiter((lookup[i][g] for g in cell_nodes.tolist()), dtype=np.int64)
                chi[i][pos] = sol[:, c]
    # the four cell solutions sum to one up to solver roundoff, which grows with contrast;
    # dividing by the nodal total restores the partition to machine precision
    total = np.zeros(mesh.n_nodes)
    for nd, c in zip(nodes, chi):
        np.add.at(total, nd, c)
    chi = [c / total[nd] for nd, c in zip(nodes, chi)]
    return PartitionOfUnity(chi, nodes, np.asarray(mu_ref, dtype=np.float64))


@dataclass
class LocalEigenData:
    index: int
    mu: np.ndarray
    values: np.ndarray
    gap: float
    vectors: np.ndarray = field(repr=False)
    jitter: float = 0.0

    @property
    def l(self):
        return len(self.values)


def align_signs(V):
    """Flip columns so the entry of largest magnitude is positive (first index on ties)."""
    V = np.array(V, dtype=np.float64, copy=True)
    if V.ndim == 1:
        return align_signs(V[:, None])[:, 0]
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def project_pencil(snapshots, A_q, S_q):
    """Per-term snapshot-space matrices ``R^T A_q R`` and ``R^T S_q R``."""
    R = snapshots.R
    Aoff = [R.T @ (A @ R) for A in A_q]
    Soff = [R.T @ (S @ R) for S in S_q]
    return Aoff, Soff


def solve_pencil(A, S, n_ev):
    """Smallest ``n_ev`` eigenpairs of ``A x = lam S x`` via Cholesky of ``S``.

    Returns ``(values, vectors, jitter)`` with ``vectors`` S-orthonormal and
    sign-aligned.
    """
    instrument.bump("eigensolve")
    A = 0.5 * (A + A.T)
    S = 0.5 * (S + S.T)
    n = A.shape[0]
    if n_ev > n:
        raise ValueError(f"asked for {n_ev} eigenpairs of a {n}x{n} pencil")
    jitter = 0.0
    try:
        C = la.cholesky(S, lower=True)
    except la.LinAlgError:
        jitter = 1e-12 * np.trace(S)
        try:
            C = la.cholesky(S + jitter * np.eye(n), lower=True)
        except la.LinAlgError as exc:
            raise NumericalRankError("snapshot mass matrix is not positive definite") from exc
    B = la.solve_triangular(C, A, lower=True)
    B = la.solve_triangular(C, B.T, lower=True)
    B = 0.5 * (B + B.T)
    w, Y = la.eigh(B, subset_by_index=[0, n_ev - 1])
    X = la.solve_triangular(C, Y, lower=True, trans="T")
    return w, align_signs(X), jitter


def local_spectral(snapshots, A_q, S_q, thetas, l, projected=None):
    """Eigenpairs of the snapshot-space pencil: ``l`` retained plus the gap witness.

    ``A_q``/``S_q`` are the per-term local fine operators on the neighborhood box;
    ``projected`` may carry the output of :func:`project_pencil` to skip re-projection.
    """
    if l + 1 > snapshots.L:
        raise ValueError(f"l+1={l + 1} exceeds snapshot dimension {snapshots.L}")
    Aoff, Soff = projected or project_pencil(snapshots, A_q, S_q)
    A = combine(thetas, Aoff)
    S = combine(thetas, Soff)
    w, X, jitter = solve_pencil(A, S, l + 1)
    return LocalEigenData(snapshots.index, None, w[:l], float(w[l]), X[:, :l], jitter)


def offline_basis(pou, snapshots, vectors, boundary_mask):
    """Local basis ``chi_i * (R_snap Psi_k)`` on the neighborhood box, zero on the domain boundary.

    ``boundary_mask`` flags global fine nodes on the domain boundary.
    """
    i = snapshots.index
    phi = snapshots.R @ vectors
    psi = pou.chi[i][:, None] * phi
    psi[boundary_mask[snapshots.nodes]] = 0.0
    return psi


def spectral_gap(eigendata):
    """Smallest excluded eigenvalue over all given neighborhoods and parameters."""
    return min(e.gap for e in eigendata)


def check_crossings(vectors_by_sample):
    """Indices ``(j, k)`` where sample ``j``'s k-th vector has |cosine| < 0.5 against sample 0."""
    ref = vectors_by_sample[0]
    flagged = []
    for j, V in enumerate(vectors_by_sample[1:], start=1):
        cos = np.abs(np.sum(V * ref, axis=0)) / (
            np.linalg.norm(V, axis=0) * np.linalg.norm(ref, axis=0))
        flagged.extend((j, int(k)) for k in np.flatnonzero(cos < CROSSING_THRESHOLD))
    return flagged


def basis_matrix(mesh, blocks):
    """Sparse global matrix from per-neighborhood ``(nodes, local_block)`` pairs."""
    rows, cols, vals = [], [], []
    offset = 0
    for nodes, block in blocks:
        r, c = np.nonzero(block)
        rows.append(nodes[r])
        cols.append(c + offset)
        vals.append(block[r, c])
        offset += block.shape[1]
    if offset == 0:
        return sp.csr_matrix((mesh.n_nodes, 0))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(mesh.n_nodes, offset))
