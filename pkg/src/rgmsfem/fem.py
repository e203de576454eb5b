"""Bilinear (Q1) finite elements on the structured fine grid.

Element integrals are evaluated with 2x2 Gauss quadrature, which is exact for
Q1 stiffness and mass on rectangles with a cellwise constant coefficient.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import instrument
from .coefficient import eval_kappa
from .errors import ConfigError, SolverError

_G = 1.0 / np.sqrt(3.0)
_GAUSS = np.array([[-_G, -_G], [_G, -_G], [_G, _G], [-_G, _G]])
# reference corners, counter-clockwise from lower-left
_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])

DIRECT_SOLVE_LIMIT = 20000


def _shape(xi, eta):
    return 0.25 * (1 + _CORNERS[:, 0] * xi) * (1 + _CORNERS[:, 1] * eta)


def _shape_grad(xi, eta):
    dxi = 0.25 * _CORNERS[:, 0] * (1 + _CORNERS[:, 1] * eta)
    deta = 0.25 * _CORNERS[:, 1] * (1 + _CORNERS[:, 0] * xi)
    return dxi, deta


def element_stiffness(hx, hy):
    K = np.zeros((4, 4))
    jac = hx * hy / 4.0
    for xi, eta in _GAUSS:
        dxi, deta = _shape_grad(xi, eta)
        gx, gy = dxi * 2.0 / hx, deta * 2.0 / hy
        K += (np.outer(gx, gx) + np.outer(gy, gy)) * jac
    return K


def element_mass(hx, hy):
    Mloc = np.zeros((4, 4))
    jac = hx * hy / 4.0
    for xi, eta in _GAUSS:
        N = _shape(xi, eta)
        Mloc += np.outer(N, N) * jac
    return Mloc


def cell_nodes(ncx, ncy):
    """``(ncx*ncy, 4)`` local node indices per cell of an ``ncx x ncy`` box."""
    w = ncx + 1
    cx, cy = np.meshgrid(np.arange(ncx), np.arange(ncy))
    n0 = (cy * w + cx).ravel()
    return np.column_stack([n0, n0 + 1, n0 + w + 1, n0 + w])


def assemble_box(weights, hx, hy, kind="stiffness"):
    """Assemble a Q1 operator on a box of cells with per-cell ``weights`` ``(ncy, ncx)``."""
    weights = np.asarray(weights, dtype=np.float64)
    ncy, ncx = weights.shape
    Kloc = element_stiffness(hx, hy) if kind == "stiffness" else element_mass(hx, hy)
    conn = cell_nodes(ncx, ncy)
    rows = np.repeat(conn, 4, axis=1).ravel()
    cols = np.tile(conn, (1, 4)).ravel()
    data = (weights.ravel()[:, None] * Kloc.ravel()[None, :]).ravel()
    n = (ncx + 1) * (ncy + 1)
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def _check_raster(mesh, raster):
    raster = np.asarray(raster, dtype=np.float64)
    if raster.shape != mesh.cell_shape:
        raise ConfigError(f"raster shape {raster.shape} does not match mesh {mesh.cell_shape}")
    return raster


def assemble_stiffness_component(mesh, kappa_q):
    instrument.bump("fine_assembly")
    return assemble_box(_check_raster(mesh, kappa_q), mesh.hx, mesh.hy, "stiffness")


def assemble_mass_component(mesh, kappa_q):
    """Mass matrix weighted by ``kappa_q`` (no coarse-size scaling)."""
    instrument.bump("fine_assembly")
    return assemble_box(_check_raster(mesh, kappa_q), mesh.hx, mesh.hy, "mass")


def assemble_weighted_mass_component(mesh, kappa_q, H):
    instrument.bump("fine_assembly")
    return assemble_box(_check_raster(mesh, kappa_q) / H**2, mesh.hx, mesh.hy, "mass")


def assemble_load(mesh, f):
    """Load vector ``(f, phi_i)`` with ``f(x, y)`` evaluated by 2x2 Gauss per cell."""
    x0, y0 = np.meshgrid(np.arange(mesh.nx) * mesh.hx, np.arange(mesh.ny) * mesh.hy)
    x0, y0 = x0.ravel(), y0.ravel()
    jac = mesh.hx * mesh.hy / 4.0
    conn = cell_nodes(mesh.nx, mesh.ny)
    F = np.zeros(mesh.n_nodes)
    for xi, eta in _GAUSS:
        xs = x0 + 0.5 * (1 + xi) * mesh.hx
        ys = y0 + 0.5 * (1 + eta) * mesh.hy
        fv = np.broadcast_to(np.asarray(f(xs, ys), dtype=np.float64), xs.shape)
        N = _shape(xi, eta)
        np.add.at(F, conn, (fv * jac)[:, None] * N[None, :])
    return F


@dataclass
class FineOperators:
    """Parameter-independent fine operators of an affine coefficient."""

    mesh: object
    coeff: object
    A: list = field(repr=False)
    M: list = field(repr=False)

    def stiffness(self, mu):
        th = self.coeff.thetas(mu)
        return combine(th, self.A)

    def mass(self, mu):
        th = self.coeff.thetas(mu)
        return combine(th, self.M)

    def weighted_mass(self, mu):
        """Spectral-problem mass with weight ``kappa * H**-2``."""
        return self.mass(mu) / self.mesh.H**2


def combine(thetas, mats):
    out = thetas[0] * mats[0]
    for t, m in zip(thetas[1:], mats[1:]):
        out = out + t * m
    return out


def fine_operators(mesh, coeff):
    if coeff.shape != mesh.cell_shape:
        raise ConfigError("coefficient rasters do not match mesh")
    A = [assemble_stiffness_component(mesh, r) for r in coeff.rasters]
    M = [assemble_mass_component(mesh, r) for r in coeff.rasters]
    return FineOperators(mesh, coeff, A, M)


@dataclass
class FineSolution:
    values: np.ndarray
    mu: np.ndarray
    info: dict = field(default_factory=dict)


def dirichlet_lift(mesh, p):
    """Nodal interpolant of ``p`` on boundary fine nodes, zero elsewhere."""
    g = np.zeros(mesh.n_nodes)
    if p is None:
        return g
    b = mesh.boundary_nodes
    xy = mesh.node_coords[b]
    g[b] = np.broadcast_to(np.asarray(p(xy[:, 0], xy[:, 1]), dtype=np.float64), b.shape)
    return g


def spd_solve(K, b, rtol=1e-10):
    """Solve a sparse SPD system: direct below ``DIRECT_SOLVE_LIMIT`` unknowns, else Jacobi-CG."""
    n = K.shape[0]
    if n == 0:
        return np.zeros(0), {"method": "empty"}
    if n < DIRECT_SOLVE_LIMIT:
        x = spla.spsolve(K.tocsc(), b)
        return x, {"method": "direct"}
    d = K.diagonal()
    Minv = spla.LinearOperator(K.shape, matvec=lambda v: v / d)
    x, status = spla.cg(K, b, rtol=rtol, maxiter=20 * n, M=Minv)
    res = np.linalg.norm(b - K @ x) / max(np.linalg.norm(b), 1e-300)
    if status != 0:
        raise SolverError(f"CG did not converge, relative residual {res:.3e}", res)
    return x, {"method": "cg", "residual": res}


def solve_fine(mesh, coeff, mu, f, p=None, ops=None):
    if ops is None:
        ops = fine_operators(mesh, coeff)
    mu = coeff.as_mu(mu)
    A = ops.stiffness(mu).tocsr()
    F = assemble_load(mesh, f) if callable(f) else np.asarray(f, dtype=np.float64)
    g = dirichlet_lift(mesh, p)
    free = mesh.free_nodes
    rhs = (F - A @ g)[free]
    u_free, info = spd_solve(A[free][:, free], rhs)
    u = g.copy()
    u[free] = u_free
    return FineSolution(u, mu, info)


def energy_norm(mesh, coeff, mu, v, ops=None):
    """``sqrt(int kappa |grad v|^2)`` summed cell by cell.

    Cell values are taken relative to their mean first; the element stiffness
    annihilates constants, so constants give exactly zero instead of roundoff.
    """
    v = np.asarray(v, dtype=np.float64)
    d = v[cell_nodes(mesh.nx, mesh.ny)]
    d = d - d.mean(axis=1, keepdims=True)
    e = np.einsum("ci,ij,cj->c", d, element_stiffness(mesh.hx, mesh.hy), d)
    return float(np.sqrt(max(e @ eval_kappa(coeff, mu).ravel(), 0.0)))


def weighted_l2_norm(mesh, coeff, mu, v, ops=None):
    ops = ops or fine_operators(mesh, coeff)
    v = np.asarray(v, dtype=np.float64)
    return float(np.sqrt(max(v @ (ops.mass(mu) @ v), 0.0)))


def relative_errors(ops, mu, reference, approx):
    """Relative weighted-L2 and energy errors of ``approx`` against ``reference``."""
    e = reference - approx
    A, Mk = ops.stiffness(mu), ops.mass(mu)
    l2 = np.sqrt(e @ (Mk @ e)) / np.sqrt(reference @ (Mk @ reference))
    en = np.sqrt(max(e @ (A @ e), 0.0)) / np.sqrt(reference @ (A @ reference))
    return float(l2), float(en)


# source and boundary data of the periodic benchmark
def benchmark_source(x, y):
    pi = np.pi
    return (pi**2 * (2 + y) * np.sin(pi * x) * np.sin(pi * y)
            + 2 * pi**2 * x * np.cos(pi * x) * np.cos(pi * y))


def benchmark_boundary(x, y):
    return np.sin(np.pi * x) * np.sin(np.pi * y) + y + 0.1
