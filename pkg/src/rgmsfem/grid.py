"""Nested structured fine/coarse grids on the unit square.

Fine nodes are numbered row-major, ``node = iy * (nx + 1) + ix``; fine cells
likewise with ``cell = iy * nx + ix``. Coarse nodes follow the same rule on the
coarse lattice. Rasters are ``(ny, nx)`` arrays with row 0 at the bottom.
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class StructuredMesh:
    nx: int
    ny: int
    Nx: int
    Ny: int

    @property
    def rx(self):
        """Fine cells per coarse cell along x."""
        return self.nx // self.Nx

    @property
    def ry(self):
        return self.ny // self.Ny

    @property
    def hx(self):
        return 1.0 / self.nx

    @property
    def hy(self):
        return 1.0 / self.ny

    @property
    def h(self):
        return self.hx

    @property
    def H(self):
        return 1.0 / self.Nx

    @property
    def n_nodes(self):
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_cells(self):
        return self.nx * self.ny

    @property
    def n_coarse_nodes(self):
        return (self.Nx + 1) * (self.Ny + 1)

    @property
    def cell_shape(self):
        return (self.ny, self.nx)

    def node_index(self, ix, iy):
        return np.asarray(iy) * (self.nx + 1) + np.asarray(ix)

    def coarse_node_ij(self, i):
        """Lattice position ``(I, J)`` of coarse node ``i``."""
        if not 0 <= i < self.n_coarse_nodes:
            raise IndexError(f"coarse node {i} out of range")
        return i % (self.Nx + 1), i // (self.Nx + 1)

    @cached_property
    def node_coords(self):
        x = np.linspace(0.0, 1.0, self.nx + 1)
        y = np.linspace(0.0, 1.0, self.ny + 1)
        X, Y = np.meshgrid(x, y)
        return np.column_stack([X.ravel(), Y.ravel()])

    @cached_property
    def cell_centers(self):
        """Cell-center coordinates as two ``(ny, nx)`` arrays."""
        xc = (np.arange(self.nx) + 0.5) * self.hx
        yc = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(xc, yc)

    @cached_property
    def boundary_nodes(self):
        """Sorted indices of fine nodes on the boundary of the unit square."""
        ix, iy = np.meshgrid(np.arange(self.nx + 1), np.arange(self.ny + 1))
        mask = (ix == 0) | (ix == self.nx) | (iy == 0) | (iy == self.ny)
        return np.flatnonzero(mask.ravel())

    @cached_property
    def free_nodes(self):
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)


def build_mesh(nx, ny, Nx, Ny):
    counts = (nx, ny, Nx, Ny)
    if any(int(c) != c or c <= 0 for c in counts):
        raise ConfigError(f"mesh counts must be positive integers, got {counts}")
    if nx % Nx or ny % Ny:
        raise ConfigError(f"fine grid {nx}x{ny} does not refine coarse grid {Nx}x{Ny}")
    return StructuredMesh(int(nx), int(ny), int(Nx), int(Ny))


@dataclass(frozen=True)
class Box:
    """Rectangle of fine cells ``[ix0, ix1) x [iy0, iy1)``."""

    ix0: int
    ix1: int
    iy0: int
    iy1: int

    @property
    def ncx(self):
        return self.ix1 - self.ix0

    @property
    def ncy(self):
        return self.iy1 - self.iy0

    def nodes(self, mesh):
        """Global fine-node indices of the closed box, local row-major order."""
        ix = np.arange(self.ix0, self.ix1 + 1)
        iy = np.arange(self.iy0, self.iy1 + 1)
        return (iy[:, None] * (mesh.nx + 1) + ix[None, :]).ravel()

    def raster(self, values):
        return values[self.iy0:self.iy1, self.ix0:self.ix1]

    def local_boundary(self):
        """Local indices of perimeter nodes, counter-clockwise from lower-left."""
        w = self.ncx + 1
        mx, my = self.ncx, self.ncy
        bottom = [j for j in range(0, mx + 1)]
        right = [my_ * w + mx for my_ in range(1, my + 1)]
        top = [my * w + jx for jx in range(mx - 1, -1, -1)]
        left = [jy * w for jy in range(my - 1, 0, -1)]
        return np.array(bottom + right + top + left, dtype=np.int64)

    def local_interior(self):
        w = self.ncx + 1
        jx, jy = np.meshgrid(np.arange(1, self.ncx), np.arange(1, self.ncy))
        return (jy * w + jx).ravel()


@dataclass(frozen=True)
class CoarseNeighborhood:
    index: int
    cells: tuple
    box: Box
    nodes: np.ndarray = field(repr=False)
    boundary: np.ndarray = field(repr=False)
    interior: np.ndarray = field(repr=False)
    local_boundary: np.ndarray = field(repr=False)
    local_interior: np.ndarray = field(repr=False)

    @property
    def L(self):
        """Number of boundary fine nodes, i.e. the snapshot count."""
        return len(self.boundary)


def coarse_cell_box(mesh, cx, cy):
    return Box(cx * mesh.rx, (cx + 1) * mesh.rx, cy * mesh.ry, (cy + 1) * mesh.ry)


def neighborhood(mesh, i):
    I, J = mesh.coarse_node_ij(i)
    cxs = [c for c in (I - 1, I) if 0 <= c < mesh.Nx]
    cys = [c for c in (J - 1, J) if 0 <= c < mesh.Ny]
    cells = tuple(cy * mesh.Nx + cx for cy in cys for cx in cxs)
    box = Box(cxs[0] * mesh.rx, (cxs[-1] + 1) * mesh.rx,
              cys[0] * mesh.ry, (cys[-1] + 1) * mesh.ry)
    nodes = box.nodes(mesh)
    lb, li = box.local_boundary(), box.local_interior()
    return CoarseNeighborhood(i, cells, box, nodes, nodes[lb], nodes[li], lb, li)


def all_neighborhoods(mesh):
    return [neighborhood(mesh, i) for i in range(mesh.n_coarse_nodes)]
