import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rgmsfem.coefficient import AffineCoefficient, ThetaTerm, analytic_periodic_field
from rgmsfem.errors import ConfigError
from rgmsfem.fem import (assemble_load, assemble_stiffness_component,
                         assemble_weighted_mass_component, benchmark_source, element_mass,
                         element_stiffness, energy_norm, fine_operators, solve_fine,
                         weighted_l2_norm)
from rgmsfem.grid import build_mesh


def unit(mesh):
    return AffineCoefficient([ThetaTerm("constant", 0)], [np.ones(mesh.cell_shape)])


def test_unit_element_stiffness():
    K = element_stiffness(1.0, 1.0)
    assert np.allclose(np.diag(K), 2 / 3, atol=1e-15)
    assert K[0, 2] == pytest.approx(-1 / 3, abs=1e-15)
    assert K[1, 3] == pytest.approx(-1 / 3, abs=1e-15)
    assert np.allclose(K, element_stiffness(0.1, 0.1), atol=1e-14)
    A = assemble_stiffness_component(build_mesh(1, 1, 1, 1), np.ones((1, 1))).toarray()
    # corners in row-major order: (0,0), (1,0), (0,1), (1,1)
    assert np.allclose(np.diag(A), 2 / 3) and A[0, 3] == pytest.approx(-1 / 3)


def test_element_mass_diagonal():
    h = 0.05
    assert element_mass(h, h)[0, 0] == pytest.approx(h * h / 9, rel=1e-14)


def test_stiffness_properties(small_mesh):
    A = assemble_stiffness_component(small_mesh, np.ones(small_mesh.cell_shape))
    free = small_mesh.free_nodes
    assert np.allclose(np.asarray(A.sum(axis=1)).ravel()[free], 0, atol=1e-13)
    r = analytic_periodic_field(small_mesh)
    A1 = assemble_stiffness_component(small_mesh, r)
    A2 = assemble_stiffness_component(small_mesh, 2 * r)
    assert abs(A2 - 2 * A1).max() == 0
    assert abs(A1 - A1.T).max() <= 1e-14 * abs(A1).max()
    with pytest.raises(ConfigError):
        assemble_stiffness_component(small_mesh, np.ones((3, 3)))


def test_weighted_mass(small_mesh):
    ones = np.ones(small_mesh.cell_shape)
    S1 = assemble_weighted_mass_component(small_mesh, ones, 1.0)
    assert S1.sum() == pytest.approx(1.0, abs=1e-13)
    S5 = assemble_weighted_mass_component(small_mesh, ones, 0.2)
    assert np.allclose((S5 - 25 * S1).toarray(), 0, atol=1e-12)


def test_load_vector():
    m = build_mesh(100, 100, 5, 5)
    assert np.all(assemble_load(m, lambda x, y: 0 * x) == 0)
    assert assemble_load(m, lambda x, y: 1 + 0 * x).sum() == pytest.approx(1.0, abs=1e-13)
    # the benchmark source integrates to 10 exactly over the unit square
    assert assemble_load(m, benchmark_source).sum() == pytest.approx(10.0, abs=1e-8)


def _manufactured_error(n):
    m = build_mesh(n, n, 1, 1)
    c = unit(m)
    f = lambda x, y: 2 * np.pi**2 * np.sin(np.pi * x) * np.sin(np.pi * y)
    u = solve_fine(m, c, 1.0, f, lambda x, y: 0 * x).values
    xy = m.node_coords
    exact = np.sin(np.pi * xy[:, 0]) * np.sin(np.pi * xy[:, 1])
    return weighted_l2_norm(m, c, 1.0, u - exact)


def test_manufactured_convergence():
    e = [_manufactured_error(n) for n in (32, 64, 128)]
    for a, b in zip(e, e[1:]):
        assert 3.6 <= a / b <= 4.4


def test_constant_boundary_gives_constant(small_mesh, periodic_coeff):
    u = solve_fine(small_mesh, periodic_coeff, 0.7, lambda x, y: 0 * x,
                   lambda x, y: 3.5 + 0 * x).values
    assert np.allclose(u, 3.5, atol=1e-12)


def test_dirichlet_exact_on_boundary(small_mesh, periodic_coeff):
    p = lambda x, y: np.sin(3 * x) + y
    u = solve_fine(small_mesh, periodic_coeff, 0.7, benchmark_source, p).values
    xy = small_mesh.node_coords[small_mesh.boundary_nodes]
    assert np.array_equal(u[small_mesh.boundary_nodes], p(xy[:, 0], xy[:, 1]))


def test_cg_path_matches_direct(small_mesh, periodic_coeff, monkeypatch):
    from rgmsfem import fem
    args = (small_mesh, periodic_coeff, 0.7, benchmark_source, lambda x, y: y)
    direct = solve_fine(*args).values
    monkeypatch.setattr(fem, "DIRECT_SOLVE_LIMIT", 0)
    cg = solve_fine(*args)
    assert cg.info["method"] == "cg" and cg.info["residual"] <= 1e-10
    assert np.allclose(cg.values, direct, atol=1e-8)


def test_norms(small_mesh):
    c = unit(small_mesh)
    x = small_mesh.node_coords[:, 0]
    assert energy_norm(small_mesh, c, 1.0, np.full(small_mesh.n_nodes, 2.0)) == pytest.approx(0, abs=1e-7)
    assert energy_norm(small_mesh, c, 1.0, x) == pytest.approx(1.0, rel=1e-13)
    assert weighted_l2_norm(small_mesh, c, 1.0, x) == pytest.approx(np.sqrt(1 / 3), rel=1e-13)
    # interpolant of x^2: piecewise-linear in x with slope x_i + x_{i+1} per cell
    xs = np.linspace(0, 1, small_mesh.nx + 1)
    exact = np.sqrt(np.sum(np.diff(xs) * (xs[:-1] + xs[1:]) ** 2))
    assert energy_norm(small_mesh, c, 1.0, x**2) == pytest.approx(exact, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(mu=st.lists(st.floats(0.05, 3), min_size=2, max_size=2))
def test_affine_assembly_identity(mu):
    m = build_mesh(8, 8, 2, 2)
    rng = np.random.default_rng(2)
    rasters = [rng.uniform(0.5, 3, m.cell_shape) for _ in range(2)]
    c = AffineCoefficient([ThetaTerm("mu_plus_mu_sq", 0), ThetaTerm("mu_plus_mu_sq", 1)], rasters)
    ops = fine_operators(m, c)
    direct = assemble_stiffness_component(m, c.thetas(mu)[0] * rasters[0] + c.thetas(mu)[1] * rasters[1])
    assert abs(ops.stiffness(mu) - direct).max() <= 1e-13 * abs(direct).max()
