import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import (dense_constrained_solve, dense_convection, dense_lumped_mass, dense_stiffness,
                     random_mesh)
from richards_dd.assembly import (apply_dirichlet, convection_load, lumped_mass, p1_gradients,
                                  source_load, weighted_stiffness)
from richards_dd.mesh import structured_triangle_mesh, uniform_interval_mesh

seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_stiffness_matches_dense(seed):
    rng = np.random.default_rng(seed)
    mesh = random_mesh(rng)
    w = rng.uniform(0.0, 3.0, mesh.n_elements)
    np.testing.assert_allclose(weighted_stiffness(mesh, w).toarray(), dense_stiffness(mesh, w),
                               rtol=1e-12, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_convection_matches_dense(seed):
    rng = np.random.default_rng(seed)
    mesh = random_mesh(rng)
    kb = rng.normal(size=(mesh.n_elements, mesh.dim))
    np.testing.assert_allclose(convection_load(mesh, kb), dense_convection(mesh, kb), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_lumped_mass_matches_dense(seed):
    mesh = random_mesh(np.random.default_rng(seed))
    M = lumped_mass(mesh)
    np.testing.assert_allclose(M, dense_lumped_mass(mesh), atol=1e-14)
    assert M.sum() == pytest.approx(mesh.element_measures().sum())


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_constrained_solve_matches_dense(seed):
    rng = np.random.default_rng(seed)
    mesh = random_mesh(rng)
    w = rng.uniform(0.1, 2.0, mesh.n_elements)
    A = weighted_stiffness(mesh, w) + np.diag(rng.uniform(0.0, 1.0, mesh.n_nodes))
    rhs = rng.normal(size=mesh.n_nodes)
    g = rng.normal(size=mesh.boundary_nodes.size)
    A_c, rhs_c = apply_dirichlet(A, rhs, mesh.boundary_nodes, g)
    u = spla.spsolve(A_c.tocsc(), rhs_c)
    expected = dense_constrained_solve(np.asarray(A), rhs, mesh.boundary_nodes, g)
    np.testing.assert_allclose(u, expected, rtol=1e-12, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_stiffness_symmetric_psd_with_constant_kernel(seed):
    rng = np.random.default_rng(seed)
    mesh = random_mesh(rng)
    A = weighted_stiffness(mesh, rng.uniform(0.0, 2.0, mesh.n_elements)).toarray()
    np.testing.assert_array_equal(A, A.T)
    np.testing.assert_allclose(A @ np.ones(mesh.n_nodes), 0.0, atol=1e-12)
    assert np.linalg.eigvalsh(A).min() >= -1e-12


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_convection_load_sums_to_zero(seed):
    # sum_i grad(phi_i) = 0 on every element
    rng = np.random.default_rng(seed)
    mesh = random_mesh(rng)
    F = convection_load(mesh, rng.normal(size=(mesh.n_elements, mesh.dim)))
    assert F.sum() == pytest.approx(0.0, abs=1e-12)


def test_p1_gradients_reproduce_linear_functions():
    mesh = structured_triangle_mesh(3, 2, (0.0, 1.5, -1.0, 0.0))
    grads, _ = p1_gradients(mesh)
    f = 2.0 * mesh.nodes[:, 0] - 3.0 * mesh.nodes[:, 1] + 1.0
    g = np.einsum("ei,eid->ed", f[mesh.elements], grads)
    np.testing.assert_allclose(g, np.tile([2.0, -3.0], (mesh.n_elements, 1)), atol=1e-12)


def test_stiffness_1d_uniform():
    mesh = uniform_interval_mesh(4)
    A = weighted_stiffness(mesh, 1.0).toarray()
    expected = 4.0 * (2 * np.eye(5) - np.eye(5, k=1) - np.eye(5, k=-1))
    expected[0, 0] = expected[-1, -1] = 4.0
    np.testing.assert_allclose(A, expected)


def test_vertical_convection_shorthand():
    mesh = structured_triangle_mesh(2, 2)
    kz = np.linspace(0.1, 1.0, mesh.n_elements)
    full = np.column_stack([np.zeros_like(kz), kz])
    np.testing.assert_allclose(convection_load(mesh, kz), convection_load(mesh, full))


def test_uniform_gravity_load_cancels_in_interior():
    mesh = uniform_interval_mesh(5)
    F = convection_load(mesh, np.full(5, 0.7))
    np.testing.assert_allclose(F[1:-1], 0.0, atol=1e-14)
    assert F[0] == pytest.approx(-0.7) and F[-1] == pytest.approx(0.7)


def test_negative_weight_rejected():
    with pytest.raises(ValueError):
        weighted_stiffness(uniform_interval_mesh(2), np.array([1.0, -1.0]))


def test_dirichlet_value_count_checked():
    mesh = uniform_interval_mesh(2)
    A = weighted_stiffness(mesh, 1.0)
    with pytest.raises(ValueError):
        apply_dirichlet(A, np.zeros(3), mesh.boundary_nodes, [0.0])


def test_dirichlet_keeps_symmetry():
    mesh = structured_triangle_mesh(3, 3)
    A = weighted_stiffness(mesh, 1.0) + 0.1 * np.eye(mesh.n_nodes)
    A_c, _ = apply_dirichlet(A, np.zeros(mesh.n_nodes), mesh.boundary_nodes, np.ones(mesh.boundary_nodes.size))
    D = A_c.toarray()
    np.testing.assert_array_equal(D, D.T)
    np.testing.assert_array_equal(np.diag(D)[mesh.boundary_nodes], 1.0)


def test_source_load():
    mesh = uniform_interval_mesh(4)
    np.testing.assert_allclose(source_load(mesh, np.ones(5)), lumped_mass(mesh))
