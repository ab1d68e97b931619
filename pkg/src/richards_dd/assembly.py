"""P1 finite-element operators for one frozen-coefficient time step.

Coefficients are piecewise constant: the caller evaluates them once per
element (at the element mean of the previous time level) and passes the
per-element values here.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh


def p1_gradients(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Constant basis gradients ``(n_el, dim + 1, dim)`` and element measures."""
    p = mesh.nodes[mesh.elements]
    if mesh.dim == 1:
        h = p[:, 1, 0] - p[:, 0, 0]
        grads = np.stack([-1.0 / h, 1.0 / h], axis=1)[:, :, None]
        return grads, np.abs(h)
    # rows of inv([[1, x, z], ...]) give the linear basis coefficients
    ones = np.ones(p.shape[:2] + (1,))
    inv = np.linalg.inv(np.concatenate([ones, p], axis=2))
    grads = np.transpose(inv[:, 1:, :], (0, 2, 1))
    return grads, mesh.element_measures()


def lumped_mass(mesh: Mesh) -> np.ndarray:
    """Row-sum lumped mass: each element spreads ``|T|/(dim+1)`` to its vertices."""
    meas = mesh.element_measures()
    share = np.repeat(meas / (mesh.dim + 1), mesh.dim + 1)
    return np.bincount(mesh.elements.ravel(), weights=share, minlength=mesh.n_nodes)


def weighted_stiffness(mesh: Mesh, element_weight) -> sp.csr_matrix:
    """``A_ij = sum_T w_T |T| grad(phi_i) . grad(phi_j)``, symmetric PSD."""
    w = np.broadcast_to(np.asarray(element_weight, dtype=float), (mesh.n_elements,))
    if np.any(w < 0.0) or np.any(~np.isfinite(w)):
        raise ValueError("stiffness weight must be finite and non-negative")
    grads, meas = p1_gradients(mesh)
    local = np.einsum("eid,ejd->eij", grads, grads) * (w * meas)[:, None, None]
    # exact symmetry regardless of round-off in the einsum
    local = 0.5 * (local + np.transpose(local, (0, 2, 1)))
    k = mesh.dim + 1
    rows = np.repeat(mesh.elements, k, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, k)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(mesh.n_nodes,) * 2).tocsr()
    A.sum_duplicates()
    return A


def convection_load(mesh: Mesh, element_kbar) -> np.ndarray:
    """``F_i = sum_T |T| Kbar_T . grad(phi_i)``.

    ``element_kbar`` is ``(n_el, dim)``, or ``(n_el,)`` for a purely vertical field.
    """
    kb = np.asarray(element_kbar, dtype=float)
    if kb.ndim == 1:
        vert = kb
        kb = np.zeros((mesh.n_elements, mesh.dim))
        kb[:, -1] = vert
    grads, meas = p1_gradients(mesh)
    local = np.einsum("eid,ed->ei", grads, kb) * meas[:, None]
    return np.bincount(mesh.elements.ravel(), weights=local.ravel(), minlength=mesh.n_nodes)


def source_load(mesh: Mesh, s_nodal, mass: np.ndarray | None = None) -> np.ndarray:
    """Lumped source: ``mass_i * S_i``."""
    if mass is None:
        mass = lumped_mass(mesh)
    return mass * np.asarray(s_nodal, dtype=float)


def apply_dirichlet(A: sp.spmatrix, rhs: np.ndarray, bc_nodes, bc_values):
    """Symmetric elimination of Dirichlet rows and columns.

    Returns ``(A_c, rhs_c)`` where constrained rows/columns are identity and the
    known values have been moved to the right-hand side of the free rows.
    """
    n = A.shape[0]
    bc_nodes = np.asarray(bc_nodes, dtype=int)
    bc_values = np.asarray(bc_values, dtype=float)
    if bc_values.shape != bc_nodes.shape:
        raise ValueError("a Dirichlet value is required for every boundary node")
    if np.any(~np.isfinite(bc_values)):
        raise ValueError("Dirichlet values must be finite")
    g = np.zeros(n)
    g[bc_nodes] = bc_values
    free = np.ones(n)
    free[bc_nodes] = 0.0
    D = sp.diags(free)
    A = sp.csr_matrix(A)
    rhs_c = free * (rhs - A @ g) + g
    A_c = (D @ A @ D + sp.diags(1.0 - free)).tocsr()
    A_c.eliminate_zeros()
    return A_c, rhs_c
