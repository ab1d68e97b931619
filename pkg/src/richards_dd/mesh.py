"""Structured simplicial meshes: uniform intervals (1D) and split rectangles (2D).

In 1D the single coordinate is the vertical one, ``z``, increasing upward.
In 2D nodes carry ``(x, z)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Mesh:
    dim: int
    nodes: np.ndarray          # (n_nodes, dim)
    elements: np.ndarray       # (n_elements, dim + 1)
    boundary_nodes: np.ndarray  # sorted indices
    boundary_tags: tuple       # tag per entry of boundary_nodes

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def interior_nodes(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)

    @property
    def z(self) -> np.ndarray:
        return self.nodes[:, -1]

    @property
    def x(self) -> np.ndarray:
        return self.nodes[:, 0] if self.dim == 2 else np.zeros(self.n_nodes)

    def element_measures(self) -> np.ndarray:
        """Lengths (1D) or areas (2D) of all elements."""
        p = self.nodes[self.elements]
        if self.dim == 1:
            return np.abs(p[:, 1, 0] - p[:, 0, 0])
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def nodes_tagged(self, tag: str) -> np.ndarray:
        tags = np.asarray(self.boundary_tags)
        return self.boundary_nodes[tags == tag]


def uniform_interval_mesh(n_cells: int, x0: float = 0.0, x1: float = 1.0) -> Mesh:
    """``n_cells`` equal segments on ``[x0, x1]``; ends tagged ``bottom``/``top``."""
    if n_cells < 1:
        raise ValueError("n_cells must be >= 1")
    if not x1 > x0:
        raise ValueError("need x1 > x0")
    nodes = np.linspace(x0, x1, n_cells + 1)[:, None]
    elements = np.column_stack([np.arange(n_cells), np.arange(1, n_cells + 1)])
    return Mesh(1, nodes, elements, np.array([0, n_cells]), ("bottom", "top"))


def structured_triangle_mesh(nx: int, ny: int, rect=(0.0, 1.0, 0.0, 1.0)) -> Mesh:
    """Rectangle ``(x0, x1, z0, z1)`` split into ``nx * ny`` squares, each cut along
    the same diagonal. Perimeter nodes are tagged; corners go to ``bottom``/``top``.
    """
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be >= 1")
    x0, x1, z0, z1 = rect
    if not (x1 > x0 and z1 > z0):
        raise ValueError("rectangle bounds must be increasing")
    xs = np.linspace(x0, x1, nx + 1)
    zs = np.linspace(z0, z1, ny + 1)
    X, Z = np.meshgrid(xs, zs)  # row j is z = zs[j]
    nodes = np.column_stack([X.ravel(), Z.ravel()])

    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    sw, se = idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel()
    nw, ne = idx[1:, :-1].ravel(), idx[1:, 1:].ravel()
    lower = np.column_stack([sw, se, ne])
    upper = np.column_stack([sw, ne, nw])
    elements = np.empty((2 * nx * ny, 3), dtype=int)
    elements[0::2] = lower
    elements[1::2] = upper

    tag = {}
    for i in idx[:, 0]:
        tag[int(i)] = "left"
    for i in idx[:, -1]:
        tag[int(i)] = "right"
    for i in idx[0, :]:
        tag[int(i)] = "bottom"
    for i in idx[-1, :]:
        tag[int(i)] = "top"
    bnodes = np.array(sorted(tag))
    return Mesh(2, nodes, elements, bnodes, tuple(tag[int(i)] for i in bnodes))


def element_mean(mesh: Mesh, nodal: np.ndarray) -> np.ndarray:
    """Average of nodal values over the vertices of each element."""
    return np.asarray(nodal)[mesh.elements].mean(axis=1)
