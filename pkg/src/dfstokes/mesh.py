"""Uniform triangulations of the unit square with globally oriented edges.

Local edge ``j`` of a cell is the edge opposite its ``j``-th vertex.  Every
edge ``(a, b)`` is stored with ``a < b``; its tangent points from ``a`` to
``b`` and its normal is the tangent rotated by -90 degrees.  The per-cell
sign relates that global normal to the outward normal of the cell.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Recorded in study metadata so the split direction is reproducible.
DIAGONAL = "lower-left to upper-right"


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable 2D simplicial mesh.

    Attributes
    ----------
    vertices : (V, 2) float array
    cells : (C, 3) int array, counterclockwise
    edges : (E, 2) int array, first index < second
    cell_edges : (C, 3) int array, local edge j is opposite vertex j
    cell_edge_signs : (C, 3) float array of +-1
    edge_cells : (E, 2) int array, second entry -1 on boundary edges
    boundary_edges, boundary_vertices : bool arrays
    """

    vertices: np.ndarray
    cells: np.ndarray
    edges: np.ndarray
    cell_edges: np.ndarray
    cell_edge_signs: np.ndarray
    edge_cells: np.ndarray
    boundary_edges: np.ndarray
    boundary_vertices: np.ndarray
    h_T: np.ndarray
    h_F: np.ndarray
    edge_normals: np.ndarray
    edge_tangents: np.ndarray
    areas: np.ndarray
    centroids: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_edges)

    @property
    def h(self) -> float:
        return float(self.h_T.max())

    def outward_normals(self) -> np.ndarray:
        """(C, 3, 2) outward unit normals of every cell on its local edges."""
        return self.cell_edge_signs[..., None] * self.edge_normals[self.cell_edges]

    def edge_midpoints(self) -> np.ndarray:
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])


def from_cells(vertices, cells) -> Mesh:
    """Build the full topology from vertex coordinates and CCW cells."""
    vertices = np.ascontiguousarray(vertices, dtype=float)
    cells = np.ascontiguousarray(cells, dtype=np.int64)
    n_cells = len(cells)

    p = vertices[cells]
    signed = 0.5 * (
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    )
    if np.any(signed <= 0):
        raise ValueError("cells must be counterclockwise with positive area")

    # local edge j runs from vertex j+1 to vertex j+2 (counterclockwise)
    start = cells[:, [1, 2, 0]]
    stop = cells[:, [2, 0, 1]]
    lo = np.minimum(start, stop).ravel()
    hi = np.maximum(start, stop).ravel()
    pairs, inverse = np.unique(np.stack([lo, hi], axis=1), axis=0, return_inverse=True)
    inverse = inverse.ravel()
    cell_edges = inverse.reshape(n_cells, 3)
    cell_edge_signs = np.where(start < stop, 1.0, -1.0)

    n_edges = len(pairs)
    edge_cells = -np.ones((n_edges, 2), dtype=np.int64)
    owner = np.repeat(np.arange(n_cells), 3)
    order = np.lexsort((owner, inverse))
    sorted_edges = inverse[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = sorted_edges[1:] != sorted_edges[:-1]
    edge_cells[sorted_edges[first], 0] = owner[order][first]
    edge_cells[sorted_edges[~first], 1] = owner[order][~first]
    counts = np.bincount(inverse, minlength=n_edges)
    if np.any(counts > 2):
        raise ValueError("non-manifold edge in cell list")
    boundary_edges = counts == 1

    boundary_vertices = np.zeros(len(vertices), dtype=bool)
    boundary_vertices[pairs[boundary_edges].ravel()] = True

    d = vertices[pairs[:, 1]] - vertices[pairs[:, 0]]
    h_F = np.hypot(d[:, 0], d[:, 1])
    tangents = d / h_F[:, None]
    normals = np.stack([tangents[:, 1], -tangents[:, 0]], axis=1)

    h_T = h_F[cell_edges].max(axis=1)
    centroids = p.mean(axis=1)

    mesh = Mesh(
        vertices=vertices,
        cells=cells,
        edges=pairs,
        cell_edges=cell_edges,
        cell_edge_signs=cell_edge_signs,
        edge_cells=edge_cells,
        boundary_edges=boundary_edges,
        boundary_vertices=boundary_vertices,
        h_T=h_T,
        h_F=h_F,
        edge_normals=normals,
        edge_tangents=tangents,
        areas=signed,
        centroids=centroids,
    )
    for arr in vars(mesh).values():
        arr.setflags(write=False)
    return mesh


def build_uniform_unit_square(n: int) -> Mesh:
    """Split an ``n x n`` grid of the unit square into ``2 n^2`` triangles.

    Every square is cut along its lower-left to upper-right diagonal.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"mesh resolution must be a positive integer, got {n!r}")
    n = int(n)
    t = np.linspace(0.0, 1.0, n + 1)
    x, y = np.meshgrid(t, t, indexing="xy")
    vertices = np.stack([x.ravel(), y.ravel()], axis=1)

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    lower = np.stack([v00, v10, v11], axis=1)
    upper = np.stack([v00, v11, v01], axis=1)
    cells = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return from_cells(vertices, cells)


def refine(mesh: Mesh) -> Mesh:
    """Uniform red refinement: each triangle is split into four."""
    mid_ids = mesh.n_vertices + np.arange(mesh.n_edges)
    vertices = np.vstack([mesh.vertices, mesh.edge_midpoints()])
    c = mesh.cells
    m = mid_ids[mesh.cell_edges]
    cells = np.concatenate(
        [
            np.stack([c[:, 0], m[:, 2], m[:, 1]], axis=1),
            np.stack([m[:, 2], c[:, 1], m[:, 0]], axis=1),
            np.stack([m[:, 1], m[:, 0], c[:, 2]], axis=1),
            np.stack([m[:, 0], m[:, 1], m[:, 2]], axis=1),
        ]
    )
    return from_cells(vertices, cells)


def edge_geometry(mesh: Mesh, edge_index: int):
    """Return ``(midpoint, normal, tangent, length)`` of one edge."""
    if not 0 <= edge_index < mesh.n_edges:
        raise IndexError(f"edge index {edge_index} out of range [0, {mesh.n_edges})")
    a, b = mesh.edges[edge_index]
    mid = 0.5 * (mesh.vertices[a] + mesh.vertices[b])
    return (
        mid,
        mesh.edge_normals[edge_index].copy(),
        mesh.edge_tangents[edge_index].copy(),
        float(mesh.h_F[edge_index]),
    )
