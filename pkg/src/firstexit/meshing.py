"""Structured simplicial meshes on axis-aligned boxes.

A box with k divisions per axis is cut into squares/cubes; each square is
split into 2 triangles along the same diagonal, each cube into 6 tetrahedra
by the sorted-coordinate (Kuhn) rule, so neighbouring cells always share
complete faces.  Node ids run x-fastest; the simplices of a cell are stored
contiguously, which makes point location a matter of cell arithmetic.
"""

from __future__ import annotations

from itertools import permutations

import numpy as np

__all__ = ["BoxDomain", "SimplicialMesh", "mesh_box", "locate_point", "export_text"]

# axis orderings of the Kuhn subdivision, with permutation parity
_PERMS = list(permutations((0, 1, 2)))
_PERM_INDEX = {p: i for i, p in enumerate(_PERMS)}


def _perm_sign(p):
    sign = 1
    p = list(p)
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            sign = -sign
    return sign


class BoxDomain:
    """Open axis-aligned box (lower_1, upper_1) x ... x (lower_d, upper_d)."""

    def __init__(self, lower, upper):
        self.lower = np.array(lower, dtype=float)
        self.upper = np.array(upper, dtype=float)
        if self.lower.ndim != 1 or self.lower.shape != self.upper.shape:
            raise ValueError("lower and upper must be 1-D and of equal length")
        if self.dimension not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.dimension}")
        if not np.all(self.lower < self.upper):
            raise ValueError("every lower bound must be strictly below its upper bound")

    @property
    def dimension(self):
        return self.lower.size

    @property
    def widths(self):
        return self.upper - self.lower

    def volume(self):
        return float(np.prod(self.widths))

    def contains(self, point, open_box=True):
        p = np.asarray(point, dtype=float)
        if open_box:
            return bool(np.all(p > self.lower) and np.all(p < self.upper))
        return bool(np.all(p >= self.lower) and np.all(p <= self.upper))

    def interior_grid(self, samples_per_axis):
        """Uniform grid of strictly interior points, flattened x-fastest."""
        n = int(samples_per_axis)
        if n < 1:
            raise ValueError("samples_per_axis must be positive")
        axes = [
            self.lower[j] + self.widths[j] * np.arange(1, n + 1) / (n + 1)
            for j in range(self.dimension)
        ]
        total = n**self.dimension
        idx = np.arange(total)
        pts = np.empty((total, self.dimension), dtype=float)
        for j in range(self.dimension):
            pts[:, j] = axes[j][(idx // n**j) % n]
        return pts

    def __repr__(self):
        parts = "x".join(f"({lo:g},{hi:g})" for lo, hi in zip(self.lower, self.upper))
        return f"BoxDomain({parts})"


class SimplicialMesh:
    """Triangulation produced by `mesh_box`.

    Attributes
    ----------
    nodes : ndarray, shape (n_nodes, d)
    elements : ndarray, shape (n_elements, d+1)
        Vertex ids, ordered so the signed volume is positive.
    boundary : ndarray of bool, shape (n_nodes,)
        True for nodes on the box surface.
    k : int
        Divisions per axis.
    domain : BoxDomain
    """

    def __init__(self, domain, k, nodes, elements, boundary):
        self.domain = domain
        self.k = int(k)
        self.nodes = nodes
        self.elements = elements
        self.boundary = boundary

    @property
    def dimension(self):
        return self.nodes.shape[1]

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    def cell_widths(self):
        return self.domain.widths / self.k

    def edge_matrices(self):
        """Per-element edge matrices (v_i - v_0), shape (n_elements, d, d)."""
        verts = self.nodes[self.elements]
        return verts[:, 1:, :] - verts[:, :1, :]

    def volumes(self):
        """Signed simplex volumes (positive by construction)."""
        dets = np.linalg.det(self.edge_matrices())
        return dets / (2.0 if self.dimension == 2 else 6.0)

    def interior_index(self):
        """Ids of non-boundary nodes."""
        return np.flatnonzero(~self.boundary)


def _node_ids_2d(k, ix, iy):
    return iy * (k + 1) + ix


def _node_ids_3d(k, ix, iy, iz):
    return (iz * (k + 1) + iy) * (k + 1) + ix


def mesh_box(domain, k):
    """Mesh a box with k uniform divisions per axis.

    Produces (k+1)^2 nodes and 2 k^2 triangles in 2D, (k+1)^3 nodes and
    6 k^3 tetrahedra in 3D.  Every element is positively oriented, and the
    simplices subdividing a cell are stored consecutively.

    Parameters
    ----------
    domain : BoxDomain
    k : int
        Divisions per axis, at least 1.

    Returns
    -------
    SimplicialMesh
    """
    k = int(k)
    if k < 1:
        raise ValueError("k must be at least 1")
    d = domain.dimension
    h = domain.widths / k

    if d == 2:
        n_nodes = (k + 1) ** 2
        idx = np.arange(n_nodes)
        ix = idx % (k + 1)
        iy = idx // (k + 1)
        nodes = np.column_stack(
            [domain.lower[0] + ix * h[0], domain.lower[1] + iy * h[1]]
        )
        boundary = (ix == 0) | (ix == k) | (iy == 0) | (iy == k)

        cells = np.arange(k * k)
        cx = cells % k
        cy = cells // k
        n00 = _node_ids_2d(k, cx, cy)
        n10 = _node_ids_2d(k, cx + 1, cy)
        n01 = _node_ids_2d(k, cx, cy + 1)
        n11 = _node_ids_2d(k, cx + 1, cy + 1)
        elements = np.empty((k * k, 2, 3), dtype=np.int64)
        elements[:, 0, 0] = n00
        elements[:, 0, 1] = n10
        elements[:, 0, 2] = n11
        elements[:, 1, 0] = n00
        elements[:, 1, 1] = n11
        elements[:, 1, 2] = n01
        elements = elements.reshape(-1, 3)
    else:
        n_nodes = (k + 1) ** 3
        idx = np.arange(n_nodes)
        ix = idx % (k + 1)
        iy = (idx // (k + 1)) % (k + 1)
        iz = idx // (k + 1) ** 2
        nodes = np.column_stack(
            [
                domain.lower[0] + ix * h[0],
                domain.lower[1] + iy * h[1],
                domain.lower[2] + iz * h[2],
            ]
        )
        boundary = (
            (ix == 0) | (ix == k) | (iy == 0) | (iy == k) | (iz == 0) | (iz == k)
        )

        cells = np.arange(k**3)
        cx = cells % k
        cy = (cells // k) % k
        cz = cells // k**2
        corner = np.zeros((k**3, 3), dtype=np.int64)
        corner[:, 0] = cx
        corner[:, 1] = cy
        corner[:, 2] = cz
        elements = np.empty((k**3, 6, 4), dtype=np.int64)
        for p_idx, perm in enumerate(_PERMS):
            steps = np.zeros((4, 3), dtype=np.int64)
            for v in range(1, 4):
                steps[v] = steps[v - 1]
                steps[v, perm[v - 1]] += 1
            order = (0, 1, 2, 3) if _perm_sign(perm) > 0 else (0, 1, 3, 2)
            for slot, v in enumerate(order):
                off = corner + steps[v]
                elements[:, p_idx, slot] = _node_ids_3d(
                    k, off[:, 0], off[:, 1], off[:, 2]
                )
        elements = elements.reshape(-1, 4)

    return SimplicialMesh(domain, k, nodes, elements, boundary)


def locate_point(mesh, point):
    """Find the element containing a point of the closed box.

    Returns
    -------
    (element, bary) : (int, ndarray)
        Element index and barycentric coordinates with respect to the stored
        vertex order; each coordinate is >= -1e-12 and they sum to 1.

    Raises
    ------
    ValueError
        If the point lies outside the closed box (beyond rounding slack).
    """
    p = np.asarray(point, dtype=float)
    dom = mesh.domain
    d = mesh.dimension
    if p.shape != (d,):
        raise ValueError(f"point must have {d} components")
    slack = 1e-12 * np.maximum(1.0, np.abs(dom.widths))
    if np.any(p < dom.lower - slack) or np.any(p > dom.upper + slack):
        raise ValueError(f"point {tuple(p)} lies outside the box {dom!r}")

    k = mesh.k
    h = dom.widths / k
    rel = (np.clip(p, dom.lower, dom.upper) - dom.lower) / h
    cell = np.minimum(rel.astype(np.int64), k - 1)
    t = rel - cell

    if d == 2:
        cell_index = cell[1] * k + cell[0]
        tx, ty = t
        if tx >= ty:
            element = 2 * cell_index
            bary = np.array([1.0 - tx, tx - ty, ty])
        else:
            element = 2 * cell_index + 1
            bary = np.array([1.0 - ty, tx, ty - tx])
    else:
        cell_index = (cell[2] * k + cell[1]) * k + cell[0]
        perm = tuple(int(a) for a in np.argsort(-t, kind="stable"))
        p_idx = _PERM_INDEX[perm]
        ts = t[list(perm)]
        lam = np.array([1.0 - ts[0], ts[0] - ts[1], ts[1] - ts[2], ts[2]])
        if _perm_sign(perm) < 0:
            lam = lam[[0, 1, 3, 2]]
        element = 6 * cell_index + p_idx
        bary = lam

    bary = np.clip(bary, 0.0, None)
    bary /= bary.sum()
    return int(element), bary


def export_text(mesh, stream):
    """Write nodes then elements as plain whitespace-separated text."""
    stream.write(f"{mesh.n_nodes} {mesh.n_elements} {mesh.dimension}\n")
    for row in mesh.nodes:
        stream.write(" ".join(f"{c:.17g}" for c in row) + "\n")
    for elem in mesh.elements:
        stream.write(" ".join(str(int(v)) for v in elem) + "\n")
