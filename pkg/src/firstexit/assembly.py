"""P1 finite element assembly of the generator's weak form.

For trial u and test w the elliptic form is

    G(u, w) = 1/2 sum_ij a_ij du/dx_i dw/dx_j
            + 1/2 sum_ij w du/dx_i d(a_ij)/dx_j
            - sum_i b_i w du/dx_i

with load F(w) = integral of w.  Basis gradients are constant per element;
all coefficients are frozen at the element centroid, and integrals of a bare
test function use int_K w = |K|/(d+1), which is exact for linear w.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .expressions import EvaluationError, evaluate_many
from .sparse import SparseMatrix

__all__ = [
    "AssembledSystem",
    "assemble_elliptic",
    "apply_dirichlet",
    "assemble_parabolic_step",
    "assemble_mass",
]


@dataclass(frozen=True)
class AssembledSystem:
    """Linear system with its Dirichlet bookkeeping.

    ``boundary_value`` is None until `apply_dirichlet` has replaced the
    constrained rows.
    """

    matrix: SparseMatrix
    rhs: np.ndarray
    boundary: np.ndarray
    boundary_value: float = None


def _geometry(mesh):
    """Per-element basis gradients, volumes and centroids."""
    edges = mesh.edge_matrices()
    dets = np.linalg.det(edges)
    if np.any(dets <= 0.0):
        raise ValueError("mesh contains a non-positively-oriented element")
    d = mesh.dimension
    volumes = dets / (2.0 if d == 2 else 6.0)
    inv = np.linalg.inv(edges)
    grads = np.empty((mesh.n_elements, d + 1, d), dtype=np.float64)
    grads[:, 1:, :] = np.transpose(inv, (0, 2, 1))
    grads[:, 0, :] = -np.sum(grads[:, 1:, :], axis=1)
    centroids = mesh.nodes[mesh.elements].mean(axis=1)
    return grads, volumes, centroids


def _coefficient(expr, centroids):
    try:
        return evaluate_many(expr, centroids)
    except EvaluationError as err:
        deltas = np.abs(centroids - err.point).max(axis=1)
        element = int(np.argmin(deltas))
        raise ValueError(
            f"coefficient evaluation failed on element {element} "
            f"(centroid {tuple(centroids[element])}): {err}"
        ) from err


def _elliptic_local(mesh, model):
    """Local (d+1)x(d+1) matrices of the elliptic form, per element."""
    d = mesh.dimension
    grads, volumes, centroids = _geometry(mesh)
    n_elem = mesh.n_elements

    a = np.empty((n_elem, d, d), dtype=np.float64)
    for i in range(d):
        for j in range(i, d):
            vals = _coefficient(model.diffusion[i][j], centroids)
            a[:, i, j] = vals
            a[:, j, i] = vals
    b = np.empty((n_elem, d), dtype=np.float64)
    for i in range(d):
        b[:, i] = _coefficient(model.drift[i], centroids)
    div_a = np.empty((n_elem, d), dtype=np.float64)
    for i, expr in enumerate(model.a_divergence()):
        div_a[:, i] = _coefficient(expr, centroids)

    # diffusion block: 0.5 |K| * g_a . A . g_b
    ag = np.einsum("eij,ebj->ebi", a, grads)
    local = 0.5 * volumes[:, None, None] * np.einsum("eai,ebi->eab", grads, ag)

    # terms with a bare w: identical for every test row of the element
    row = 0.5 * np.einsum("ei,ebi->eb", div_a, grads) - np.einsum(
        "ei,ebi->eb", b, grads
    )
    local += (volumes / (d + 1.0))[:, None, None] * row[:, None, :]
    return local, volumes


def _scatter(mesh, local):
    d1 = mesh.dimension + 1
    rows = np.broadcast_to(mesh.elements[:, :, None], (mesh.n_elements, d1, d1))
    cols = np.broadcast_to(mesh.elements[:, None, :], (mesh.n_elements, d1, d1))
    return SparseMatrix.from_triplets(
        mesh.n_nodes, rows.ravel(), cols.ravel(), local.ravel()
    )


def assemble_elliptic(mesh, model):
    """Assemble the elliptic operator matrix and the constant load F(w).

    Returns an `AssembledSystem` without the Dirichlet rows imposed yet;
    the right-hand side entry of a node is the sum of |K|/(d+1) over its
    incident elements.
    """
    if model.dimension != mesh.dimension:
        raise ValueError(
            f"model dimension {model.dimension} does not match mesh dimension {mesh.dimension}"
        )
    local, volumes = _elliptic_local(mesh, model)
    matrix = _scatter(mesh, local)
    rhs = np.zeros(mesh.n_nodes, dtype=np.float64)
    share = volumes / (mesh.dimension + 1.0)
    for a in range(mesh.dimension + 1):
        np.add.at(rhs, mesh.elements[:, a], share)
    return AssembledSystem(matrix=matrix, rhs=rhs, boundary=mesh.boundary)


def apply_dirichlet(system, g=0.0):
    """Replace boundary rows by identity rows with right-hand side g."""
    matrix = system.matrix.with_identity_rows(system.boundary)
    rhs = system.rhs.copy()
    rhs[system.boundary] = g
    return replace(system, matrix=matrix, rhs=rhs, boundary_value=float(g))


def assemble_mass(mesh):
    """Consistent mass matrix, entries |K| (1 + delta_ab) / ((d+1)(d+2))."""
    d = mesh.dimension
    volumes = mesh.volumes()
    base = np.full((d + 1, d + 1), 1.0, dtype=np.float64)
    base[np.diag_indices(d + 1)] = 2.0
    local = volumes[:, None, None] * (base / ((d + 1.0) * (d + 2.0)))
    return _scatter(mesh, local)


def assemble_parabolic_step(mesh, model, eta):
    """Matrices of one implicit Euler step of the survival equation.

    Returns ``(step, mass)`` with step = eta * (elliptic matrix) + mass, both
    without Dirichlet rows; the time stepper imposes u = 0 on the boundary by
    replacing the constrained rows of ``step`` and zeroing the corresponding
    entries of each per-step right-hand side mass @ u_m.
    """
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    if model.dimension != mesh.dimension:
        raise ValueError(
            f"model dimension {model.dimension} does not match mesh dimension {mesh.dimension}"
        )
    local, _ = _elliptic_local(mesh, model)
    elliptic = _scatter(mesh, local)
    mass = assemble_mass(mesh)
    step = mass.add_scaled(elliptic, eta)
    return step, mass
