"""Continuous Lagrange spaces (P1, P2) on the active mesh.

Degrees of freedom sit at vertices (P1) plus edge midpoints (P2) of active
tets only; global numbering is vertices in lexicographic grid order followed
by edges ordered by their sorted endpoint pair, so rebuilding from identical
inputs yields identical DOF maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import shapes
from .mesh import ActiveMesh

__all__ = ["FESpace", "build_space", "eval_basis", "interpolate", "FESpaceError"]


class FESpaceError(ValueError):
    pass


@dataclass(frozen=True)
class FESpace:
    active_mesh: ActiveMesh
    order: int
    global_dofs: int
    cell_dofs: np.ndarray  # (n_active, 4 or 10)
    dof_coords: np.ndarray  # (global_dofs, 3)

    @property
    def local_dofs(self):
        return self.cell_dofs.shape[1]


def build_space(active: ActiveMesh, order: int) -> FESpace:
    if order not in (1, 2):
        raise FESpaceError("polynomial order must be 1 or 2")
    tets = active.tets  # (na, 4) global vertex ids
    verts_used = np.unique(tets)
    vert_dof = np.full(len(active.parent.vertices), -1, dtype=np.int64)
    vert_dof[verts_used] = np.arange(len(verts_used))
    cell_dofs = vert_dof[tets]

    coords = [active.parent.vertices[verts_used]]
    ndof = len(verts_used)
    if order == 2:
        pairs = np.sort(
            np.stack([tets[:, [a for a, _ in shapes.TET_EDGES]],
                      tets[:, [b for _, b in shapes.TET_EDGES]]], axis=2),
            axis=2,
        ).reshape(-1, 2)
        edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        edge_dofs = ndof + inverse.reshape(len(tets), 6)
        cell_dofs = np.concatenate([cell_dofs, edge_dofs], axis=1)
        coords.append(
            0.5
            * (
                active.parent.vertices[edges[:, 0]]
                + active.parent.vertices[edges[:, 1]]
            )
        )
        ndof += len(edges)
    return FESpace(
        active_mesh=active,
        order=order,
        global_dofs=ndof,
        cell_dofs=cell_dofs.astype(np.int64),
        dof_coords=np.concatenate(coords, axis=0),
    )


def tabulate(space: FESpace, cell_positions, points):
    """Basis values and physical gradients at points inside given active tets.

    cell_positions: (n,) active-mesh tet positions; points: (n, 3).
    Returns values (n, nb), gradients (n, nb, 3), dofs (n, nb).
    """
    cells = np.asarray(cell_positions, dtype=np.int64)
    pts = np.asarray(points, dtype=float)
    verts = space.active_mesh.tet_vertices[cells]
    lam = shapes.barycentric_coords(verts, pts)
    lam_grads = shapes.barycentric_gradients(verts)
    if space.order == 1:
        values = shapes.tet_p1_values(lam)
        dvalues = shapes.tet_p1_dvalues(lam)
    else:
        values = shapes.tet_p2_values(lam)
        dvalues = shapes.tet_p2_dvalues(lam)
    grads = np.einsum("nba,nax->nbx", dvalues, lam_grads)
    return values, grads, space.cell_dofs[cells]


def eval_basis(space: FESpace, tet: int, x):
    """All local basis values and gradients at one point of one active tet."""
    verts = space.active_mesh.tet_vertices[int(tet)]
    lam = shapes.barycentric_coords(verts, np.asarray(x, dtype=float))
    if np.any(lam < -1e-10) or np.any(lam > 1.0 + 1e-10):
        raise FESpaceError("point lies outside the requested tet")
    values, grads, _ = tabulate(space, np.array([tet]), np.asarray(x, dtype=float)[None])
    return values[0], grads[0]


def interpolate(space: FESpace, field) -> np.ndarray:
    """Nodal interpolation: coefficients are the field values at DOF coords."""
    try:
        vals = np.asarray(field(space.dof_coords), dtype=float)
        if vals.shape == (space.global_dofs,):
            return vals
    except Exception:
        pass
    return np.array([float(field(x)) for x in space.dof_coords])


def evaluate(space: FESpace, coeffs, cell_positions, points):
    """Point values of the FE function with the given coefficient vector."""
    values, _, dofs = tabulate(space, cell_positions, points)
    return np.einsum("nb,nb->n", values, np.asarray(coeffs)[dofs])


def evaluate_gradient(space: FESpace, coeffs, cell_positions, points):
    _, grads, dofs = tabulate(space, cell_positions, points)
    return np.einsum("nbx,nb->nx", grads, np.asarray(coeffs)[dofs])
