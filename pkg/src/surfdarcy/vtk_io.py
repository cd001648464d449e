"""Legacy ASCII VTK writers for the active mesh and the discrete surface."""

from __future__ import annotations

import numpy as np

from .cut_surface import DiscreteSurface, sample_cells
from .mesh import ActiveMesh

__all__ = ["write_unstructured_grid", "export_active_mesh", "export_surface"]

_VTK_TET = 10
_VTK_TRIANGLE = 5
_VTK_QUADRATIC_TRIANGLE = 22

# reference barycentric coords of the surface-cell nodes
_TRI_NODES_P1 = np.eye(3)
_TRI_NODES_P2 = np.vstack(
    [np.eye(3), [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]]
)


def write_unstructured_grid(path, points, cells, cell_type, point_data=None):
    """Write one legacy VTK unstructured grid with optional point data.

    point_data maps names to (n,) scalar or (n, 3) vector arrays.
    """
    points = np.asarray(points, dtype=float)
    cells = np.asarray(cells, dtype=np.int64)
    n_cells, nodes_per_cell = cells.shape
    lines = [
        "# vtk DataFile Version 3.0",
        "surfdarcy output",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {len(points)} double",
    ]
    lines.extend(" ".join(f"{c:.12g}" for c in p) for p in points)
    lines.append(f"CELLS {n_cells} {n_cells * (nodes_per_cell + 1)}")
    lines.extend(
        f"{nodes_per_cell} " + " ".join(str(v) for v in row) for row in cells
    )
    lines.append(f"CELL_TYPES {n_cells}")
    lines.extend([str(cell_type)] * n_cells)
    if point_data:
        lines.append(f"POINT_DATA {len(points)}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            if values.ndim == 1:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(f"{v:.12g}" for v in values)
            else:
                lines.append(f"VECTORS {name} double")
                lines.extend(" ".join(f"{c:.12g}" for c in v) for v in values)
    with open(path, "w") as handle:
        handle.write("\n".join(lines) + "\n")


def export_active_mesh(path, active: ActiveMesh, point_data=None):
    """Active-mesh wireframe: the cut tets with compacted vertex numbering."""
    tets = active.tets
    used = np.unique(tets)
    renumber = np.full(len(active.parent.vertices), -1, dtype=np.int64)
    renumber[used] = np.arange(len(used))
    write_unstructured_grid(
        path,
        active.parent.vertices[used],
        renumber[tets],
        _VTK_TET,
        point_data=point_data,
    )


def export_surface(path, ds: DiscreteSurface, point_data=None):
    """Discrete surface cells (linear or quadratic triangles) with nodal data.

    `point_data` maps names to arrays over the flattened cell nodes, in the
    order returned by `surface_node_points`.
    """
    nodes, _ = surface_node_points(ds)
    nc, m, _ = nodes.shape
    cells = np.arange(nc * m).reshape(nc, m)
    cell_type = _VTK_TRIANGLE if ds.k_g == 1 else _VTK_QUADRATIC_TRIANGLE
    write_unstructured_grid(
        path, nodes.reshape(-1, 3), cells, cell_type, point_data=point_data
    )


def surface_node_points(ds: DiscreteSurface):
    """Cell-node coordinates (nc, m, 3) and oriented normals (nc, m, 3)."""
    bary = _TRI_NODES_P1 if ds.k_g == 1 else _TRI_NODES_P2
    return sample_cells(ds, bary)
