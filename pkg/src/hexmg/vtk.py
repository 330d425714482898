"""Legacy ASCII VTK output.

High-order hexahedra are written as their ``p^3`` linear sub-cells on the
global node lattice, so every solution node becomes a VTK point.
"""

import numpy as np

VTK_HEXAHEDRON = 12


def lattice_cells(lattice):
    """Connectivity ``(n_cells, 8)`` of the linear cells of a node lattice.

    ``lattice`` is ``(Nx, Ny, Nz)`` nodes per direction, x fastest. Vertex
    order follows the VTK hexahedron convention.
    """
    Nx, Ny, Nz = lattice
    i, j, k = np.meshgrid(np.arange(Nx - 1), np.arange(Ny - 1), np.arange(Nz - 1), indexing="ij")
    i, j, k = (a.transpose(2, 1, 0).ravel() for a in (i, j, k))

    def node(a, b, c):
        return a + Nx * (b + Ny * c)

    return np.stack([node(i, j, k), node(i + 1, j, k), node(i + 1, j + 1, k), node(i, j + 1, k),
                     node(i, j, k + 1), node(i + 1, j, k + 1), node(i + 1, j + 1, k + 1),
                     node(i, j + 1, k + 1)], axis=1)


def write_vtk(path, mesh, displacement=None, title="hexmg solution"):
    """Write the mesh and an optional nodal displacement (length ``3 * n_nodes``)."""
    X = mesh.coords
    cells = lattice_cells(mesh.lattice)
    n_pts, n_cells = X.shape[0], cells.shape[0]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {n_pts} double\n")
        np.savetxt(fh, X, fmt="%.17g")
        fh.write(f"CELLS {n_cells} {9 * n_cells}\n")
        np.savetxt(fh, np.hstack([np.full((n_cells, 1), 8), cells]), fmt="%d")
        fh.write(f"CELL_TYPES {n_cells}\n")
        np.savetxt(fh, np.full(n_cells, VTK_HEXAHEDRON), fmt="%d")
        if displacement is not None:
            u = np.asarray(displacement, dtype=float).reshape(n_pts, 3)
            fh.write(f"POINT_DATA {n_pts}\nVECTORS displacement double\n")
            np.savetxt(fh, u, fmt="%.17g")


def read_vtk(path):
    """Minimal reader for files produced by :func:`write_vtk`.

    Returns a dict with ``points``, ``cells``, ``cell_types`` and optionally
    ``displacement``.
    """
    with open(path, encoding="utf-8") as fh:
        tokens = fh.read().split("\n")
    out = {}
    for i, raw in enumerate(tokens):
        line = raw.split()
        if not line:
            continue
        if line[0] == "POINTS":
            n = int(line[1])
            out["points"] = np.array([tokens[i + 1 + r].split() for r in range(n)], dtype=float)
        elif line[0] == "CELLS":
            n = int(line[1])
            rows = np.array([tokens[i + 1 + r].split() for r in range(n)], dtype=np.int64)
            out["cells"] = rows[:, 1:]
        elif line[0] == "CELL_TYPES":
            n = int(line[1])
            out["cell_types"] = np.array([tokens[i + 1 + r] for r in range(n)], dtype=np.int64)
        elif line[0] == "VECTORS":
            n = out["points"].shape[0]
            out["displacement"] = np.array([tokens[i + 1 + r].split() for r in range(n)], dtype=float)
    return out
