import numpy as np
import pytest

from hexmg.mesh import build_box_mesh
from hexmg.vtk import VTK_HEXAHEDRON, lattice_cells, read_vtk, write_vtk


def test_single_cell_connectivity():
    np.testing.assert_array_equal(lattice_cells((2, 2, 2)), [[0, 1, 3, 2, 4, 5, 7, 6]])


@pytest.mark.parametrize("p,counts", [(1, (2, 1, 1)), (2, (1, 2, 1)), (3, (1, 1, 1))])
def test_subcells_have_positive_volume(p, counts):
    mesh = build_box_mesh((1, 2, 3), counts, p)
    cells = lattice_cells(mesh.lattice)
    assert cells.shape == (np.prod(counts) * p ** 3, 8)
    X = mesh.coords[cells]
    # scalar triple product at vertex 0 of each linear hex
    vol = np.einsum("ij,ij->i", X[:, 1] - X[:, 0], np.cross(X[:, 3] - X[:, 0], X[:, 4] - X[:, 0]))
    assert np.all(vol > 0)
    assert len(np.unique(cells)) == mesh.n_nodes


def test_round_trip(tmp_path):
    mesh = build_box_mesh((2, 1, 1), (2, 1, 1), 2)
    u = np.random.default_rng(0).standard_normal(mesh.n_dofs)
    path = tmp_path / "out.vtk"
    write_vtk(path, mesh, u)
    data = read_vtk(path)
    np.testing.assert_array_equal(data["points"], mesh.coords)
    np.testing.assert_array_equal(data["displacement"].ravel(), u)
    np.testing.assert_array_equal(data["cells"], lattice_cells(mesh.lattice))
    assert np.all(data["cell_types"] == VTK_HEXAHEDRON)
    assert path.read_text().startswith("# vtk DataFile Version 3.0\n")


def test_geometry_only(tmp_path):
    mesh = build_box_mesh((1, 1, 1), (1, 1, 1), 1)
    write_vtk(tmp_path / "g.vtk", mesh)
    assert "displacement" not in read_vtk(tmp_path / "g.vtk")
