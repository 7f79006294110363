import numpy as np
import pytest

from stratum.meshkit import MeshError, GEOMETRY_TOL, build_structured, import_mesh, export_mesh, check_mesh, \
    jump_average, face_topology


SQUARE = """mdmesh 1
node 1 0 0
node 2 1 0
node 3 1 1
node 4 0 1
cell 1 1 2 3
cell 2 1 3 4
bface 1 2 inflow
bface 2 3 noflow
bface 3 4 outflow
bface 4 1 noflow
"""


def test_build_structured_counts():
    mesh = build_structured(10)
    assert mesh.matrix.num_cells == 200, 'Incorrect cell count ' + str(mesh.matrix.num_cells)
    assert mesh.fracture.num_cells == 8, 'Incorrect fracture segments ' + str(mesh.fracture.num_cells)
    assert [layer.num_cells for layer in mesh.layers] == [8, 8]
    assert mesh.subdomains == ('matrix', 'layer_plus', 'layer_minus', 'fracture')
    assert mesh.num_dofs == 200 + 3 * 8
    assert mesh.fracture.end_tags == ('inflow', 'tip')

    # Eight duplicated nodes: seven interior fracture nodes and the boundary end, not the tip
    assert mesh.matrix.num_nodes == 121 + 8, 'Incorrect slit node count ' + str(mesh.matrix.num_nodes)
    assert len(mesh.matrix.faces_tagged('slit_plus')) == 8
    assert len(mesh.matrix.faces_tagged('slit_minus')) == 8


def test_build_structured_full_diagonal():
    mesh = build_structured(10, ((0.0, 0.0), (1.0, 1.0)))
    assert mesh.fracture.num_cells == 10
    assert mesh.fracture.end_tags == ('inflow', 'inflow'), 'both ends lie on the boundary'
    assert mesh.fracture.is_boundary_end(0) and mesh.fracture.is_boundary_end(-1)


def test_build_structured_errors():
    with pytest.raises(MeshError, match='0.15'):
        build_structured(10, ((0.15, 0.0), (0.9, 0.75)))
    with pytest.raises(MeshError, match='diagonal'):
        build_structured(10, ((0.1, 0.0), (0.9, 0.5)))
    with pytest.raises(MeshError):
        build_structured(0)
    with pytest.raises(MeshError):
        build_structured(10, inflow='top', outflow='top')
    with pytest.raises(MeshError):
        build_structured(10, mode='fractured')


def test_fracture_only_mode():
    mesh = build_structured(10, mode='fracture_only')
    assert mesh.layers is None and mesh.maps_Gamma is None
    assert mesh.subdomains == ('matrix', 'fracture')
    assert [iface.lower_grid for iface in mesh.maps_M] == ['fracture', 'fracture']
    with pytest.raises(KeyError):
        mesh.grid('layer_plus')


def test_geometry_invariants():
    mesh = build_structured(10)
    matrix = mesh.matrix
    assert np.all(matrix.cell_volumes > 0)
    assert abs(matrix.cell_volumes.sum() - 1.0) < 1e-12, 'cells must tile the unit square'

    # Signed area-weighted normals close per cell
    closure = np.sum(matrix.cell_face_signs[..., None] * matrix.face_areas[matrix.cell_faces][..., None] *
                     matrix.face_normals[matrix.cell_faces], axis=1)
    assert np.abs(closure).max() <= 1e-12

    # Divergence of a constant field vanishes in every cell
    velocity = np.array([0.3, -1.7])
    flux = matrix.face_areas * (matrix.face_normals @ velocity)
    assert np.abs(matrix.divergence(flux)).max() <= 1e-12

    counts = np.count_nonzero(matrix.face_cells >= 0, axis=1)
    assert np.all((counts == 1) | (counts == 2))
    assert np.all(matrix.face_cells[matrix.boundary_faces(), 1] < 0)
    assert set(matrix.boundary_tags[matrix.boundary_faces()]) == {'inflow', 'outflow', 'noflow', 'slit_plus',
                                                                   'slit_minus'}


def test_slit_faces_disconnected():
    mesh = build_structured(10)
    matrix = mesh.matrix
    plus, minus = mesh.maps_M
    assert np.allclose(matrix.face_centroids[plus.upper], matrix.face_centroids[minus.upper], atol=GEOMETRY_TOL)
    shared = set(matrix.faces[plus.upper].ravel().tolist()) & set(matrix.faces[minus.upper].ravel().tolist())
    assert shared == {int(mesh.fracture_nodes[-1])}, 'slit sides may only share the immersed tip'

    # The plus side lies where the fracture normal points
    cells = matrix.face_cells[plus.upper, 0]
    offset = matrix.cell_centroids[cells] - mesh.fracture.centroids[plus.lower]
    assert np.all(np.einsum('ij,ij->i', offset, mesh.fracture.normals[plus.lower]) > 0)


def test_interface_maps_compose():
    mesh = build_structured(20)
    matrix = mesh.matrix
    for m_map, g_map in zip(mesh.maps_M, mesh.maps_Gamma):
        assert m_map.side == g_map.side
        layer = mesh.grid(m_map.lower_grid)
        # matrix slit face -> layer segment -> fracture segment
        segment = g_map.lower[np.searchsorted(g_map.upper, m_map.lower)]
        gap = np.abs(matrix.face_centroids[m_map.upper] - mesh.fracture.centroids[segment]).max()
        assert gap <= 1e-12, m_map.name + ' does not land on the coincident fracture segment'
        assert np.allclose(layer.points, mesh.fracture.points)
        assert np.all(m_map.weights == 1) and np.all(g_map.weights == 1)


def test_lower_dim_grid():
    grid = build_structured(10).fracture
    assert np.all(np.diff(grid.arc_length) > 0)
    assert abs(grid.arc_length[-1] - 0.8 * np.sqrt(2)) < 1e-12
    assert np.allclose(grid.tangents, np.sqrt(0.5))
    assert np.allclose(grid.normals, [[-np.sqrt(0.5), np.sqrt(0.5)]] * grid.num_cells)


def test_locate():
    matrix = build_structured(4, None).matrix
    cells = matrix.locate([[0.1, 0.05], [0.9, 0.95], [1.5, 0.5]])
    assert cells[2] == -1
    for cell, point in zip(cells[:2], ([0.1, 0.05], [0.9, 0.95])):
        corners = matrix.nodes[matrix.cells[cell]]
        assert corners[:, 0].min() <= point[0] <= corners[:, 0].max()
        assert corners[:, 1].min() <= point[1] <= corners[:, 1].max()


def test_import_square():
    mesh = import_mesh(SQUARE)
    assert mesh.matrix.num_cells == 2
    assert mesh.fracture.num_cells == 0
    assert len(mesh.matrix.faces_tagged('inflow')) == 1


def test_export_import_round_trip():
    mesh = build_structured(10)
    text = export_mesh(mesh)
    assert text.startswith('mdmesh 1\n')
    other = import_mesh(text)
    assert np.array_equal(other.matrix.nodes, mesh.matrix.nodes)
    assert np.array_equal(other.matrix.cells, mesh.matrix.cells)
    assert np.array_equal(other.matrix.boundary_tags, mesh.matrix.boundary_tags)
    assert np.array_equal(other.fracture.points, mesh.fracture.points)
    assert export_mesh(other) == text, 'export must be stable'


def test_import_pre_slit():
    mesh = build_structured(10)
    matrix = mesh.matrix
    lines = ['mdmesh 1']
    lines += ['node {:d} {:.17g} {:.17g}'.format(i, x, y) for i, (x, y) in enumerate(matrix.nodes)]
    lines += ['cell {:d} {:d} {:d} {:d}'.format(i, *c) for i, c in enumerate(matrix.cells.tolist())]
    for face in matrix.boundary_faces():
        a, b = matrix.faces[face]
        lines.append('bface {:d} {:d} {:s}'.format(a, b, matrix.boundary_tags[face]))
    other = import_mesh('\n'.join(lines))
    assert other.fracture.num_cells == 8
    assert np.allclose(other.fracture.points, mesh.fracture.points), 'slit_plus faces keep the orientation'
    assert other.matrix.num_cells == 200


def test_import_errors():
    with pytest.raises(MeshError, match='mdmesh'):
        import_mesh('node 1 0 0\n')
    with pytest.raises(MeshError, match='missing node 9'):
        import_mesh(SQUARE.replace('cell 2 1 3 4', 'cell 2 1 3 9'))
    with pytest.raises(MeshError, match='cell 2 has zero area'):
        import_mesh(SQUARE.replace('cell 2 1 3 4', 'cell 2 1 3 3'))
    with pytest.raises(MeshError, match='unknown record'):
        import_mesh(SQUARE + 'edge 1 2\n')

    unpaired = SQUARE + 'node 5 0.5 0.5\nbface 1 5 slit_plus\n'
    with pytest.raises(MeshError, match='slit_plus'):
        import_mesh(unpaired)


def test_check_mesh():
    mesh = build_structured(10)
    assert check_mesh(mesh)


def test_face_topology():
    faces, cell_faces, face_cells = face_topology([[0, 1, 2], [0, 2, 3]])
    assert len(faces) == 5
    shared = [i for i, cells in enumerate(face_cells.tolist()) if cells[1] >= 0]
    assert len(shared) == 1 and faces[shared[0]].tolist() == [0, 2]
    assert cell_faces.shape == (2, 3)


def test_jump_average():
    assert jump_average(2.0, 1.0) == (1.0, 1.5)
    assert jump_average(0.7, 0.7) == (0.0, 0.7)
    jump, _ = jump_average(1.0, 3.0, 'mu_minus')
    assert jump == 2.0
    jump, _ = jump_average(1.0, 3.0, 'mu_plus')
    assert jump == -2.0
    with pytest.raises(ValueError):
        jump_average(1.0, 2.0, 'other')


if __name__ == '__main__':
    test_build_structured_counts()
    test_geometry_invariants()
    test_export_import_round_trip()
    test_jump_average()
    print('All tests finished successfully!')
