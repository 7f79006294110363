"""
    stratum.meshkit

Mixed-dimensional geometry for a fractured unit square.

The matrix is a triangulation with a slit cut along the fracture. Every fracture face is duplicated, one copy
per side, and the fracture nodes are duplicated except at an immersed tip. The fracture and the two layers
flanking it share one polyline grid. Interface maps pair each lower-dimensional segment with the slit face
(matrix side) or the coincident segment (layer to fracture) on one side of the fracture.

The plus side of the fracture is the side its unit normal ``n = (-t_y, t_x)`` points to, ``t`` being the
tangent from the first fracture vertex to the last.
"""
import logging
from collections import deque
from dataclasses import dataclass

import numpy as np


__all__ = ['MeshError', 'GEOMETRY_TOL', 'BOUNDARY_TAGS', 'SIDES', 'MODES', 'face_topology',
           'TriangleMesh', 'LowerDimGrid', 'InterfaceMap', 'MixedDimMesh',
           'build_structured', 'import_mesh', 'export_mesh', 'check_mesh', 'jump_average']


log = logging.getLogger(__name__)


GEOMETRY_TOL = 1e-12
BOUNDARY_TAGS = ('inflow', 'outflow', 'noflow', 'slit_plus', 'slit_minus')
OUTER_TAGS = BOUNDARY_TAGS[:3]
SIDES = ('bottom', 'right', 'top', 'left')
MODES = ('fracture_only', 'multilayer')

# Local face i of a triangle is opposite its local node i
LOCAL_FACES = np.array([[1, 2], [2, 0], [0, 1]])


class MeshError(ValueError):
    """Invalid geometry or mesh file."""


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _readonly(*arrays):
    for arr in arrays:
        arr.setflags(write=False)


def face_topology(cells):
    """Return the faces (sorted node pairs), cell_faces and face_cells of a triangulation.

    ``face_cells`` lists the lowest cell id first and holds -1 where a face has a single cell.
    """
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 3)
    n_cells = len(cells)
    if n_cells == 0:
        empty = np.zeros((0, 2), dtype=np.int64)
        return empty, np.zeros((0, 3), dtype=np.int64), empty.copy()

    edges = np.sort(cells[:, LOCAL_FACES].reshape(-1, 2), axis=1)
    faces, inverse, counts = np.unique(edges, axis=0, return_inverse=True, return_counts=True)
    inverse = np.asarray(inverse).reshape(-1)
    if np.any(counts > 2):
        bad = int(np.flatnonzero(counts > 2)[0])
        raise MeshError('face with nodes {:d} {:d} is shared by {:d} cells'.format(
            faces[bad, 0], faces[bad, 1], counts[bad]))
    cell_faces = inverse.reshape(n_cells, 3)

    owners = np.repeat(np.arange(n_cells), 3)
    order = np.argsort(inverse, kind='stable')
    sorted_faces = inverse[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = sorted_faces[1:] != sorted_faces[:-1]
    face_cells = np.full((len(faces), 2), -1, dtype=np.int64)
    face_cells[sorted_faces[first], 0] = owners[order][first]
    face_cells[sorted_faces[~first], 1] = owners[order][~first]
    return faces, cell_faces, face_cells
# end face_topology


class TriangleMesh(object):
    """Triangulated matrix domain with face connectivity and geometry.

    Cells are stored counter-clockwise. Face normals point from ``face_cells[:, 0]`` to ``face_cells[:, 1]``,
    outward on the boundary.

    Args:
        nodes (np.ndarray): (n, 2) node coordinates.
        cells (np.ndarray): (m, 3) node ids in any orientation.
        face_tags (dict): Boundary tag for every boundary face, keyed by the sorted node pair.
        node_origin (np.ndarray)[None]: Node id in the unslit triangulation for every node.
    """

    def __init__(self, nodes, cells, face_tags, node_origin=None):
        nodes = np.array(nodes, dtype=np.float64).reshape(-1, 2)
        cells = np.array(cells, dtype=np.int64).reshape(-1, 3)
        if cells.size:
            dangling = np.any((cells < 0) | (cells >= len(nodes)), axis=1)
            if np.any(dangling):
                raise MeshError('cell {:d} references a missing node'.format(int(np.flatnonzero(dangling)[0])))

        corners = nodes[cells]
        doubled = _cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
        flip = doubled < 0
        cells[flip] = cells[flip][:, [0, 2, 1]]
        volumes = 0.5 * np.abs(doubled)
        if np.any(volumes <= GEOMETRY_TOL):
            raise MeshError('cell {:d} has zero area'.format(int(np.flatnonzero(volumes <= GEOMETRY_TOL)[0])))

        faces, cell_faces, face_cells = face_topology(cells)
        cell_centroids = nodes[cells].mean(axis=1)
        face_centroids = nodes[faces].mean(axis=1)
        tangent = nodes[faces[:, 1]] - nodes[faces[:, 0]]
        face_areas = np.hypot(tangent[:, 0], tangent[:, 1])
        normals = np.column_stack((tangent[:, 1], -tangent[:, 0])) / face_areas[:, None]
        outward = np.einsum('ij,ij->i', face_centroids - cell_centroids[face_cells[:, 0]], normals)
        normals[outward < 0] *= -1
        signs = np.where(face_cells[cell_faces, 0] == np.arange(len(cells))[:, None], 1.0, -1.0)

        tags = np.full(len(faces), '', dtype='<U10')
        for face in np.flatnonzero(face_cells[:, 1] < 0):
            key = (int(faces[face, 0]), int(faces[face, 1]))
            tag = face_tags.get(key)
            if tag is None:
                raise MeshError('boundary face {:d} with nodes {:d} {:d} has no tag'.format(face, *key))
            elif tag not in BOUNDARY_TAGS:
                raise MeshError('boundary face {:d} has unknown tag {!r}'.format(face, tag))
            tags[face] = tag

        if node_origin is None:
            node_origin = np.arange(len(nodes))
        node_origin = np.array(node_origin, dtype=np.int64)

        self.nodes = nodes
        self.cells = cells
        self.faces = faces
        self.cell_faces = cell_faces
        self.face_cells = face_cells
        self.cell_face_signs = signs
        self.cell_volumes = volumes
        self.cell_centroids = cell_centroids
        self.face_areas = face_areas
        self.face_normals = normals
        self.face_centroids = face_centroids
        self.boundary_tags = tags
        self.node_origin = node_origin
        _readonly(nodes, cells, faces, cell_faces, face_cells, signs, volumes, cell_centroids, face_areas,
                  normals, face_centroids, tags, node_origin)
    # end constructor

    @property
    def num_nodes(self):
        return len(self.nodes)

    @property
    def num_cells(self):
        return len(self.cells)

    @property
    def num_faces(self):
        return len(self.faces)

    def boundary_faces(self):
        """Return the ids of faces with a single cell."""
        return np.flatnonzero(self.face_cells[:, 1] < 0)

    def faces_tagged(self, *tags):
        """Return the ids of the faces carrying any of the given tags."""
        return np.flatnonzero(np.isin(self.boundary_tags, tags))

    def divergence(self, face_flux):
        """Return the net outflow of every cell for fluxes given along the face normals."""
        face_flux = np.asarray(face_flux, dtype=np.float64)
        return np.sum(self.cell_face_signs * face_flux[self.cell_faces], axis=1)

    def locate(self, points, tol=1e-10):
        """Return the containing cell of each point, or -1 outside the mesh. Ties go to the lowest cell id."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        corners = self.nodes[self.cells]
        x0 = corners[:, 0]
        e1 = corners[:, 1] - x0
        e2 = corners[:, 2] - x0
        det = _cross(e1, e2)
        rel = points[:, None, :] - x0[None, :, :]
        lam1 = _cross(rel, e2[None]) / det[None]
        lam2 = _cross(e1[None], rel) / det[None]
        inside = (lam1 >= -tol) & (lam2 >= -tol) & (lam1 + lam2 <= 1 + tol)
        found = np.any(inside, axis=1)
        return np.where(found, np.argmax(inside, axis=1), -1)
# end class TriangleMesh


def _segments_intersect(p, q, r, s, tol=GEOMETRY_TOL):
    """Return True where segment pq meets segment rs (arrays broadcast)."""
    d1 = _cross(s - r, p - r)
    d2 = _cross(s - r, q - r)
    d3 = _cross(q - p, r - p)
    d4 = _cross(q - p, s - p)
    proper = (d1 * d2 < -tol ** 2) & (d3 * d4 < -tol ** 2)

    collinear = (np.abs(d1) <= tol) & (np.abs(d2) <= tol) & (np.abs(d3) <= tol) & (np.abs(d4) <= tol)
    direction = q - p
    length2 = np.sum(direction * direction, axis=-1)
    tr = np.sum((r - p) * direction, axis=-1)
    ts = np.sum((s - p) * direction, axis=-1)
    overlap = (np.maximum(tr, ts) >= -tol) & (np.minimum(tr, ts) <= length2 + tol)
    return proper | (collinear & overlap)


class LowerDimGrid(object):
    """Polyline grid of a fracture or a layer.

    Args:
        points (np.ndarray): (m + 1, 2) vertex positions along the polyline.
        end_tags (tuple)[None]: Tag of the first and last vertex, 'inflow' on the domain boundary or 'tip'.
        name (str)['fracture']: Subdomain name.
    """

    def __init__(self, points, end_tags=None, name='fracture'):
        points = np.array(points, dtype=np.float64).reshape(-1, 2)
        if len(points) == 1:
            raise MeshError('{:s} polyline needs at least two vertices'.format(name))

        n_segments = max(len(points) - 1, 0)
        vectors = points[1:] - points[:-1]
        lengths = np.hypot(vectors[:, 0], vectors[:, 1])
        if np.any(lengths <= GEOMETRY_TOL):
            raise MeshError('{:s} segment {:d} has zero length'.format(
                name, int(np.flatnonzero(lengths <= GEOMETRY_TOL)[0])))

        if end_tags is None:
            end_tags = ('inflow', 'tip') if n_segments else ()
        self.name = name
        self.points = points
        self.segments = np.column_stack((np.arange(n_segments), np.arange(1, n_segments + 1)))
        self.lengths = lengths
        self.tangents = vectors / lengths[:, None] if n_segments else np.zeros((0, 2))
        self.normals = np.column_stack((-self.tangents[:, 1], self.tangents[:, 0]))
        self.centroids = 0.5 * (points[1:] + points[:-1])
        self.arc_length = np.concatenate(([0.0], np.cumsum(lengths))) if len(points) else np.zeros(0)
        self.end_tags = tuple(end_tags)
        _readonly(self.points, self.segments, self.lengths, self.tangents, self.normals, self.centroids,
                  self.arc_length)
        self._check_simple()
    # end constructor

    def _check_simple(self):
        n = self.num_cells
        if n < 3:
            return
        i, j = np.triu_indices(n, k=2)
        p, q = self.points[i], self.points[i + 1]
        r, s = self.points[j], self.points[j + 1]
        crossing = _segments_intersect(p, q, r, s)
        if np.any(crossing):
            k = int(np.flatnonzero(crossing)[0])
            raise MeshError('{:s} polyline intersects itself at segments {:d} and {:d}'.format(self.name, i[k], j[k]))

    @property
    def num_cells(self):
        return len(self.lengths)

    def is_boundary_end(self, end):
        """Return True if vertex ``end`` (0 or -1) touches the domain boundary."""
        return self.num_cells > 0 and self.end_tags[0 if end == 0 else 1] == 'inflow'
# end class LowerDimGrid


@dataclass(frozen=True, eq=False)
class InterfaceMap(object):
    """Pairs of lower-dimensional segments and the coincident upper entities on one side of the fracture.

    ``upper`` holds matrix face ids when ``upper_grid`` is 'matrix', segment ids otherwise.
    """
    name: str
    side: str
    lower_grid: str
    upper_grid: str
    lower: np.ndarray
    upper: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.lower)


@dataclass(frozen=True, eq=False)
class MixedDimMesh(object):
    """Matrix, fracture and layer grids with their interface maps."""
    matrix: TriangleMesh
    fracture: LowerDimGrid
    layers: tuple
    maps_M: tuple
    maps_Gamma: tuple
    mode: str
    fracture_nodes: np.ndarray

    @property
    def subdomains(self):
        """Subdomain names in global numbering order."""
        if self.mode == 'multilayer':
            return ('matrix', 'layer_plus', 'layer_minus', 'fracture')
        return ('matrix', 'fracture')

    @property
    def lower_subdomains(self):
        return self.subdomains[1:]

    def grid(self, name):
        if name == 'matrix':
            return self.matrix
        elif name == 'fracture':
            return self.fracture
        for layer in self.layers or ():
            if layer.name == name:
                return layer
        raise KeyError('no subdomain {!r} in {:s} mode'.format(name, self.mode))

    def num_cells(self, name):
        return self.grid(name).num_cells

    def cell_measures(self, name):
        """Cell areas of the matrix or segment lengths of a 1D grid."""
        grid = self.grid(name)
        return grid.cell_volumes if name == 'matrix' else grid.lengths

    def offsets(self):
        """Return the global (start, stop) range of every subdomain's cells."""
        ranges = {}
        start = 0
        for name in self.subdomains:
            stop = start + self.num_cells(name)
            ranges[name] = (start, stop)
            start = stop
        return ranges

    @property
    def num_dofs(self):
        return sum(self.num_cells(name) for name in self.subdomains)

    @property
    def interfaces(self):
        return tuple(self.maps_M) + tuple(self.maps_Gamma or ())

    def interface(self, name):
        for iface in self.interfaces:
            if iface.name == name:
                return iface
        raise KeyError('no interface {!r} in {:s} mode'.format(name, self.mode))
# end class MixedDimMesh


def _order_polyline(edges):
    """Order fracture faces into a vertex path. The first edge keeps its direction."""
    if not edges:
        return []
    neighbours = {}
    for a, b in edges:
        if a == b:
            raise MeshError('fracture face {:d} {:d} is degenerate'.format(a, b))
        neighbours.setdefault(a, []).append(b)
        neighbours.setdefault(b, []).append(a)
    for node, adjacent in neighbours.items():
        if len(adjacent) > 2:
            raise MeshError('fracture node {:d} has {:d} fracture faces; networks are not supported'.format(
                node, len(adjacent)))

    ends = sorted(node for node, adjacent in neighbours.items() if len(adjacent) == 1)
    if not ends:
        raise MeshError('fracture faces form a closed loop')

    path = [ends[0]]
    previous = None
    while True:
        following = [node for node in neighbours[path[-1]] if node != previous]
        if not following:
            break
        previous = path[-1]
        path.append(following[0])
    if len(path) - 1 != len(edges):
        raise MeshError('fracture faces do not form a single connected polyline')

    a, b = edges[0]
    if path.index(b) != path.index(a) + 1:
        path.reverse()
    return path
# end _order_polyline


def _star_component(cells, star, node, seed, fracture_edges):
    """Return the cells around ``node`` reachable from ``seed`` without crossing a fracture face."""
    others = {int(c): set(cells[c].tolist()) - {node} for c in star}
    seen = {seed}
    queue = deque([seed])
    while queue:
        current = queue.popleft()
        for cell in others:
            if cell in seen:
                continue
            shared = others[current] & others[cell]
            if any((min(node, x), max(node, x)) not in fracture_edges for x in shared):
                seen.add(cell)
                queue.append(cell)
    return seen


def _slit(nodes, cells, frac_nodes, outer_tags):
    """Cut the triangulation along the fracture polyline.

    Returns the slit nodes, cells and face tags, the node origin, and the plus and minus cell of every
    fracture segment.
    """
    faces, cell_faces, face_cells = face_topology(cells)
    lookup = {(int(a), int(b)): i for i, (a, b) in enumerate(faces)}
    boundary_nodes = set(faces[face_cells[:, 1] < 0].ravel().tolist())
    centroids = nodes[cells].mean(axis=1)

    fracture_edges = set()
    plus_cells, minus_cells = [], []
    for a, b in zip(frac_nodes[:-1], frac_nodes[1:]):
        key = (min(a, b), max(a, b))
        face = lookup.get(key)
        if face is None:
            raise MeshError('fracture face {:d} {:d} is not an edge of the triangulation'.format(a, b))
        c0, c1 = (int(c) for c in face_cells[face])
        if c1 < 0:
            raise MeshError('fracture face {:d} {:d} lies on the domain boundary'.format(a, b))
        tangent = nodes[b] - nodes[a]
        normal = np.array([-tangent[1], tangent[0]])
        if np.dot(centroids[c0] - 0.5 * (nodes[a] + nodes[b]), normal) > 0:
            plus_cells.append(c0)
            minus_cells.append(c1)
        else:
            plus_cells.append(c1)
            minus_cells.append(c0)
        fracture_edges.add(key)

    last = len(frac_nodes) - 1
    duplicate = [v for k, v in enumerate(frac_nodes) if 0 < k < last or v in boundary_nodes]
    if len(frac_nodes) == 2 and not duplicate:
        raise MeshError('a fracture with two immersed tips needs at least two segments')

    new_cells = cells.copy()
    origin = list(range(len(nodes)))
    for v in duplicate:
        star = np.flatnonzero(np.any(cells == v, axis=1))
        incident = [k for k in range(last) if v in (frac_nodes[k], frac_nodes[k + 1])]
        component = _star_component(cells, star, v, plus_cells[incident[0]], fracture_edges)
        if any(minus_cells[k] in component for k in incident):
            raise MeshError('fracture does not separate the cells around node {:d}'.format(v))
        rows = sorted(component)
        new_cells[rows] = np.where(cells[rows] == v, len(origin), new_cells[rows])
        origin.append(v)

    origin = np.array(origin, dtype=np.int64)
    new_nodes = nodes[origin]
    plus_set = set(plus_cells)

    new_faces, _, new_face_cells = face_topology(new_cells)
    face_tags = {}
    for face in np.flatnonzero(new_face_cells[:, 1] < 0):
        a, b = (int(v) for v in new_faces[face])
        oa, ob = int(origin[a]), int(origin[b])
        key = (min(oa, ob), max(oa, ob))
        if key in fracture_edges:
            face_tags[(a, b)] = 'slit_plus' if int(new_face_cells[face, 0]) in plus_set else 'slit_minus'
        elif key in outer_tags:
            face_tags[(a, b)] = outer_tags[key]
    return new_nodes, new_cells, face_tags, origin, plus_cells, minus_cells
# end _slit


def _slit_face(matrix, cell, key):
    """Return the face of ``cell`` whose unslit node pair is ``key``."""
    for face in matrix.cell_faces[cell]:
        pair = sorted(int(v) for v in matrix.node_origin[matrix.faces[face]])
        if tuple(pair) == key:
            return int(face)
    raise MeshError('cell {:d} has no face on fracture edge {:d} {:d}'.format(cell, *key))


def _mixed_mesh(nodes, cells, frac_nodes, outer_tags, mode):
    """Slit the triangulation along ``frac_nodes`` and assemble the mixed-dimensional mesh."""
    if mode not in MODES:
        raise MeshError('unknown mode {!r}, expected one of {}'.format(mode, MODES))
    nodes = np.asarray(nodes, dtype=np.float64)
    cells = np.asarray(cells, dtype=np.int64)
    frac_nodes = [int(v) for v in frac_nodes]

    if len(frac_nodes) >= 2:
        slit_nodes, slit_cells, face_tags, origin, plus_cells, minus_cells = _slit(nodes, cells, frac_nodes,
                                                                                  outer_tags)
    else:
        slit_nodes, slit_cells, face_tags, origin = nodes, cells, dict(outer_tags), None
        plus_cells, minus_cells = [], []
    matrix = TriangleMesh(slit_nodes, slit_cells, face_tags, node_origin=origin)

    keys = [(min(a, b), max(a, b)) for a, b in zip(frac_nodes[:-1], frac_nodes[1:])]
    plus_faces = np.array([_slit_face(matrix, c, k) for c, k in zip(plus_cells, keys)], dtype=np.int64)
    minus_faces = np.array([_slit_face(matrix, c, k) for c, k in zip(minus_cells, keys)], dtype=np.int64)

    end_tags = ()
    if len(frac_nodes) >= 2:
        unslit_faces, _, unslit_face_cells = face_topology(cells)
        on_boundary = set(unslit_faces[unslit_face_cells[:, 1] < 0].ravel().tolist())
        end_tags = tuple('inflow' if v in on_boundary else 'tip' for v in (frac_nodes[0], frac_nodes[-1]))
    points = nodes[frac_nodes] if frac_nodes else np.zeros((0, 2))

    fracture = LowerDimGrid(points, end_tags, 'fracture')
    segments = np.arange(fracture.num_cells)
    ones = np.ones(fracture.num_cells)
    if mode == 'fracture_only':
        layers = None
        maps_M = (InterfaceMap('M_plus', 'plus', 'fracture', 'matrix', segments, plus_faces, ones),
                  InterfaceMap('M_minus', 'minus', 'fracture', 'matrix', segments, minus_faces, ones))
        maps_Gamma = None
    else:
        layers = (LowerDimGrid(points, end_tags, 'layer_plus'), LowerDimGrid(points, end_tags, 'layer_minus'))
        maps_M = (InterfaceMap('M_plus', 'plus', 'layer_plus', 'matrix', segments, plus_faces, ones),
                  InterfaceMap('M_minus', 'minus', 'layer_minus', 'matrix', segments, minus_faces, ones))
        maps_Gamma = (InterfaceMap('Gamma_plus', 'plus', 'fracture', 'layer_plus', segments, segments, ones),
                      InterfaceMap('Gamma_minus', 'minus', 'fracture', 'layer_minus', segments, segments, ones))

    mesh = MixedDimMesh(matrix, fracture, layers, maps_M, maps_Gamma, mode, np.array(frac_nodes, dtype=np.int64))
    check_mesh(mesh)
    log.debug('built %s mesh: %d cells, %d faces, %d fracture segments', mode, matrix.num_cells,
              matrix.num_faces, fracture.num_cells)
    return mesh
# end _mixed_mesh


def _lattice_diagonal(endpoints, n):
    """Return the node ids of the lattice diagonal between two endpoints."""
    lattice = []
    for point in endpoints:
        ij = []
        for axis, coord in zip('xy', point):
            scaled = float(coord) * n
            if not (-GEOMETRY_TOL <= coord <= 1 + GEOMETRY_TOL) or abs(scaled - round(scaled)) > 1e-9:
                raise MeshError('fracture endpoint coordinate {:s}={!r} is not on the lattice of spacing {!r}'.format(
                    axis, coord, 1 / n))
            ij.append(int(round(scaled)))
        lattice.append(ij)

    (i0, j0), (i1, j1) = lattice
    di, dj = i1 - i0, j1 - j0
    if di == 0 and dj == 0:
        raise MeshError('fracture endpoints {!r} coincide'.format(tuple(endpoints[0])))
    elif di != dj:
        raise MeshError('fracture {!r} -> {!r} is not parallel to the (1, 1) diagonal'.format(
            tuple(endpoints[0]), tuple(endpoints[1])))
    step = 1 if di > 0 else -1
    return [(j0 + k * step) * (n + 1) + (i0 + k * step) for k in range(abs(di) + 1)]


def build_structured(n_per_unit, fracture_endpoints=((0.1, 0.0), (0.9, 0.8)), inflow='bottom', outflow='top',
                     mode='multilayer'):
    """Build the unit square split into 2 n^2 triangles along the (1, 1) diagonal, slit along the fracture.

    Args:
        n_per_unit (int): Lattice steps per unit length.
        fracture_endpoints (tuple)[((0.1, 0), (0.9, 0.8))]: Lattice points on a (1, 1) diagonal, or None.
        inflow (str)['bottom']: Side tagged inflow.
        outflow (str)['top']: Side tagged outflow. The two remaining sides are no-flow.
        mode (str)['multilayer']: 'multilayer' or 'fracture_only'.
    """
    try:
        n = int(n_per_unit)
    except (TypeError, ValueError):
        raise MeshError('n_per_unit must be a positive integer, got {!r}'.format(n_per_unit)) from None
    if n != n_per_unit or n <= 0:
        raise MeshError('n_per_unit must be a positive integer, got {!r}'.format(n_per_unit))
    for side in (inflow, outflow):
        if side not in SIDES:
            raise MeshError('unknown side {!r}, expected one of {}'.format(side, SIDES))
    if inflow == outflow:
        raise MeshError('inflow and outflow cannot share the {!r} side'.format(inflow))

    ii, jj = np.meshgrid(np.arange(n + 1), np.arange(n + 1))
    nodes = np.column_stack((ii.ravel(), jj.ravel())) / n

    i, j = (arr.ravel() for arr in np.meshgrid(np.arange(n), np.arange(n)))
    a = j * (n + 1) + i
    cells = np.empty((2 * n * n, 3), dtype=np.int64)
    cells[0::2] = np.column_stack((a, a + 1, a + n + 2))
    cells[1::2] = np.column_stack((a, a + n + 2, a + n + 1))

    side_tag = {side: 'inflow' if side == inflow else 'outflow' if side == outflow else 'noflow' for side in SIDES}
    k = np.arange(n)
    sides = {'bottom': (k, k + 1),
             'top': (n * (n + 1) + k, n * (n + 1) + k + 1),
             'left': (k * (n + 1), (k + 1) * (n + 1)),
             'right': (k * (n + 1) + n, (k + 1) * (n + 1) + n)}
    outer_tags = {}
    for side, (first, second) in sides.items():
        for u, v in zip(first.tolist(), second.tolist()):
            outer_tags[(min(u, v), max(u, v))] = side_tag[side]

    frac_nodes = [] if fracture_endpoints is None else _lattice_diagonal(fracture_endpoints, n)
    return _mixed_mesh(nodes, cells, frac_nodes, outer_tags, mode)
# end build_structured


def _merge_slit(coords, plus, minus, labels):
    """Pair pre-slit faces and return the node merge map (minus copy -> plus copy)."""
    def key(face):
        return sorted((round(coords[v][0], 12), round(coords[v][1], 12)) for v in face)

    unmatched = list(minus)
    merge = {}
    for face in plus:
        partner = next((other for other in unmatched if key(other) == key(face)), None)
        if partner is None:
            raise MeshError('slit face {:d} {:d} tagged slit_plus has no slit_minus partner'.format(
                *(labels[v] for v in face)))
        unmatched.remove(partner)
        for v in face:
            twin = next(u for u in partner if np.allclose(coords[u], coords[v], atol=GEOMETRY_TOL, rtol=0))
            if twin != v:
                merge[twin] = v
    if unmatched:
        face = unmatched[0]
        raise MeshError('slit face {:d} {:d} tagged slit_minus has no slit_plus partner'.format(
            *(labels[v] for v in face)))
    return merge


def import_mesh(text, mode='multilayer'):
    """Read a mesh file and return the mixed-dimensional mesh.

    The fracture comes either from ``fracface`` records on an unslit triangulation or from paired
    ``slit_plus``/``slit_minus`` boundary faces of an already slit one.
    """
    records = []
    for lineno, line in enumerate(text.splitlines(), 1):
        fields = line.split('#', 1)[0].split()
        if fields:
            records.append((lineno, fields))
    if not records or records[0][1] != ['mdmesh', '1']:
        raise MeshError("mesh file must start with 'mdmesh 1'")

    index, coords, labels = {}, [], []
    cell_records, bfaces, fracfaces = [], [], []
    for lineno, fields in records[1:]:
        kind = fields[0]
        try:
            if kind == 'node':
                nid = int(fields[1])
                if nid in index:
                    raise MeshError('line {:d}: node {:d} defined twice'.format(lineno, nid))
                index[nid] = len(coords)
                coords.append((float(fields[2]), float(fields[3])))
                labels.append(nid)
            elif kind == 'cell':
                if len(fields) != 5:
                    raise IndexError(kind)
                cell_records.append((int(fields[1]), [int(v) for v in fields[2:5]]))
            elif kind == 'bface':
                if len(fields) != 4:
                    raise IndexError(kind)
                bfaces.append(([int(v) for v in fields[1:3]], fields[3]))
            elif kind == 'fracface':
                if len(fields) != 3:
                    raise IndexError(kind)
                fracfaces.append([int(v) for v in fields[1:3]])
            else:
                raise MeshError('line {:d}: unknown record {!r}'.format(lineno, kind))
        except MeshError:
            raise
        except (IndexError, ValueError) as err:
            raise MeshError('line {:d}: malformed {:s} record'.format(lineno, kind)) from err

    cells = []
    for cid, refs in cell_records:
        missing = [nid for nid in refs if nid not in index]
        if missing:
            raise MeshError('cell {:d} references missing node {:d}'.format(cid, missing[0]))
        corners = np.array([coords[index[nid]] for nid in refs])
        if abs(_cross(corners[1] - corners[0], corners[2] - corners[0])) <= 2 * GEOMETRY_TOL:
            raise MeshError('cell {:d} has zero area'.format(cid))
        cells.append([index[nid] for nid in refs])

    def resolve(refs, what):
        missing = [nid for nid in refs if nid not in index]
        if missing:
            raise MeshError('{:s} {:d} {:d} references missing node {:d}'.format(what, refs[0], refs[1], missing[0]))
        return [index[nid] for nid in refs]

    tagged = []
    for refs, tag in bfaces:
        if tag not in BOUNDARY_TAGS:
            raise MeshError('bface {:d} {:d} has unknown tag {!r}'.format(refs[0], refs[1], tag))
        tagged.append((resolve(refs, 'bface'), tag))
    edges = [resolve(refs, 'fracface') for refs in fracfaces]

    cells = np.array(cells, dtype=np.int64).reshape(-1, 3)
    nodes = np.array(coords, dtype=np.float64).reshape(-1, 2)
    plus = [face for face, tag in tagged if tag == 'slit_plus']
    minus = [face for face, tag in tagged if tag == 'slit_minus']
    plus_cell = None
    if plus or minus:
        merge = _merge_slit(coords, plus, minus, labels)
        rows = np.flatnonzero([set(plus[0]) <= set(row) for row in cells.tolist()]) if plus else []
        plus_cell = int(rows[0]) if len(rows) else None
        keep = [v for v in range(len(nodes)) if v not in merge]
        renumber = {v: k for k, v in enumerate(keep)}
        for twin, v in merge.items():
            renumber[twin] = renumber[v]
        remap = np.vectorize(renumber.get, otypes=[np.int64])
        cells = remap(cells) if cells.size else cells
        nodes = nodes[keep]
        edges = [[renumber[a], renumber[b]] for a, b in plus] + [[renumber[a], renumber[b]] for a, b in edges]
        tagged = [([renumber[a], renumber[b]], tag) for (a, b), tag in tagged if tag in OUTER_TAGS]

    frac_nodes = _order_polyline([tuple(e) for e in edges])
    if plus_cell is not None and len(frac_nodes) >= 2:
        # Orient the polyline so the faces tagged slit_plus stay on the plus side
        a, b = (renumber[v] for v in plus[0])
        k = min(frac_nodes.index(a), frac_nodes.index(b))
        start, stop = nodes[frac_nodes[k]], nodes[frac_nodes[k + 1]]
        normal = np.array([start[1] - stop[1], stop[0] - start[0]])
        if np.dot(nodes[cells[plus_cell]].mean(axis=0) - 0.5 * (start + stop), normal) < 0:
            frac_nodes.reverse()

    outer_tags = {(min(a, b), max(a, b)): tag for (a, b), tag in tagged}
    return _mixed_mesh(nodes, cells, frac_nodes, outer_tags, mode)
# end import_mesh


def export_mesh(mesh):
    """Return the mesh file text of the unslit triangulation with its fracture faces."""
    matrix = mesh.matrix
    origin = matrix.node_origin
    n_original = int(origin.max()) + 1 if len(origin) else 0

    lines = ['mdmesh 1']
    for nid in range(n_original):
        lines.append('node {:d} {:.17g} {:.17g}'.format(nid, *matrix.nodes[nid]))
    for cid, (a, b, c) in enumerate(origin[matrix.cells].tolist()):
        lines.append('cell {:d} {:d} {:d} {:d}'.format(cid, a, b, c))
    for face in matrix.faces_tagged(*OUTER_TAGS):
        a, b = origin[matrix.faces[face]].tolist()
        lines.append('bface {:d} {:d} {:s}'.format(a, b, matrix.boundary_tags[face]))
    frac = mesh.fracture_nodes.tolist()
    for a, b in zip(frac[:-1], frac[1:]):
        lines.append('fracface {:d} {:d}'.format(a, b))
    return '\n'.join(lines) + '\n'
# end export_mesh


def check_mesh(mesh):
    """Validate the structural invariants of a mixed-dimensional mesh.

    Raises:
        MeshError: Naming the first entity that violates an invariant.
    """
    matrix = mesh.matrix
    if np.any(matrix.cell_volumes <= 0):
        raise MeshError('cell {:d} has nonpositive area'.format(int(np.argmin(matrix.cell_volumes))))
    if matrix.num_cells:
        closure = np.sum(matrix.cell_face_signs[..., None] * matrix.face_areas[matrix.cell_faces][..., None] *
                         matrix.face_normals[matrix.cell_faces], axis=1)
        bad = np.flatnonzero(np.abs(closure).max(axis=1) > GEOMETRY_TOL)
        if len(bad):
            raise MeshError('face normals of cell {:d} do not close'.format(int(bad[0])))

    slit_faces = matrix.faces_tagged('slit_plus', 'slit_minus')
    matched = np.concatenate([iface.upper for iface in mesh.maps_M]) if mesh.maps_M else np.zeros(0, int)
    if len(np.unique(matched)) != len(matched) or set(matched.tolist()) != set(slit_faces.tolist()):
        raise MeshError('slit faces are not matched exactly once per side')

    for iface in mesh.maps_M:
        lower = mesh.grid(iface.lower_grid)
        tag = 'slit_' + iface.side
        wrong = np.flatnonzero(matrix.boundary_tags[iface.upper] != tag)
        if len(wrong):
            raise MeshError('{:s} face {:d} is not tagged {:s}'.format(iface.name, int(iface.upper[wrong[0]]), tag))
        gap = np.abs(matrix.face_centroids[iface.upper] - lower.centroids[iface.lower]).max(initial=0)
        if gap > GEOMETRY_TOL:
            raise MeshError('{:s} faces do not coincide with the {:s} segments'.format(iface.name, lower.name))

    if mesh.maps_M:
        plus, minus = mesh.maps_M
        if np.any(plus.upper == minus.upper):
            raise MeshError('slit faces on both sides share a face id')

    for layer in mesh.layers or ():
        if layer.points.shape != mesh.fracture.points.shape or \
                np.abs(layer.points - mesh.fracture.points).max(initial=0) > GEOMETRY_TOL:
            raise MeshError('{:s} does not coincide with the fracture'.format(layer.name))
    return True
# end check_mesh


def jump_average(trace, other, convention='gamma'):
    """Return the jump and average of a scalar across an interface.

    Args:
        trace: Plus-side value for 'gamma', the matrix trace for 'mu_plus' and 'mu_minus'.
        other: Minus-side value for 'gamma', the middle value (fracture pressure) for 'mu_plus' and 'mu_minus'.
        convention (str)['gamma']: 'gamma' gives plus - minus, 'mu_plus' gives trace - other and
            'mu_minus' gives other - trace.

    Returns:
        jump, average
    """
    trace = np.asarray(trace, dtype=np.float64)
    other = np.asarray(other, dtype=np.float64)
    if convention in ('gamma', 'mu_plus'):
        jump = trace - other
    elif convention == 'mu_minus':
        jump = other - trace
    else:
        raise ValueError('unknown jump convention {!r}'.format(convention))
    average = 0.5 * (trace + other)
    if jump.ndim == 0:
        return float(jump), float(average)
    return jump, average
