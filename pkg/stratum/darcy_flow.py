"""
    stratum.darcy_flow

Mixed-dimensional Darcy flow. The matrix uses lowest-order Raviart-Thomas fluxes with cellwise constant
pressures; the fracture and the layers use two-point fluxes along their segments. Every interface carries a
Robin law between the trace of the upper pressure and the pressure in the middle of the crossed lower domain,

    lambda / |cell| = (2 kappa / eps) (p_upper - p_lower)

with (eps, kappa) the width and normal permeability of the lower domain. On the matrix side lambda is the flux
through the slit face itself. Mass balances read dt(phi) + div q + f = 0 in every subdomain.

Unknowns are ordered as: matrix face fluxes, layer to fracture mortar fluxes, then cell pressures in the mesh
subdomain order.
"""
import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve, MatrixRankWarning

from .utils import SolverError
from .transport import tpfa_transmissibility


__all__ = ['SolverError', 'PropertyError', 'PERMEABILITY_LAWS', 'FlowProperties', 'FlowState',
           'update_permeability', 'assemble_and_solve', 'trace_pressure', 'interface_flux_residual',
           'reconstruct_velocity']


log = logging.getLogger(__name__)


RESIDUAL_TOL = 1e-10

PERMEABILITY_LAWS = {
    'quadratic': lambda ratio: ratio ** 2,
    'cubic': lambda ratio: ratio ** 3,
    }


class PropertyError(ValueError):
    """Nonpositive permeability, porosity or width."""


@dataclass
class FlowProperties(object):
    """Material data and boundary conditions of the flow problem.

    Matrix and fracture fields are per-cell arrays. Layer fields are dicts keyed by layer name.
    ``p_boundary`` and ``q_boundary`` map outer boundary tags to a pressure or an outward flux per unit length.
    ``p_lower_boundary`` is the pressure at fracture and layer ends on the domain boundary.
    """
    k_matrix: np.ndarray
    porosity: np.ndarray
    k_fracture: np.ndarray
    kn_fracture: np.ndarray
    aperture: np.ndarray
    k_layer: dict = field(default_factory=dict)
    kn_layer: dict = field(default_factory=dict)
    layer_porosity: dict = field(default_factory=dict)
    thickness: dict = field(default_factory=dict)
    source: dict = field(default_factory=dict)
    p_boundary: dict = field(default_factory=lambda: {'inflow': 1.0, 'outflow': 0.0})
    q_boundary: dict = field(default_factory=lambda: {'noflow': 0.0})
    p_lower_boundary: float = 0.1
    permeability_law: str = 'quadratic'

    @classmethod
    def uniform(cls, mesh, k_matrix=1.0, porosity=0.2, k_fracture=1e2, kn_fracture=1e2, aperture=1e-3,
                k_layer=1.0, kn_layer=1.0, layer_porosity=0.2, thickness=1e-8, **kwargs):
        """Return properties that are constant per subdomain."""
        n_frac = mesh.fracture.num_cells
        layers = [layer.name for layer in mesh.layers or ()]

        def per_layer(value):
            return {name: np.full(n_frac, float(value)) for name in layers}

        return cls(np.full(mesh.matrix.num_cells, float(k_matrix)), np.full(mesh.matrix.num_cells, float(porosity)),
                   np.full(n_frac, float(k_fracture)), np.full(n_frac, float(kn_fracture)),
                   np.full(n_frac, float(aperture)), per_layer(k_layer), per_layer(kn_layer),
                   per_layer(layer_porosity), per_layer(thickness), **kwargs)

    def width(self, name):
        """Return the aperture of the fracture or the thickness of a layer."""
        return self.aperture if name == 'fracture' else self.thickness[name]

    def normal_permeability(self, name):
        return self.kn_fracture if name == 'fracture' else self.kn_layer[name]

    def conductance(self, name):
        """Return the tangential conductance width * k of a lower-dimensional subdomain."""
        if name == 'fracture':
            return self.aperture * self.k_fracture
        return self.thickness[name] * self.k_layer[name]


@dataclass
class FlowState(object):
    """Solved pressures and fluxes.

    ``face_flux`` is the flux through every matrix face along its normal. ``vertex_flux`` holds the flux along
    the polyline direction at every vertex of a 1D grid. ``mortar_flux`` holds the flux from the upper into the
    lower subdomain for every interface cell.
    """
    pressure: dict
    face_flux: np.ndarray
    vertex_flux: dict
    mortar_flux: dict
    residual: float = 0.0

    @classmethod
    def zero(cls, mesh):
        return cls({name: np.zeros(mesh.num_cells(name)) for name in mesh.subdomains},
                   np.zeros(mesh.matrix.num_faces),
                   {name: np.zeros(len(mesh.grid(name).points)) for name in mesh.lower_subdomains},
                   {iface.name: np.zeros(len(iface)) for iface in mesh.interfaces})


def _check_positive(values, what, subdomain):
    values = np.asarray(values)
    bad = np.flatnonzero(~(values > 0))
    if len(bad):
        raise PropertyError('nonpositive {:s} {!r} in {:s} cell {:d}'.format(
            what, float(values[bad[0]]), subdomain, int(bad[0])))


def _check_fraction(values, what, subdomain):
    _check_positive(values, what, subdomain)
    bad = np.flatnonzero(np.asarray(values) > 1)
    if len(bad):
        raise PropertyError('{:s} {!r} above 1 in {:s} cell {:d}'.format(
            what, float(values[bad[0]]), subdomain, int(bad[0])))


def update_permeability(geometry, props0, thickness=None):
    """Return the properties at the given porosities and aperture.

    Matrix and layer permeabilities scale with the configured law of phi / phi0; fracture tangential and normal
    permeabilities scale with (eps / eps0)^2.

    Args:
        geometry (dict): Porosity of the matrix and the layers, aperture of the fracture, keyed by subdomain.
        props0 (FlowProperties): Reference properties.
        thickness (dict)[None]: Layer thicknesses replacing the reference ones.

    Raises:
        PropertyError: If a porosity or aperture is not positive, or a porosity exceeds 1.
    """
    law = PERMEABILITY_LAWS.get(props0.permeability_law)
    if law is None:
        raise PropertyError('unknown permeability law {!r}, expected one of {}'.format(
            props0.permeability_law, tuple(PERMEABILITY_LAWS)))

    phi = np.asarray(geometry['matrix'], dtype=np.float64)
    _check_fraction(phi, 'porosity', 'matrix')
    ratio = phi / props0.porosity
    changes = {'porosity': phi, 'k_matrix': props0.k_matrix * law(ratio)}

    if 'fracture' in geometry:
        eps = np.asarray(geometry['fracture'], dtype=np.float64)
        _check_positive(eps, 'aperture', 'fracture')
        scale = (eps / props0.aperture) ** 2
        changes.update(aperture=eps, k_fracture=props0.k_fracture * scale, kn_fracture=props0.kn_fracture * scale)

    k_layer, kn_layer, layer_porosity = dict(props0.k_layer), dict(props0.kn_layer), dict(props0.layer_porosity)
    for name in props0.layer_porosity:
        if name not in geometry:
            continue
        phi = np.asarray(geometry[name], dtype=np.float64)
        _check_fraction(phi, 'porosity', name)
        scale = law(phi / props0.layer_porosity[name])
        k_layer[name] = props0.k_layer[name] * scale
        kn_layer[name] = props0.kn_layer[name] * scale
        layer_porosity[name] = phi
    changes.update(k_layer=k_layer, kn_layer=kn_layer, layer_porosity=layer_porosity)

    if thickness is not None:
        for name, values in thickness.items():
            _check_positive(values, 'thickness', name)
        changes['thickness'] = {name: np.asarray(values, dtype=np.float64) for name, values in thickness.items()}
    return replace(props0, **changes)


def _validate(mesh, props):
    _check_positive(props.k_matrix, 'permeability', 'matrix')
    if mesh.fracture.num_cells:
        for what, values in (('permeability', props.k_fracture), ('normal permeability', props.kn_fracture),
                             ('aperture', props.aperture)):
            _check_positive(values, what, 'fracture')
    for layer in mesh.layers or ():
        for what, values in (('permeability', props.k_layer[layer.name]),
                             ('normal permeability', props.kn_layer[layer.name]),
                             ('thickness', props.thickness[layer.name])):
            _check_positive(values, what, layer.name)

    tags = set(mesh.matrix.boundary_tags[mesh.matrix.faces_tagged('inflow', 'outflow', 'noflow')].tolist())
    both = set(props.p_boundary) & set(props.q_boundary)
    if both:
        raise PropertyError('boundary tags {} carry both a pressure and a flux condition'.format(sorted(both)))
    missing = tags - set(props.p_boundary) - set(props.q_boundary)
    if missing:
        raise PropertyError('boundary tags {} carry no condition'.format(sorted(missing)))


def rt0_mass(matrix, k_matrix):
    """Return the (cells, 3, 3) local Raviart-Thomas mass matrices scaled by 1 / k, unsigned."""
    corners = matrix.nodes[matrix.cells]
    mids = 0.5 * (corners[:, [1, 2, 0]] + corners[:, [2, 0, 1]])
    D = mids[:, :, None, :] - corners[:, None, :, :]
    return np.einsum('caid,cajd->cij', D, D) / (12 * matrix.cell_volumes * k_matrix)[:, None, None]


def _lower_links(grid, conductance):
    """Return the internal vertex transmissibilities and the boundary end transmissibilities of a 1D grid."""
    half = 0.5 * grid.lengths
    inner = tpfa_transmissibility(conductance[:-1], conductance[1:], half[:-1], half[1:])
    ends = [(end, cell, conductance[cell] / half[cell])
            for end, cell in ((0, 0), (-1, grid.num_cells - 1)) if grid.is_boundary_end(end)]
    return inner, ends


def _split(vector, mesh, start):
    return {name: vector[start + lo:start + hi].copy() for name, (lo, hi) in mesh.offsets().items()}


def _rates(mesh, porosity_rate, aperture_rate):
    rates = {'matrix': np.zeros(mesh.matrix.num_cells) if porosity_rate is None else
             np.asarray(porosity_rate, dtype=np.float64)}
    if aperture_rate is None:
        aperture_rate = {}
    elif not isinstance(aperture_rate, dict):
        aperture_rate = {'fracture': aperture_rate}
    for name in mesh.lower_subdomains:
        rates[name] = np.asarray(aperture_rate.get(name, np.zeros(mesh.num_cells(name))), dtype=np.float64)
    return rates


def assemble_and_solve(mesh, props, porosity_rate=None, aperture_rate=None):
    """Assemble and solve the mixed-dimensional Darcy problem.

    Args:
        mesh (MixedDimMesh): Mesh.
        props (FlowProperties): Material data and boundary conditions.
        porosity_rate (np.ndarray)[None]: Time derivative of the matrix porosity per cell.
        aperture_rate (dict/np.ndarray)[None]: Time derivative of the storage of every lower subdomain
            (aperture for the fracture, thickness * porosity for the layers). A bare array is the fracture.

    Returns:
        FlowState

    Raises:
        SolverError: If no pressure condition exists, the system is singular or the residual is too large.
        PropertyError: If the properties are invalid for the mesh.
    """
    _validate(mesh, props)
    matrix = mesh.matrix
    nf = matrix.num_faces
    gammas = mesh.maps_Gamma or ()
    mortar_start = {}
    n_mortar = 0
    for iface in gammas:
        mortar_start[iface.name] = nf + n_mortar
        n_mortar += len(iface)
    p_start = nf + n_mortar
    offsets = {name: (lo + p_start, hi + p_start) for name, (lo, hi) in mesh.offsets().items()}
    size = p_start + mesh.num_dofs

    rows, cols, vals = [], [], []
    rhs = np.zeros(size)

    def add(r, c, v):
        r, c, v = np.broadcast_arrays(np.asarray(r, dtype=np.int64), np.asarray(c, dtype=np.int64),
                                      np.asarray(v, dtype=np.float64))
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(v.ravel())

    # Matrix mass and divergence blocks
    cf = matrix.cell_faces
    signs = matrix.cell_face_signs
    nc = matrix.num_cells
    mass = signs[:, :, None] * signs[:, None, :] * rt0_mass(matrix, props.k_matrix)
    cells = np.arange(nc) + offsets['matrix'][0]
    add(np.repeat(cf, 3, axis=1), np.tile(cf, 3), mass.reshape(nc, 9))
    add(cf, np.repeat(cells[:, None], 3, axis=1), -signs)
    add(np.repeat(cells[:, None], 3, axis=1), cf, -signs)

    rates = _rates(mesh, porosity_rate, aperture_rate)
    source = props.source
    rhs[cells] = matrix.cell_volumes * (rates['matrix'] + source.get('matrix', 0.0))

    # Outer boundary: pressure faces in the rhs, flux faces replace their row
    tags = matrix.boundary_tags
    dirichlet = np.flatnonzero(np.isin(tags, list(props.p_boundary)))
    rhs[dirichlet] = -np.array([props.p_boundary[t] for t in tags[dirichlet]], dtype=np.float64)
    neumann = np.flatnonzero(np.isin(tags, list(props.q_boundary)))
    n_pressure = len(dirichlet)

    # Matrix to lower-dimensional coupling through the slit faces
    for iface in mesh.maps_M:
        faces = iface.upper
        lower = iface.lower + offsets[iface.lower_grid][0]
        eps = props.width(iface.lower_grid)[iface.lower]
        kappa = props.normal_permeability(iface.lower_grid)[iface.lower]
        add(faces, faces, eps / (2 * kappa * matrix.face_areas[faces]))
        add(faces, lower, 1.0)
        add(lower, faces, 1.0)

    # Layer to fracture mortars
    for iface in gammas:
        idx = mortar_start[iface.name] + np.arange(len(iface))
        upper = iface.upper + offsets[iface.upper_grid][0]
        lower = iface.lower + offsets[iface.lower_grid][0]
        eps = props.aperture[iface.lower]
        kappa = props.kn_fracture[iface.lower]
        add(idx, idx, eps / (2 * kappa * mesh.fracture.lengths[iface.lower]))
        add(idx, upper, -1.0)
        add(idx, lower, 1.0)
        add(upper, idx, -1.0)
        add(lower, idx, 1.0)

    # One-dimensional Darcy, rows negated
    links = {}
    for name in mesh.lower_subdomains:
        grid = mesh.grid(name)
        if grid.num_cells == 0:
            continue
        start = offsets[name][0]
        inner, ends = _lower_links(grid, props.conductance(name))
        a = np.arange(grid.num_cells - 1) + start
        add(np.concatenate((a, a, a + 1, a + 1)), np.concatenate((a, a + 1, a, a + 1)),
            np.concatenate((-inner, inner, inner, -inner)))
        for _, cell, trans in ends:
            add(start + cell, start + cell, -trans)
            rhs[start + cell] -= trans * props.p_lower_boundary
            n_pressure += 1
        rhs[start:start + grid.num_cells] += grid.lengths * (rates[name] + source.get(name, 0.0))
        links[name] = (inner, ends)

    if n_pressure == 0:
        raise SolverError('no pressure condition: every boundary of the problem carries a flux condition')

    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size))
    if len(neumann):
        A = _replace_rows(A.tocsr(), neumann)
        rhs[neumann] = np.array([props.q_boundary[t] for t in tags[neumann]], dtype=np.float64) * \
            matrix.face_areas[neumann]
    A = A.tocsr()

    with warnings.catch_warnings():
        warnings.simplefilter('error', MatrixRankWarning)
        try:
            x = spsolve(A, rhs)
        except MatrixRankWarning:
            raise SolverError('flow system is singular: check that a pressure condition reaches every '
                              'subdomain') from None
    if not np.all(np.isfinite(x)):
        raise SolverError('flow solve produced non-finite values: the system is singular')

    residual = float(np.max(np.abs(A @ x - rhs), initial=0.0))
    scale = max(1.0, float(np.max(np.abs(rhs), initial=0.0)), float(abs(A).sum(axis=1).max()) *
                float(np.max(np.abs(x), initial=0.0)))
    if residual > RESIDUAL_TOL * scale:
        raise SolverError('flow residual {:.3e} above tolerance {:.1e}'.format(residual, RESIDUAL_TOL * scale))
    log.debug('flow solve: %d unknowns, %d nonzeros, residual %.3e', size, A.nnz, residual)

    face_flux = x[:nf].copy()
    pressure = _split(x, mesh, p_start)
    mortar_flux = {iface.name: face_flux[iface.upper].copy() for iface in mesh.maps_M}
    for iface in gammas:
        start = mortar_start[iface.name]
        mortar_flux[iface.name] = x[start:start + len(iface)].copy()

    vertex_flux = {}
    for name in mesh.lower_subdomains:
        grid = mesh.grid(name)
        flux = np.zeros(len(grid.points))
        if name in links:
            inner, ends = links[name]
            p = pressure[name]
            flux[1:-1] = inner * (p[:-1] - p[1:])
            for end, cell, trans in ends:
                flux[end] = trans * (props.p_lower_boundary - p[cell]) if end == 0 else \
                    trans * (p[cell] - props.p_lower_boundary)
        vertex_flux[name] = flux
    return FlowState(pressure, face_flux, vertex_flux, mortar_flux, residual)


def _replace_rows(A, rows):
    """Return A with the given rows replaced by identity rows."""
    keep = np.ones(A.shape[0])
    keep[rows] = 0.0
    identity = np.zeros(A.shape[0])
    identity[rows] = 1.0
    return sp.diags(keep) @ A + sp.diags(identity)


def trace_pressure(mesh, props, state):
    """Return the matrix pressure trace on every boundary face, nan on interior faces."""
    matrix = mesh.matrix
    mass = rt0_mass(matrix, props.k_matrix)
    signs = matrix.cell_face_signs
    fluxes = signs * state.face_flux[matrix.cell_faces]
    local = state.pressure['matrix'][:, None] - np.einsum('cij,cj->ci', mass, fluxes)

    trace = np.full(matrix.num_faces, np.nan)
    boundary = signs > 0
    owners = matrix.face_cells[matrix.cell_faces, 1] < 0
    trace[matrix.cell_faces[boundary & owners]] = local[boundary & owners]
    return trace


def interface_flux_residual(state, props, mesh):
    """Return the residuals of the interface conditions per interface.

    Column 0 is the normal law eps / (2 kappa |cell|) lambda - (p_upper - p_lower). Column 1 is the
    continuity between the slit face flux and the mortar flux, 0 on layer to fracture interfaces.
    """
    trace = trace_pressure(mesh, props, state)
    residuals = {}
    for iface in mesh.interfaces:
        lower = mesh.grid(iface.lower_grid)
        eps = props.width(iface.lower_grid)[iface.lower]
        kappa = props.normal_permeability(iface.lower_grid)[iface.lower]
        flux = state.mortar_flux[iface.name]
        p_lower = state.pressure[iface.lower_grid][iface.lower]
        if iface.upper_grid == 'matrix':
            measure = mesh.matrix.face_areas[iface.upper]
            p_upper = trace[iface.upper]
            continuity = state.face_flux[iface.upper] - flux
        else:
            measure = lower.lengths[iface.lower]
            p_upper = state.pressure[iface.upper_grid][iface.upper]
            continuity = np.zeros(len(iface))
        law = eps / (2 * kappa * measure) * flux - (p_upper - p_lower)
        residuals[iface.name] = np.column_stack((law, continuity))
    return residuals


def reconstruct_velocity(mesh, state):
    """Return the Darcy velocity at every matrix cell centroid from the face fluxes."""
    matrix = mesh.matrix
    corners = matrix.nodes[matrix.cells]
    fluxes = matrix.cell_face_signs * state.face_flux[matrix.cell_faces]
    arms = matrix.cell_centroids[:, None, :] - corners
    return np.einsum('ci,cid->cd', fluxes, arms) / (2 * matrix.cell_volumes)[:, None]
