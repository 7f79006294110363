"""
    stratum.transport

Implicit Euler finite volumes for the advection-diffusion part of the solute equation on the
mixed-dimensional mesh.

Every connection between two cells (matrix face, 1D vertex or mortar cell) carries the total flux

    chi = F+ (w u_a + (1 - w) u_b) + F- (w u_b + (1 - w) u_a) + T (u_a - u_b)

from cell ``a`` to cell ``b``, with F the Darcy flux a -> b, w the upwind weight and T the two-point
transmissibility of capacity * diffusivity. Mortar connections run from the upper subdomain into the lower one.
"""
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve, MatrixRankWarning

from .utils import SolverError


__all__ = ['TransportProperties', 'TransportState', 'tpfa_transmissibility', 'advect_diffuse_step',
           'total_content']


log = logging.getLogger(__name__)


def tpfa_transmissibility(k1, k2, d1, d2, area=1.0):
    """Return the two-point transmissibility area / (d1 / k1 + d2 / k2).

    Args:
        k1 (float/np.ndarray): Conductivity on the first side.
        k2 (float/np.ndarray): Conductivity on the second side.
        d1 (float/np.ndarray): Centroid to face distance on the first side.
        d2 (float/np.ndarray): Centroid to face distance on the second side.
        area (float/np.ndarray)[1]: Face measure.

    Returns:
        transmissibility (float/np.ndarray): 0 where either conductivity is 0.

    Raises:
        ValueError: If a distance is not positive or a conductivity is negative.
    """
    k1, k2, d1, d2, area = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (k1, k2, d1, d2, area)))
    if np.any(d1 <= 0) or np.any(d2 <= 0):
        raise ValueError('two-point distances must be positive')
    elif np.any(k1 < 0) or np.any(k2 < 0):
        raise ValueError('two-point conductivities must be >= 0')

    blocked = (k1 == 0) | (k2 == 0)
    resistance = d1 / np.where(blocked, 1.0, k1) + d2 / np.where(blocked, 1.0, k2)
    trans = np.where(blocked, 0.0, area / resistance)
    return float(trans) if trans.ndim == 0 else trans


@dataclass
class TransportProperties(object):
    """Diffusivities, boundary data and capacities of the transport step.

    ``capacity`` holds the storage coefficient of every subdomain at the new level (porosity in the matrix,
    thickness * porosity in the layers, aperture in the fracture) and ``capacity_old`` at the old level.
    ``width`` holds the aperture and layer thicknesses used as normal distances on the mortars.
    """
    capacity: dict
    capacity_old: dict = None
    width: dict = None
    d_matrix: float = 1e-8
    d_fracture: float = 1e-6
    dn_fracture: float = 1e-6
    d_layer: float = 1e-6
    dn_layer: float = 1e-6
    u_boundary: dict = field(default_factory=lambda: {'inflow': 2.0, 'outflow': 0.0})
    u_lower_boundary: float = 2.0
    upwind_weight: float = 1.0

    def __post_init__(self):
        if self.capacity_old is None:
            self.capacity_old = self.capacity
        if not 0.5 <= self.upwind_weight <= 1:
            raise ValueError('upwind weight must lie in [0.5, 1], got {!r}'.format(self.upwind_weight))
        for name in ('d_matrix', 'd_fracture', 'dn_fracture', 'd_layer', 'dn_layer'):
            if getattr(self, name) < 0:
                raise ValueError('{:s} must be >= 0, got {!r}'.format(name, getattr(self, name)))

    def tangential(self, name):
        """Return the tangential diffusivity of a subdomain."""
        return {'matrix': self.d_matrix, 'fracture': self.d_fracture}.get(name, self.d_layer)

    def normal(self, name):
        """Return the normal diffusivity of a lower-dimensional subdomain."""
        return self.dn_fracture if name == 'fracture' else self.dn_layer


@dataclass
class TransportState(object):
    """Solute per subdomain, total mortar flux per interface and the net outward boundary rate."""
    u: dict
    chi_Gamma: dict = field(default_factory=dict)
    boundary_flux: float = 0.0

    @classmethod
    def uniform(cls, mesh, value=0.0):
        return cls({name: np.full(mesh.num_cells(name), float(value)) for name in mesh.subdomains})


def total_content(mesh, capacity, u):
    """Return the sum of capacity * measure * u over every subdomain."""
    return float(sum(np.dot(capacity[name] * mesh.cell_measures(name), u[name]) for name in mesh.subdomains))


class _System(object):
    """COO triplets and right-hand side of the transport system."""

    def __init__(self, size):
        self.rows, self.cols, self.vals = [], [], []
        self.rhs = np.zeros(size)

    def add(self, rows, cols, vals):
        self.rows.append(np.asarray(rows, dtype=np.int64))
        self.cols.append(np.asarray(cols, dtype=np.int64))
        self.vals.append(np.asarray(vals, dtype=np.float64))

    def connect(self, a, b, flux, trans, weight):
        plus = np.maximum(flux, 0.0)
        minus = np.minimum(flux, 0.0)
        ca = weight * plus + (1 - weight) * minus + trans
        cb = (1 - weight) * plus + weight * minus - trans
        self.add(np.concatenate((a, a, b, b)), np.concatenate((a, b, a, b)), np.concatenate((ca, cb, -ca, -cb)))

    def boundary(self, a, outflow, trans, value):
        """Dirichlet data ``value`` (nan for a flux condition) on outward fluxes ``outflow`` of cells ``a``."""
        dirichlet = ~np.isnan(value)
        value = np.where(dirichlet, value, 0.0)
        trans = np.where(dirichlet, trans, 0.0)
        self.add(a, a, np.maximum(outflow, 0.0) + trans)
        np.add.at(self.rhs, a, np.where(dirichlet, trans - np.minimum(outflow, 0.0), 0.0) * value)

    def matrix(self):
        size = len(self.rhs)
        return sp.coo_matrix((np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
                             shape=(size, size)).tocsr()


def _chi(u_a, u_b, flux, trans, weight):
    plus = np.maximum(flux, 0.0)
    minus = np.minimum(flux, 0.0)
    return plus * (weight * u_a + (1 - weight) * u_b) + minus * (weight * u_b + (1 - weight) * u_a) + \
        trans * (u_a - u_b)


def _boundary_chi(u_a, outflow, trans, value):
    dirichlet = ~np.isnan(value)
    value = np.where(dirichlet, value, 0.0)
    return np.maximum(outflow, 0.0) * u_a + np.where(dirichlet, np.minimum(outflow, 0.0) * value +
                                                     trans * (u_a - value), 0.0)


def _matrix_terms(mesh, props, flow, offsets):
    """Return the face connections and outer boundary terms of the matrix."""
    matrix = mesh.matrix
    start = offsets['matrix'][0]
    conductivity = props.capacity['matrix'] * props.d_matrix
    face_cells = matrix.face_cells

    interior = np.flatnonzero(face_cells[:, 1] >= 0)
    a, b = face_cells[interior, 0], face_cells[interior, 1]
    x_f = matrix.face_centroids[interior]
    n = matrix.face_normals[interior]
    d_a = np.abs(np.einsum('ij,ij->i', x_f - matrix.cell_centroids[a], n))
    d_b = np.abs(np.einsum('ij,ij->i', x_f - matrix.cell_centroids[b], n))
    trans = tpfa_transmissibility(conductivity[a], conductivity[b], d_a, d_b, matrix.face_areas[interior])
    connections = [(a + start, b + start, flow.face_flux[interior], trans)]

    outer = np.flatnonzero((face_cells[:, 1] < 0) & ~np.isin(matrix.boundary_tags, ('slit_plus', 'slit_minus')))
    a = face_cells[outer, 0]
    d_a = np.abs(np.einsum('ij,ij->i', matrix.face_centroids[outer] - matrix.cell_centroids[a],
                           matrix.face_normals[outer]))
    trans = conductivity[a] * matrix.face_areas[outer] / d_a
    value = np.array([props.u_boundary.get(tag, np.nan) for tag in matrix.boundary_tags[outer]], dtype=np.float64)
    boundary = [(a + start, flow.face_flux[outer], trans, value)]
    return connections, boundary


def _lower_terms(mesh, props, flow, offsets):
    """Return the vertex connections and boundary ends of every 1D grid."""
    connections, boundary = [], []
    for name in mesh.lower_subdomains:
        grid = mesh.grid(name)
        if grid.num_cells == 0:
            continue
        start = offsets[name][0]
        conductivity = props.capacity[name] * props.tangential(name)
        half = 0.5 * grid.lengths
        vertex_flux = flow.vertex_flux[name]

        a = np.arange(grid.num_cells - 1)
        trans = tpfa_transmissibility(conductivity[:-1], conductivity[1:], half[:-1], half[1:])
        connections.append((a + start, a + 1 + start, vertex_flux[1:-1], trans))

        for end, cell, outflow in ((0, 0, -vertex_flux[0]), (-1, grid.num_cells - 1, vertex_flux[-1])):
            if grid.is_boundary_end(end):
                trans = conductivity[cell] / half[cell]
                boundary.append((np.array([cell + start]), np.array([outflow]), np.array([trans]),
                                 np.array([props.u_lower_boundary])))
    return connections, boundary


def _mortar_terms(mesh, props, flow, offsets):
    """Return the upper -> lower connections of every interface, keyed by interface name."""
    matrix = mesh.matrix
    terms = {}
    for iface in mesh.interfaces:
        lower = mesh.grid(iface.lower_grid)
        lower_cells = iface.lower + offsets[iface.lower_grid][0]
        lower_half = 0.5 * props.width[iface.lower_grid][iface.lower]
        normal = props.normal(iface.lower_grid)
        if iface.upper_grid == 'matrix':
            cells = matrix.face_cells[iface.upper, 0]
            d_upper = np.abs(np.einsum('ij,ij->i', matrix.face_centroids[iface.upper] - matrix.cell_centroids[cells],
                                       matrix.face_normals[iface.upper]))
            upper_cond = props.capacity['matrix'][cells] * props.d_matrix
            upper_cells = cells + offsets['matrix'][0]
            area = matrix.face_areas[iface.upper]
        else:
            upper_cond = np.full(len(iface), props.normal(iface.upper_grid))
            d_upper = 0.5 * props.width[iface.upper_grid][iface.upper]
            upper_cells = iface.upper + offsets[iface.upper_grid][0]
            area = lower.lengths[iface.lower]
        trans = tpfa_transmissibility(upper_cond, normal, d_upper, lower_half, area)
        terms[iface.name] = (upper_cells, lower_cells, flow.mortar_flux[iface.name], trans)
    return terms


def advect_diffuse_step(mesh, props, flow, u_old, dt):
    """Advance the solute by one implicit Euler step of advection and diffusion.

    Args:
        mesh (MixedDimMesh): Mesh the flow was solved on.
        props (TransportProperties): Capacities, diffusivities and boundary data.
        flow (FlowState): Darcy fluxes.
        u_old (TransportState/dict): Solute at the old level.
        dt (float): Time step.

    Returns:
        TransportState: Solute at the new level, mortar fluxes and the net outward boundary rate.
    """
    if not dt > 0:
        raise ValueError('transport time step must be positive, got {!r}'.format(dt))
    u_old = u_old.u if isinstance(u_old, TransportState) else u_old
    if set(u_old) != set(mesh.subdomains) or set(flow.pressure) != set(mesh.subdomains):
        raise ValueError('fields for {} do not match the {:s} mesh {}'.format(
            sorted(u_old), mesh.mode, mesh.subdomains))
    for name in mesh.subdomains:
        if len(u_old[name]) != mesh.num_cells(name):
            raise ValueError('{:s} field has {:d} values for {:d} cells'.format(
                name, len(u_old[name]), mesh.num_cells(name)))
        elif np.any(props.capacity[name] <= 0) or np.any(props.capacity_old[name] <= 0):
            raise ValueError('{:s} capacity must be positive'.format(name))

    offsets = mesh.offsets()
    weight = props.upwind_weight
    system = _System(mesh.num_dofs)
    for name in mesh.subdomains:
        start, stop = offsets[name]
        measure = mesh.cell_measures(name)
        idx = np.arange(start, stop)
        system.add(idx, idx, props.capacity[name] * measure / dt)
        system.rhs[start:stop] += props.capacity_old[name] * measure * u_old[name] / dt

    connections, boundary = _matrix_terms(mesh, props, flow, offsets)
    lower_connections, lower_boundary = _lower_terms(mesh, props, flow, offsets)
    mortars = _mortar_terms(mesh, props, flow, offsets)
    for a, b, flux, trans in connections + lower_connections + list(mortars.values()):
        system.connect(a, b, flux, trans, weight)
    for a, outflow, trans, value in boundary + lower_boundary:
        system.boundary(a, outflow, trans, value)

    with warnings.catch_warnings():
        warnings.simplefilter('error', MatrixRankWarning)
        try:
            x = spsolve(system.matrix(), system.rhs)
        except MatrixRankWarning:
            raise SolverError('transport system is singular: check capacities and boundary data') from None
    if not np.all(np.isfinite(x)):
        raise SolverError('transport solve produced non-finite values')

    scale = max(1.0, float(np.max(np.abs(x), initial=0.0)))
    tiny = (x < 0) & (x > -1e-12 * scale)
    x[tiny] = 0.0

    outward = sum(float(np.sum(_boundary_chi(x[a], outflow, trans, value)))
                  for a, outflow, trans, value in boundary + lower_boundary)
    chi = {name: _chi(x[a], x[b], flux, trans, weight) for name, (a, b, flux, trans) in mortars.items()}
    u_new = {name: x[start:stop].copy() for name, (start, stop) in offsets.items()}
    log.debug('transport step: %d unknowns, outward rate %.6e, %d tiny negatives cleared',
              mesh.num_dofs, outward, int(np.count_nonzero(tiny)))
    return TransportState(u_new, chi, outward)
