"""
    stratum.splitting

Sequential time stepping of flow, transport, reaction and geometry.

Each step (t^n, t^n+1) runs, in order:

1. extrapolate the precipitate, w* = 2 w^n - w^n-1
2. predict porosities and aperture from w*
3. update the permeabilities
4. solve the flow with the predicted porosity rate as a source
5. solve advection and diffusion of the solute
6. rescale the precipitate to the predicted capacity
7. react
8. correct porosities and aperture with the reacted precipitate, grow the layers
9. rescale both species to the corrected capacity

The storage coefficient (capacity) of a subdomain is its porosity in the matrix, thickness * porosity in a layer
and the aperture in the fracture. The rescalings keep capacity * concentration unchanged. The precipitate change
of step 8 is taken on the old capacity, so a cell loses porosity in proportion to the amount it precipitates.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .chemistry import ReactionModel, react_step
from .darcy_flow import FlowProperties, FlowState, update_permeability, assemble_and_solve
from .history import LevelBuffer
from .layer_models import LayerInputs, thickness_linear
from .meshkit import build_structured, import_mesh
from .transport import TransportProperties, TransportState, advect_diffuse_step, total_content
from .utils import StepError, annotate_step


__all__ = ['StepError', 'SERIES_COLUMNS', 'Problem', 'SimulationState', 'RunResult', 'build_mesh',
           'initial_state', 'update_fraction', 'extrapolate', 'extrapolate_w', 'predict_geometry', 'correct_fraction',
           'rescale_concentrations', 'advance', 'run']


log = logging.getLogger(__name__)


SERIES_COLUMNS = ('time', 'solute', 'precipitate', 'influx', 'balance_error', 'reaction_clamps',
                  'extrapolation_clamps', 'floor_hits', 'max_thickness_plus', 'max_thickness_minus',
                  'min_aperture', 'min_porosity')

EVENTS = ('reaction_clamps', 'extrapolation_clamps', 'floor_hits')


@dataclass(frozen=True)
class Problem(object):
    """Everything the time loop needs from a scenario, resolved against a mesh."""
    props0: FlowProperties
    transport: dict
    model: ReactionModel
    eta: dict
    delta: float = 0.1
    thickness0: float = 1e-8
    porosity_rate_lag: int = 0
    thickness_feedback: bool = False
    initial_u: dict = field(default_factory=dict)
    initial_w: dict = field(default_factory=dict)

    @classmethod
    def from_config(cls, mesh, config):
        physics, chemistry, boundary = config.physics, config.chemistry, config.boundary
        source = {'matrix': physics.source_matrix, 'fracture': physics.source_fracture}
        eta = {'matrix': physics.eta_matrix, 'fracture': physics.eta_fracture}
        initial_u = {'matrix': chemistry.u_matrix, 'fracture': chemistry.u_fracture}
        initial_w = {'matrix': chemistry.w_matrix, 'fracture': chemistry.w_fracture}
        for layer in mesh.layers or ():
            source[layer.name] = physics.source_layer
            eta[layer.name] = physics.eta_layer
            initial_u[layer.name] = chemistry.u_layer
            initial_w[layer.name] = chemistry.w_layer

        props0 = FlowProperties.uniform(
            mesh, k_matrix=physics.k_matrix, porosity=physics.phi_matrix, k_fracture=physics.k_fracture,
            kn_fracture=physics.kn_fracture, aperture=physics.aperture, k_layer=physics.k_layer,
            kn_layer=physics.kn_layer, layer_porosity=physics.phi_layer, thickness=physics.thickness, source=source,
            p_boundary={'inflow': boundary.p_in, 'outflow': boundary.p_out},
            q_boundary={'noflow': boundary.q_noflow}, p_lower_boundary=boundary.p_fracture,
            permeability_law=physics.permeability_law)
        transport = dict(d_matrix=physics.d_matrix, d_fracture=physics.d_fracture, dn_fracture=physics.dn_fracture,
                         d_layer=physics.d_layer, dn_layer=physics.dn_layer,
                         u_boundary={'inflow': boundary.u_in, 'outflow': boundary.u_out},
                         u_lower_boundary=boundary.u_fracture, upwind_weight=physics.upwind_weight)
        model = ReactionModel(chemistry.reaction, chemistry.lam, chemistry.rate_fn, chemistry.step_function)
        return cls(props0, transport, model, eta, chemistry.delta, physics.thickness, physics.porosity_rate_lag,
                   physics.thickness_feedback, initial_u, initial_w)


@dataclass
class SimulationState(object):
    """Fields at one time level.

    ``fraction`` is the porosity of the matrix and the layers and the aperture of the fracture. ``w_history``
    keeps the two newest precipitate levels of every subdomain.
    """
    mesh: object
    step: int
    time: float
    u: dict
    w_history: dict
    fraction: dict
    fraction_prev: dict
    thickness: dict
    thickness_prev: dict
    flow: FlowState
    transport: TransportState
    events: dict = field(default_factory=lambda: dict.fromkeys(EVENTS, 0))

    @property
    def w(self):
        return {name: buffer.latest() for name, buffer in self.w_history.items()}

    @property
    def w_prev(self):
        return {name: buffer.latest(1) for name, buffer in self.w_history.items()}

    def capacity(self, fraction=None, thickness=None):
        """Return the storage coefficient of every subdomain."""
        fraction = self.fraction if fraction is None else fraction
        thickness = self.thickness if thickness is None else thickness
        return {name: fraction[name] * thickness[name] if name in thickness else fraction[name].copy()
                for name in fraction}

    def copy(self):
        def arrays(values):
            return {name: np.array(value, copy=True) for name, value in values.items()}

        return SimulationState(self.mesh, self.step, self.time, arrays(self.u),
                               {name: buffer.copy() for name, buffer in self.w_history.items()},
                               arrays(self.fraction), arrays(self.fraction_prev), arrays(self.thickness),
                               arrays(self.thickness_prev), self.flow, self.transport, dict(self.events))


class RunResult(NamedTuple):
    series: LevelBuffer
    snapshots: list
    state: SimulationState
    columns: tuple = SERIES_COLUMNS

    def column(self, name):
        return self.series.get_data()[:, self.columns.index(name)]


def build_mesh(config):
    """Return the mesh described by the mesh section of a scenario."""
    section = config.mesh
    if section.generator == 'file':
        path = Path(section.path)
        try:
            text = path.read_text()
        except OSError as err:
            raise FileNotFoundError('cannot read mesh file {}: {}'.format(path, err.strerror or err)) from err
        return import_mesh(text, mode=config.physics.mode)
    return build_structured(section.n_per_unit, (section.fracture_start, section.fracture_end),
                            inflow=section.inflow, outflow=section.outflow, mode=config.physics.mode)


def initial_state(mesh, problem):
    """Return the state at time 0. The precipitate history starts with w^-1 = w^0."""
    u, history, fraction, thickness = {}, {}, {}, {}
    props0 = problem.props0
    for name in mesh.subdomains:
        n = mesh.num_cells(name)
        u[name] = np.full(n, float(problem.initial_u.get(name, 0.0)))
        history[name] = LevelBuffer.seeded(np.full(n, float(problem.initial_w.get(name, 0.0))))
        if name == 'matrix':
            fraction[name] = props0.porosity.copy()
        elif name == 'fracture':
            fraction[name] = props0.aperture.copy()
        else:
            fraction[name] = props0.layer_porosity[name].copy()
            thickness[name] = props0.thickness[name].copy()

    return SimulationState(mesh, 0, 0.0, u, history, fraction, {k: v.copy() for k, v in fraction.items()},
                           thickness, {k: v.copy() for k, v in thickness.items()}, FlowState.zero(mesh),
                           TransportState({k: v.copy() for k, v in u.items()}))


def update_fraction(value, eta, dw, name='matrix'):
    """Return value / (1 + eta dw), the porosity or aperture after a precipitate change dw.

    Raises:
        ValueError: Naming the first cell where the denominator is not positive.
    """
    denominator = 1.0 + eta * np.asarray(dw, dtype=np.float64)
    bad = np.flatnonzero(~(denominator > 0))
    if len(bad):
        raise ValueError('geometry update denominator {!r} is not positive in {:s} cell {:d}'.format(
            float(denominator[bad[0]]), name, int(bad[0])))
    return value / denominator


def rescale_concentrations(fields, capacity_old, capacity_new):
    """Return every field multiplied by capacity_old / capacity_new.

    Raises:
        ValueError: If a capacity is not positive.
    """
    scaled = {}
    for name, values in fields.items():
        if np.any(~(capacity_old[name] > 0)) or np.any(~(capacity_new[name] > 0)):
            raise ValueError('nonpositive capacity in {:s}'.format(name))
        scaled[name] = values * (capacity_old[name] / capacity_new[name])
    return scaled


def extrapolate(w, w_prev):
    """Return 2 w - w_prev clamped at 0 and the number of clamped values."""
    raw = 2 * w - w_prev
    negative = raw < 0
    return np.where(negative, 0.0, raw), int(np.count_nonzero(negative))


def correct_fraction(fraction, eta, w, w_reacted, capacity_old, capacity_star):
    """Return the corrected porosities and aperture.

    ``w_reacted`` lives on the predicted capacity. It is brought back to the old capacity before the change
    against ``w`` is taken.
    """
    corrected = {}
    for name in fraction:
        dw = w_reacted[name] * (capacity_star[name] / capacity_old[name]) - w[name]
        corrected[name] = update_fraction(fraction[name], eta.get(name, 0.0), dw, name)
    return corrected


@annotate_step(1, 'extrapolate precipitate')
def extrapolate_w(state):
    """Return w* = 2 w^n - w^n-1 per subdomain, clamped at 0."""
    w_star = {}
    clamped = 0
    for name, buffer in state.w_history.items():
        w_star[name], count = extrapolate(buffer.latest(), buffer.latest(1))
        clamped += count
    if clamped:
        state.events['extrapolation_clamps'] += clamped
        log.warning('precipitate extrapolation clamped %d negative values at step %d', clamped, state.step)
    return w_star


@annotate_step(2, 'predict geometry')
def predict_geometry(state, w_star, eta):
    """Return the predicted porosities and aperture. Layer thicknesses are not predicted."""
    w = state.w
    return {name: update_fraction(state.fraction[name], eta.get(name, 0.0), w_star[name] - w[name], name)
            for name in state.fraction}


@annotate_step(3, 'update permeability')
def _update_permeability(state, problem, fraction):
    thickness = state.thickness if problem.thickness_feedback else None
    return update_permeability(fraction, problem.props0, thickness=thickness)


@annotate_step(4, 'flow')
def _solve_flow(state, problem, props, fraction, dt):
    mesh = state.mesh
    if problem.porosity_rate_lag:
        rates = {name: (fraction[name] - state.fraction_prev[name]) / (2 * dt) for name in fraction}
    else:
        rates = {name: (fraction[name] - state.fraction[name]) / dt for name in fraction}

    lower_rates = {'fracture': rates['fracture']}
    for layer in mesh.layers or ():
        name = layer.name
        # Same layer thickness as the transport capacity
        lower_rates[name] = state.thickness[name] * rates[name]
        if problem.thickness_feedback:
            lower_rates[name] = lower_rates[name] + \
                state.fraction[name] * (state.thickness[name] - state.thickness_prev[name]) / dt
    return assemble_and_solve(mesh, props, rates['matrix'], lower_rates)


@annotate_step(5, 'transport')
def _transport(state, problem, flow, capacity_old, capacity_star, fraction, dt):
    width = dict(state.thickness, fracture=fraction['fracture'])
    props = TransportProperties(capacity_star, capacity_old, width, **problem.transport)
    return advect_diffuse_step(state.mesh, props, flow, state.u, dt)


@annotate_step(6, 'rescale precipitate')
def _rescale_precipitate(state, capacity_old, capacity_star):
    return rescale_concentrations(state.w, capacity_old, capacity_star)


@annotate_step(7, 'reaction')
def _react(state, model, u, w, dt):
    u_new, w_new = {}, {}
    for name in u:
        u_new[name], w_new[name], clamped = react_step(model, u[name], w[name], dt)
        state.events['reaction_clamps'] += clamped
    return u_new, w_new


@annotate_step(8, 'correct geometry')
def _correct_geometry(state, problem, flow, w_reacted, capacity_old, capacity_star, u_fracture, time):
    """Return the corrected fractions and layer thicknesses."""
    fraction = correct_fraction(state.fraction, problem.eta, state.w, w_reacted, capacity_old, capacity_star)

    thickness = {}
    mesh = state.mesh
    for iface in mesh.maps_Gamma or ():
        name = iface.upper_grid
        old = state.thickness[name]
        Q = np.zeros(len(old))
        Q[iface.upper] = -flow.mortar_flux[iface.name] / mesh.fracture.lengths[iface.lower]
        u_gamma = np.zeros(len(old))
        u_gamma[iface.upper] = u_fracture[iface.lower]
        inputs = LayerInputs(Q=Q, phi=fraction[name], lam=problem.model.lam, delta=problem.delta,
                             u_gamma=u_gamma, t=time)
        predicted = thickness_linear(inputs)
        grown = np.where(Q > 0, np.maximum(old, predicted), old)
        hits = (Q > 0) & (predicted < problem.thickness0)
        state.events['floor_hits'] += int(np.count_nonzero(hits))
        thickness[name] = np.maximum(grown, problem.thickness0)
    return fraction, thickness


@annotate_step(9, 'rescale species')
def _rescale_species(state, u, w, capacity_star, capacity_new):
    return rescale_concentrations(u, capacity_star, capacity_new), rescale_concentrations(w, capacity_star,
                                                                                          capacity_new)


def advance(state, config, dt):
    """Advance the state by one time step.

    Args:
        state (SimulationState): State at t^n. Its event counters are updated in place.
        config (ScenarioConfig/Problem): Scenario or resolved problem.
        dt (float): Time step.

    Returns:
        state (SimulationState): New state at t^n+1.

    Raises:
        StepError: Naming the step and time index of any failure.
    """
    if not dt > 0:
        raise ValueError('time step must be positive, got {!r}'.format(dt))
    problem = config if isinstance(config, Problem) else Problem.from_config(state.mesh, config)
    time = state.time + dt

    w_star = extrapolate_w(state)
    fraction_star = predict_geometry(state, w_star, problem.eta)
    props = _update_permeability(state, problem, fraction_star)
    flow = _solve_flow(state, problem, props, fraction_star, dt)

    capacity_old = state.capacity()
    capacity_star = state.capacity(fraction_star)
    transported = _transport(state, problem, flow, capacity_old, capacity_star, fraction_star, dt)
    w_half = _rescale_precipitate(state, capacity_old, capacity_star)
    u_reacted, w_reacted = _react(state, problem.model, transported.u, w_half, dt)

    fraction_new, thickness_new = _correct_geometry(state, problem, flow, w_reacted, capacity_old, capacity_star,
                                                    transported.u['fracture'], time)
    capacity_new = state.capacity(fraction_new, thickness_new)
    u_new, w_new = _rescale_species(state, u_reacted, w_reacted, capacity_star, capacity_new)

    history = {name: buffer.copy() for name, buffer in state.w_history.items()}
    for name, buffer in history.items():
        buffer.write(w_new[name], error=False)
    return SimulationState(state.mesh, state.step + 1, time, u_new, history, fraction_new,
                           state.fraction, thickness_new, state.thickness, flow, transported, state.events)


def summary_row(state, before=None, dt=0.0):
    """Return the series row of a state. ``before`` is the content at the previous level."""
    mesh = state.mesh
    capacity = state.capacity()
    w = state.w
    solute = total_content(mesh, capacity, state.u)
    precipitate = total_content(mesh, capacity, w)
    influx = -dt * state.transport.boundary_flux if before is not None else 0.0
    error = 0.0
    if before is not None:
        total = solute + precipitate
        error = abs(total - before - influx) / max(1.0, abs(before), abs(total))

    thickness = [float(np.max(state.thickness.get(name, np.zeros(1)), initial=0.0))
                 for name in ('layer_plus', 'layer_minus')]
    return np.array([state.time, solute, precipitate, influx, error,
                     state.events['reaction_clamps'], state.events['extrapolation_clamps'],
                     state.events['floor_hits'], thickness[0], thickness[1],
                     float(np.min(state.fraction['fracture'], initial=np.inf)),
                     float(np.min(state.fraction['matrix'], initial=np.inf))])


def run(config, steps=None, mesh=None):
    """Run a scenario.

    Args:
        config (ScenarioConfig): Scenario.
        steps (int)[None]: Number of steps to take. Defaults to the configured count. The step size is always
            t_final / n_steps.
        mesh (MixedDimMesh)[None]: Mesh. Built from the scenario when None.

    Returns:
        RunResult: series of summary rows (one per level), snapshots at the output interval and the final state.
    """
    mesh = build_mesh(config) if mesh is None else mesh
    problem = Problem.from_config(mesh, config)
    n_steps = config.time.n_steps if steps is None else int(steps)
    dt = config.time.t_final / config.time.n_steps
    interval = max(1, config.output.interval)

    state = initial_state(mesh, problem)
    series = LevelBuffer(n_steps + 1, len(SERIES_COLUMNS))
    series.write(summary_row(state))
    snapshots = [state.copy()]
    log.info('running %s scenario: %d steps of %g on %d cells', mesh.mode, n_steps, dt, mesh.num_dofs)

    for n in range(n_steps):
        before = total_content(mesh, state.capacity(), state.u) + total_content(mesh, state.capacity(), state.w)
        state = advance(state, problem, dt)
        state.time = (n + 1) * dt
        row = summary_row(state, before, dt)
        series.write(row)
        log.debug('step %d: balance error %.3e', state.step, row[SERIES_COLUMNS.index('balance_error')])
        if state.step % interval == 0 or state.step == n_steps:
            snapshots.append(state.copy())
            log.info('t=%g: solute %.6g, precipitate %.6g', state.time, row[1], row[2])

    log.info('finished at t=%g: %d reaction clamps, %d extrapolation clamps, %d thickness floor hits',
             state.time, state.events['reaction_clamps'], state.events['extrapolation_clamps'],
             state.events['floor_hits'])
    return RunResult(series, snapshots, state)
