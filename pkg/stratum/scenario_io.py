"""
    stratum.scenario_io

Scenario files, line sampling, field export and the command line.

A scenario is INI text with the sections mesh, physics, chemistry, boundary, time and output. Every key has a
default, so an empty file is the common 2D data set.
"""
import argparse
import configparser
import io
import logging
import os
import sys
from pathlib import Path
from typing import Literal, NamedTuple, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .chemistry import KINDS, RATE_FUNCTIONS, STEP_FUNCTIONS, ReactionModel
from .convergence import SUITES, format_study
from .darcy_flow import PERMEABILITY_LAWS, reconstruct_velocity
from .layer_models import LayerInputs, thickness_linear, thickness_nonlinear_steady, oracle_1d
from .meshkit import MODES, SIDES
from .splitting import SERIES_COLUMNS, build_mesh, run


__all__ = ['ConfigError', 'MeshSection', 'PhysicsSection', 'ChemistrySection', 'BoundarySection', 'TimeSection',
           'OutputSection', 'ScenarioConfig', 'parse_config', 'serialize_config', 'load_config', 'scenario_path',
           'LineProfile', 'sample_line', 'export_fields', 'write_summary', 'write_outputs', 'output_directory',
           'cli', 'main']


log = logging.getLogger(__name__)


OUTPUT_ENV = 'STRATUM_OUTPUT_DIR'
SCENARIO_DIR = Path(__file__).resolve().parent / 'scenarios'
PROFILE_COLUMNS = ('arc_length', 'x', 'y', 'subdomain', 'value')


class ConfigError(ValueError):
    """Invalid scenario. ``problems`` lists every problem found."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__('invalid scenario:\n' + '\n'.join('  - ' + p for p in self.problems))


# ========== Sections ==========
def _split_numbers(text):
    return text.replace(',', ' ').split()


class Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid', populate_by_name=True)


class MeshSection(Section):
    generator: Literal['structured', 'file'] = 'structured'
    path: str = ''
    n_per_unit: int = Field(20, ge=1)
    fracture_start: Tuple[float, float] = (0.1, 0.0)
    fracture_end: Tuple[float, float] = (0.9, 0.8)
    inflow: Literal[SIDES] = 'bottom'
    outflow: Literal[SIDES] = 'top'

    @field_validator('fracture_start', 'fracture_end', mode='before')
    @classmethod
    def _point(cls, value):
        return _split_numbers(value) if isinstance(value, str) else value

    @model_validator(mode='after')
    def _check_sides(self):
        if self.generator == 'file' and not self.path:
            raise ValueError('path is required when generator = file')
        elif self.inflow == self.outflow:
            raise ValueError('inflow and outflow must differ')
        return self


class PhysicsSection(Section):
    mode: Literal[MODES] = 'multilayer'
    phi_matrix: float = Field(0.2, gt=0, le=1)
    phi_layer: float = Field(0.2, gt=0, le=1)
    aperture: float = Field(1e-3, gt=0)
    thickness: float = Field(1e-8, gt=0)
    k_matrix: float = Field(1.0, gt=0)
    k_fracture: float = Field(1e2, gt=0)
    kn_fracture: float = Field(1e2, gt=0)
    k_layer: float = Field(1.0, gt=0)
    kn_layer: float = Field(1.0, gt=0)
    d_matrix: float = Field(1e-8, ge=0)
    d_layer: float = Field(1e-6, ge=0)
    dn_layer: float = Field(1e-6, ge=0)
    d_fracture: float = Field(1e-6, ge=0)
    dn_fracture: float = Field(1e-6, ge=0)
    eta_matrix: float = Field(0.0, allow_inf_nan=False)
    eta_layer: float = Field(0.0, allow_inf_nan=False)
    eta_fracture: float = Field(0.0, allow_inf_nan=False)
    source_matrix: float = 0.0
    source_layer: float = 0.0
    source_fracture: float = 0.0
    permeability_law: Literal[tuple(PERMEABILITY_LAWS)] = 'quadratic'
    upwind_weight: float = Field(1.0, ge=0.5, le=1)
    porosity_rate_lag: int = Field(0, ge=0, le=1)
    thickness_feedback: bool = False


class ChemistrySection(Section):
    reaction: Literal[KINDS] = 'linear'
    lam: float = Field(100.0, ge=0, alias='lambda')
    rate_fn: Literal[tuple(RATE_FUNCTIONS)] = 'identity'
    step_function: Literal[tuple(STEP_FUNCTIONS)] = 'step'
    delta: float = Field(0.1, gt=0)
    u_matrix: float = Field(0.0, ge=0)
    u_layer: float = Field(0.0, ge=0)
    u_fracture: float = Field(0.0, ge=0)
    w_matrix: float = Field(0.0, ge=0)
    w_layer: float = Field(0.0, ge=0)
    w_fracture: float = Field(0.0, ge=0)


class BoundarySection(Section):
    p_in: float = 1.0
    p_out: float = 0.0
    p_fracture: float = 0.1
    u_in: float = 2.0
    u_out: float = 0.0
    u_fracture: float = 2.0
    q_noflow: float = 0.0


class TimeSection(Section):
    t_final: float = Field(0.2, gt=0)
    n_steps: int = Field(100, ge=1)


class OutputSection(Section):
    interval: int = Field(10, ge=1)
    directory: str = 'output'
    profile_lines: Tuple[Tuple[float, float, float, float], ...] = ((0.0, 1.0, 1.0, 0.0),
                                                                      (0.3656, 1.3293, 1.3658, 0.3293))
    profile_samples: int = Field(400, ge=2)
    vtk: bool = True

    @field_validator('profile_lines', mode='before')
    @classmethod
    def _lines(cls, value):
        if isinstance(value, str):
            return [_split_numbers(chunk) for chunk in value.split(';') if chunk.strip()]
        return value


class ScenarioConfig(Section):
    mesh: MeshSection = Field(default_factory=MeshSection)
    physics: PhysicsSection = Field(default_factory=PhysicsSection)
    chemistry: ChemistrySection = Field(default_factory=ChemistrySection)
    boundary: BoundarySection = Field(default_factory=BoundarySection)
    time: TimeSection = Field(default_factory=TimeSection)
    output: OutputSection = Field(default_factory=OutputSection)


def _format(value):
    if isinstance(value, bool):
        return 'true' if value else 'false'
    elif isinstance(value, float):
        return repr(value)
    elif isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return '; '.join(' '.join(repr(v) for v in line) for line in value)
        return ', '.join(repr(v) for v in value)
    return str(value)


def _problems(err):
    """Return one message per pydantic error: 'unknown section [s]', 'unknown key s.k' or 's.k: message'."""
    problems = []
    for error in err.errors():
        loc = [str(part) for part in error['loc']]
        if error['type'] == 'extra_forbidden':
            if len(loc) == 1:
                problems.append('unknown section [{}]'.format(loc[0]))
            else:
                problems.append('unknown key {}'.format('.'.join(loc)))
        else:
            problems.append('{}: {}'.format('.'.join(loc) or 'scenario', error['msg']))
    return problems


def parse_config(text, base_dir=None):
    """Parse scenario text into a validated ScenarioConfig.

    Args:
        text (str): INI text.
        base_dir (str/Path)[None]: Directory a relative mesh path is resolved against.

    Raises:
        ConfigError: Listing every unknown key, unconvertible value and range violation.
    """
    parser = configparser.ConfigParser(interpolation=None, delimiters=('=',), comment_prefixes=('#', ';'),
                                       inline_comment_prefixes=('#',))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError([str(err).replace('\n', ' ')]) from err

    try:
        config = ScenarioConfig.model_validate({name: dict(parser.items(name)) for name in parser.sections()})
    except ValidationError as err:
        raise ConfigError(_problems(err)) from err

    if config.mesh.generator == 'file' and base_dir is not None and not Path(config.mesh.path).is_absolute():
        mesh = config.mesh.model_copy(update={'path': str(Path(base_dir) / config.mesh.path)})
        config = config.model_copy(update={'mesh': mesh})
    return config


def serialize_config(config):
    """Return the INI text of a config. ``parse_config(serialize_config(c)) == c``."""
    lines = []
    for name in ScenarioConfig.model_fields:
        lines.append('[{}]'.format(name))
        for key, value in getattr(config, name).model_dump(by_alias=True).items():
            lines.append('{} = {}'.format(key, _format(value)))
        lines.append('')
    return '\n'.join(lines)


def load_config(path):
    """Read a scenario file. A bare name such as 'case1' loads a shipped scenario."""
    path = Path(path)
    if not path.exists() and not path.suffix:
        path = scenario_path(path.name)
    try:
        text = path.read_text()
    except OSError as err:
        raise FileNotFoundError('cannot read scenario {}: {}'.format(path, err.strerror or err)) from err
    return parse_config(text, base_dir=path.parent)


def scenario_path(name):
    """Return the path of a shipped scenario."""
    return SCENARIO_DIR / '{}.cfg'.format(name)


def output_directory(config, directory=None):
    """Return the output directory: the argument, then $STRATUM_OUTPUT_DIR, then the configured one."""
    return Path(directory or os.environ.get(OUTPUT_ENV) or config.output.directory)


# ========== Line sampling ==========
class LineProfile(NamedTuple):
    """Samples along a line. ``crossings`` holds (arc length, fracture segment, direction . normal)."""
    p0: tuple
    p1: tuple
    arc_length: np.ndarray
    points: np.ndarray
    subdomain: np.ndarray
    values: np.ndarray
    crossings: tuple = ()

    def to_csv(self):
        out = io.StringIO()
        out.write(','.join(PROFILE_COLUMNS) + '\n')
        for s, (x, y), name, value in zip(self.arc_length, self.points, self.subdomain, self.values):
            out.write('{:.17g},{:.17g},{:.17g},{},{:.17g}\n'.format(s, x, y, name, value))
        return out.getvalue()

    def cutoff_distance(self, cutoff, side='plus', crossing=0):
        """Return the distance from a fracture crossing to the first matrix sample below the cutoff."""
        if not self.crossings:
            raise ValueError('the line does not cross the fracture')
        arc, _, orientation = self.crossings[crossing]
        ahead = (orientation > 0) == (side == 'plus')
        matrix = self.subdomain == 'matrix'
        distance = (self.arc_length - arc) if ahead else (arc - self.arc_length)
        candidates = matrix & (distance >= 0)
        order = np.argsort(distance[candidates], kind='stable')
        dist, values = distance[candidates][order], self.values[candidates][order]
        below = np.flatnonzero(values < cutoff)
        if len(below) == 0:
            return float(dist[-1]) if len(dist) else 0.0
        return float(dist[below[0]])


def _clip_unit_square(p0, p1):
    """Return the parameter range of p0 + t (p1 - p0) inside [0, 1]^2, or None."""
    t0, t1 = 0.0, 1.0
    d = p1 - p0
    for axis in range(2):
        if abs(d[axis]) < 1e-15:
            if not 0 <= p0[axis] <= 1:
                return None
            continue
        a, b = (0 - p0[axis]) / d[axis], (1 - p0[axis]) / d[axis]
        t0, t1 = max(t0, min(a, b)), min(t1, max(a, b))
    return (t0, t1) if t1 > t0 else None


def sample_line(mesh, fields, p0, p1, n_samples=400):
    """Sample cell fields along the segment p0 -> p1, clipped to the unit square.

    Matrix samples take the value of their containing cell. Every fracture crossing adds one row per
    lower-dimensional subdomain at the crossing. Arc length is measured from p0.

    Args:
        mesh (MixedDimMesh): Mesh.
        fields (dict): Cell values per subdomain.
        p0 (tuple): Start point.
        p1 (tuple): End point.
        n_samples (int)[400]: Equispaced matrix samples.

    Raises:
        ValueError: If the endpoints coincide, n_samples < 2 or the segment misses the domain.
    """
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    if np.allclose(p0, p1):
        raise ValueError('sample line endpoints coincide')
    elif n_samples < 2:
        raise ValueError('at least two samples are needed, got {!r}'.format(n_samples))
    clipped = _clip_unit_square(p0, p1)
    if clipped is None:
        raise ValueError('sample line {} -> {} lies outside the domain'.format(tuple(p0), tuple(p1)))
    elif clipped != (0.0, 1.0):
        log.warning('sample line %s -> %s clipped to the domain', tuple(p0), tuple(p1))

    direction = p1 - p0
    length = float(np.hypot(*direction))
    ts = np.linspace(clipped[0], clipped[1], n_samples)
    points = p0 + ts[:, None] * direction
    cells = mesh.matrix.locate(points)
    inside = cells >= 0
    arc = list(ts[inside] * length)
    pts = list(points[inside])
    names = ['matrix'] * int(np.count_nonzero(inside))
    values = list(np.asarray(fields['matrix'])[cells[inside]])

    crossings = []
    fracture = mesh.fracture
    unit = direction / length
    for seg in range(fracture.num_cells):
        a, b = fracture.points[seg], fracture.points[seg + 1]
        e = b - a
        det = direction[0] * -e[1] + direction[1] * e[0]
        if abs(det) < 1e-15:
            continue
        rhs = a - p0
        t = (rhs[0] * -e[1] + rhs[1] * e[0]) / det
        s = (direction[0] * rhs[1] - direction[1] * rhs[0]) / det
        if not (clipped[0] <= t <= clipped[1] and (0 <= s < 1 or (s == 1 and seg == fracture.num_cells - 1))):
            continue
        crossings.append((t * length, seg, float(np.dot(unit, fracture.normals[seg]))))
        for name in mesh.lower_subdomains:
            arc.append(t * length)
            pts.append(p0 + t * direction)
            names.append(name)
            values.append(float(np.asarray(fields[name])[seg]))

    order = np.argsort(np.asarray(arc), kind='stable')
    return LineProfile(tuple(p0), tuple(p1), np.asarray(arc)[order], np.asarray(pts).reshape(-1, 2)[order],
                       np.asarray(names)[order], np.asarray(values, dtype=np.float64)[order], tuple(crossings))


# ========== Export ==========
def _vtk_text(title, points, cells, cell_type, scalars, vectors=None):
    out = io.StringIO()
    out.write('# vtk DataFile Version 2.0\n{}\nASCII\nDATASET UNSTRUCTURED_GRID\n'.format(title))
    out.write('POINTS {:d} double\n'.format(len(points)))
    for x, y in points:
        out.write('{:.17g} {:.17g} 0\n'.format(x, y))
    width = cells.shape[1] if len(cells) else 0
    out.write('CELLS {:d} {:d}\n'.format(len(cells), len(cells) * (width + 1)))
    for row in cells:
        out.write('{:d} {}\n'.format(width, ' '.join(str(int(v)) for v in row)))
    out.write('CELL_TYPES {:d}\n'.format(len(cells)))
    out.write('{:d}\n'.format(cell_type) * len(cells))
    out.write('CELL_DATA {:d}\n'.format(len(cells)))
    for name, values in scalars.items():
        out.write('SCALARS {} double 1\nLOOKUP_TABLE default\n'.format(name))
        for value in values:
            out.write('{:.17g}\n'.format(value))
    for name, values in (vectors or {}).items():
        out.write('VECTORS {} double\n'.format(name))
        for vx, vy in values:
            out.write('{:.17g} {:.17g} 0\n'.format(vx, vy))
    return out.getvalue()


def export_fields(state, mesh, path, prefix='fields'):
    """Write one legacy VTK file per subdomain.

    Args:
        state (SimulationState): State to export.
        mesh (MixedDimMesh): Mesh of the state. None uses ``state.mesh``.
        path (str/Path): Output directory.
        prefix (str)['fields']: File name prefix.

    Returns:
        files (dict): Written path per subdomain.
    """
    mesh = state.mesh if mesh is None else mesh
    path = Path(path)
    w = state.w
    files = {}
    try:
        path.mkdir(parents=True, exist_ok=True)
        for name in mesh.subdomains:
            scalars = {'p': state.flow.pressure[name], 'u': state.u[name], 'w': w[name]}
            if name == 'matrix':
                grid = mesh.matrix
                scalars['phi'] = state.fraction[name]
                text = _vtk_text('stratum matrix t={!r}'.format(state.time), grid.nodes, grid.cells, 5, scalars,
                                 {'q': reconstruct_velocity(mesh, state.flow)})
            else:
                grid = mesh.grid(name)
                if name == 'fracture':
                    scalars['eps'] = state.fraction[name]
                else:
                    scalars['phi'] = state.fraction[name]
                    scalars['eps'] = state.thickness[name]
                text = _vtk_text('stratum {} t={!r}'.format(name, state.time), grid.points, grid.segments, 3,
                                 scalars)
            target = path / '{}_{}.vtk'.format(prefix, name)
            with open(target, 'w', newline='\n') as file:
                file.write(text)
            files[name] = target
    except OSError as err:
        raise OSError('cannot write fields to {}: {}'.format(path, err.strerror or err)) from err
    log.debug('wrote %d VTK files to %s', len(files), path)
    return files


def write_summary(result, path):
    """Write the per-step series as CSV."""
    path = Path(path)
    with open(path, 'w', newline='\n') as file:
        file.write(','.join(result.columns) + '\n')
        for row in result.series.get_data():
            file.write(','.join('{:.17g}'.format(v) for v in row) + '\n')
    return path


def save_final(state, path):
    """Save the final fields of a run as npz."""
    arrays = {'time': np.array(state.time), 'step': np.array(state.step)}
    w = state.w
    for name in state.mesh.subdomains:
        arrays['u_' + name] = state.u[name]
        arrays['w_' + name] = w[name]
        arrays['p_' + name] = state.flow.pressure[name]
        arrays['fraction_' + name] = state.fraction[name]
    for name, values in state.thickness.items():
        arrays['thickness_' + name] = values
    np.savez(path, **arrays)
    return Path(path)


def load_final(path, field='u'):
    """Return the saved cell values of one field per subdomain."""
    path = Path(path)
    if path.is_dir():
        path = path / 'fields_final.npz'
    with np.load(path) as data:
        prefix = field + '_'
        return {key[len(prefix):]: data[key] for key in data.files if key.startswith(prefix)}


def write_outputs(result, config, directory=None):
    """Write VTK snapshots, the summary, the configured profiles and the final fields.

    Returns:
        files (list): Written paths.
    """
    target = output_directory(config, directory)
    target.mkdir(parents=True, exist_ok=True)
    files = []
    state = result.state
    if config.output.vtk:
        for snapshot in result.snapshots:
            prefix = 'fields_{:04d}'.format(snapshot.step)
            files.extend(export_fields(snapshot, state.mesh, target, prefix).values())
    files.append(write_summary(result, target / 'summary.csv'))

    for i, (x0, y0, x1, y1) in enumerate(config.output.profile_lines):
        profile = sample_line(state.mesh, state.u, (x0, y0), (x1, y1), config.output.profile_samples)
        profile_path = target / 'profile_{:d}.csv'.format(i)
        with open(profile_path, 'w', newline='\n') as file:
            file.write(profile.to_csv())
        files.append(profile_path)
    files.append(save_final(state, target / 'fields_final.npz'))
    log.info('wrote %d files to %s', len(files), target)
    return files


# ========== Command line ==========
def _thickness(args):
    inputs = LayerInputs(Q=args.Q, phi=args.phi, lam=args.lam, delta=args.delta, u_gamma=args.u_gamma, t=args.t)
    if args.model == 'linear':
        values = [thickness_linear(inputs)]
    elif args.model == 'nonlinear':
        values = [thickness_nonlinear_steady(inputs).thickness]
    else:
        kinetics = ReactionModel(args.kinetics, args.lam, 'square' if args.kinetics == 'precipitation' else
                                 'identity')
        history = oracle_1d(kinetics, inputs, n_cells=args.n_cells)
        values = [history.steady]
    for value in values:
        print('{:.10g}'.format(value))
    return 0


def _run(args):
    config = load_config(args.config)
    result = run(config, steps=args.steps)
    write_outputs(result, config, args.output)
    return 0


def _sample(args):
    config = load_config(args.config)
    mesh = build_mesh(config)
    values = load_final(args.results, args.field)
    profile = sample_line(mesh, values, (args.x0, args.y0), (args.x1, args.y1), args.n)
    sys.stdout.write(profile.to_csv())
    return 0


def _convergence(args):
    study = SUITES[args.suite]()
    print(format_study(study))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog='stratum', description='Reactive transport in fractured porous media '
                                                                 'with reduced precipitation layers.')
    parser.add_argument('-v', '--verbose', action='count', default=0, help='-v for INFO, -vv for DEBUG')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('run', help='run a scenario and write its outputs')
    p.add_argument('config', help='scenario file or shipped scenario name')
    p.add_argument('--steps', type=int, default=None, help='number of steps to take')
    p.add_argument('--output', default=None, help='output directory')
    p.set_defaults(func=_run)

    p = sub.add_parser('sample', help='sample saved fields along a line as CSV')
    p.add_argument('config')
    p.add_argument('results', help='fields_final.npz or the run directory')
    for name in ('x0', 'y0', 'x1', 'y1'):
        p.add_argument(name, type=float)
    p.add_argument('n', type=int)
    p.add_argument('--field', choices=('u', 'w', 'p', 'fraction'), default='u')
    p.set_defaults(func=_sample)

    p = sub.add_parser('thickness', help='evaluate a layer thickness model')
    p.add_argument('--model', choices=('linear', 'nonlinear', 'oracle'), required=True)
    p.add_argument('--Q', type=float, required=True)
    p.add_argument('--phi', type=float, default=0.2)
    p.add_argument('--lambda', dest='lam', type=float, default=100.0)
    p.add_argument('--delta', type=float, default=0.1)
    p.add_argument('--u-gamma', dest='u_gamma', type=float, default=2.0)
    p.add_argument('--t', type=float, default=0.2)
    p.add_argument('--kinetics', choices=KINDS, default='linear', help='oracle kinetics')
    p.add_argument('--n-cells', dest='n_cells', type=int, default=2000)
    p.set_defaults(func=_thickness)

    p = sub.add_parser('convergence', help='run a convergence study and print observed orders')
    p.add_argument('--suite', choices=tuple(SUITES), required=True)
    p.set_defaults(func=_convergence)
    return parser


def cli(argv=None):
    """Run the command line and return the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return err.code if isinstance(err.code, int) else 2

    if args.verbose:
        logging.basicConfig(level=logging.DEBUG if args.verbose > 1 else logging.INFO,
                            format='%(levelname)s %(name)s: %(message)s')
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError, KeyError) as err:
        print('error: {}'.format(err), file=sys.stderr)
        return 1


def main():
    sys.exit(cli())
