from .__meta__ import version as __version__

from .utils import SolverError, StepError
from .history import UnderflowError, LevelBuffer
from .meshkit import MeshError, TriangleMesh, LowerDimGrid, InterfaceMap, MixedDimMesh, \
    build_structured, import_mesh, export_mesh, check_mesh, jump_average
from .chemistry import ReactionModel, rate, react_step
from .layer_models import LayerInputs, saturation_time, thickness_linear, thickness_nonlinear_steady, \
    profile_linear, profile_nonlinear_steady, oracle_1d
from .transport import tpfa_transmissibility, TransportProperties, TransportState, advect_diffuse_step
from .darcy_flow import PropertyError, FlowProperties, FlowState, update_permeability, assemble_and_solve, \
    trace_pressure, interface_flux_residual, reconstruct_velocity
from .splitting import Problem, SimulationState, RunResult, initial_state, advance, run
from .convergence import ConvergenceResult, observed_orders, rk2_study, splitting_study, oracle_study
from .scenario_io import ConfigError, ScenarioConfig, parse_config, serialize_config, load_config, \
    LineProfile, sample_line, export_fields, write_outputs, cli
