"""Simulation and control toolkit for continuous-disc vacuum filters."""

from .analyze import (
    MetricsReport,
    Series,
    compute_metrics,
    efficiency_surface,
    error_stddev,
    ise,
    overshoot,
    settling_time,
)
from .equilibrium import OperatingPoint, SteadyKnowns, residual, solve_steady_state
from .errors import (
    CdFilterError,
    DegenerateLoop,
    DegenerateStep,
    Infeasible,
    InvalidVacuum,
    IterationLimit,
    NonPositiveResistance,
    NumericalBlowup,
    ScenarioError,
    UnsupportedResistanceMode,
    ZeroInflowSolids,
    ZeroSteadyFlow,
)
from .kernels import BACKEND
from .linearize import (
    DiscreteLinearModel,
    DiscretizationMethod,
    LinearModel,
    build_continuous,
    discretize,
    finite_difference_jacobian,
    k_constants,
)
from .model import (
    INPUT_NAMES,
    STATE_NAMES,
    PlantInput,
    PlantParams,
    PlantState,
    ResistanceMode,
    derivative,
    efficiency,
    resistive_torque,
    total_resistance,
)
from .mpc import MpcConfig, assemble_qp, build_prediction_matrices, mpc_step
from .pi import PiArchitecture, PiGains, PiState, map_fin_ref_to_omega_ref, pi_step, tune_default_gains
from .qp import QpProblem, solve_qp
from .scenario import ScenarioFile, build_scenario, load_scenario, parse_scenario
from .simulate import (
    ControllerKind,
    ControllerSpec,
    Scenario,
    Signal,
    Trajectory,
    rk4_step,
    run_closed_loop,
    sample_signal,
)

__version__ = "0.1.0"
