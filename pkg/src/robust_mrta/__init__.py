"""Adaptive multi-robot task allocation that learns environmental disturbances.

Robots execute go-to-goal tasks through (robust) control barrier function
constraints inside a mixed-integer allocation program; Gaussian-process
models of the unmodelled dynamics supply the disturbance hulls, and a
specialization matrix is adapted online from modelled-versus-actual progress.
"""

from .allocator import StepDecision, TeamConfig, build_step_problem, decide
from .barrier import BarrierTask, ClassKappa, nominal_constraint, robust_constraint, worst_case_progress
from .dynamics import (DisturbanceHull, GroundTruthDisturbance, SingleIntegratorModel,
                       UnicycleModel)
from .errors import FactorizationError, InvalidArgument, MrtaError, ScenarioError, SolverError
from .gp import DisturbanceEstimateConfig, GpDataset, GpModel, KernelParams, disturbance_hull, fit
from .simulator import RunLog, Scenario, collect_training_data, detect_reallocation, run
from .solver import QpInstance, solve_miqp, solve_qp, verify_kkt
from .specialization import SpecializationMatrix, baseline_delta, robust_delta

__version__ = "0.1.0"
