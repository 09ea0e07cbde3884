"""Discrete adjoints for time integration: gradients, tangent linear models,
Hessian-vector products and checkpointed reverse sweeps."""

from .adjoint import AdjointState, GradientResult, assemble_gradient, gradient, solve_adjoint
from .algebra import NewtonOptions, NonlinearSolveError, ShiftedJacobian, SingularMatrixError, linear_solve, newton_solve
from .checkpoint import CheckpointPolicy, CheckpointSchedule, StepProvider, count_recomputations, plan_schedule
from .forward import RK4, StepperConfig, Theta, Trajectory, integrate, parse_method, rk4_step, theta_step
from .hessian import HVPResult, SecondOrderState, hessian_vector_product, solve_second_order
from .optimize import Bounds, OptimizerOptions, lbfgs_minimize, newton_minimize
from .problem import DAEProblem, MissingCallbackError, Objective, ParamMap, validate_derivatives
from .tlm import propagate_tlm, tlm_directional, tlm_gradient

__version__ = "0.1.0"
