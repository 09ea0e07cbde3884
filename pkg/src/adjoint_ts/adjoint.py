"""First-order discrete adjoint.

The reverse sweep consumes :class:`StepRecord` objects in decreasing step
order from any provider with ``provide_step(n)``, ``num_steps`` and
``final_state`` (a stored :class:`Trajectory` or a checkpointing
``StepProvider``).  The recursions are the exact transposes of the forward
steps, so the result agrees with the tangent linear model to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .algebra import Factorization
from .forward import RK4, StepperConfig, StepRecord, integrate
from .problem import DAEProblem, Objective, ParamMap
from .tlm import explicit_identity, step_matrix


@dataclass
class AdjointState:
    """lambda (state adjoint) and mu (parameter adjoint) at time level n."""

    n: int
    lam: np.ndarray
    mu: np.ndarray


def adjoint_terminal(objective: Objective, u_final: np.ndarray, p, num_steps: int) -> AdjointState:
    """lambda_N = psi_u, mu_N = psi_p."""
    return AdjointState(num_steps, objective.psi_u(u_final, p).copy(), objective.psi_p(u_final, p).copy())


@dataclass
class ThetaWork:
    """Intermediates of one theta adjoint step, reused by the second-order sweep."""

    lam_s: np.ndarray
    factor: Optional[Factorization]
    J_n: object = None
    Fp_n: object = None
    Fp_next: object = None


def theta_adjoint_core(problem: DAEProblem, objective: Optional[Objective], record: StepRecord,
                       lam1: np.ndarray, mu1: np.ndarray, p):
    """One reverse theta step.  Returns (lambda_n, mu_n, ThetaWork)."""
    h, th = record.h, record.theta
    t0, t1 = record.t, record.t + record.h
    rhs = lam1
    if objective is not None and objective.has_integral and th != 0.0:
        rhs = rhs + h * th * objective.r_u(t1, record.u_next, p)
    factor = None
    if explicit_identity(problem, record):
        lam_s = rhs
    else:
        # the record's endpoint, never Newton's last (pre-update) Jacobian
        factor = step_matrix(problem, record, p).factorize()
        lam_s = factor.solve(rhs, transpose=True)
    lam = problem.mass_rmatvec(lam_s)
    mu = mu1.copy()
    work = ThetaWork(lam_s, factor)
    if th != 0.0 and problem.dim_param:
        work.Fp_next = problem.fp(t1, record.u_next, p)
        mu = mu + h * th * (work.Fp_next.T @ lam_s)
        if objective is not None and objective.has_integral:
            mu = mu + h * th * objective.r_p(t1, record.u_next, p)
    if th != 1.0:
        work.J_n = problem.fu(t0, record.u, p)
        lam = lam + h * (1.0 - th) * (work.J_n.T @ lam_s)
        if objective is not None and objective.has_integral:
            lam = lam + h * (1.0 - th) * objective.r_u(t0, record.u, p)
        if problem.dim_param:
            work.Fp_n = problem.fp(t0, record.u, p)
            mu = mu + h * (1.0 - th) * (work.Fp_n.T @ lam_s)
            if objective is not None and objective.has_integral:
                mu = mu + h * (1.0 - th) * objective.r_p(t0, record.u, p)
    return lam, mu, work


def adjoint_theta_step(problem, objective, record: StepRecord, state: AdjointState, p) -> AdjointState:
    lam, mu, _ = theta_adjoint_core(problem, objective, record, state.lam, state.mu, p)
    return AdjointState(record.n, lam, mu)


@dataclass
class RKWork:
    """Stage adjoints K-bar_i plus the stage Jacobians used to form them."""

    Kbar: list = field(default_factory=list)
    J: list = field(default_factory=list)
    Fp: list = field(default_factory=list)


def rk_adjoint_core(problem: DAEProblem, objective: Optional[Objective], record: StepRecord,
                    lam1: np.ndarray, mu1: np.ndarray, p, tableau: RK4 = RK4()):
    """Reverse of an explicit RK step.  Returns (lambda_n, mu_n, RKWork)."""
    A, b, c = tableau.A, tableau.b, tableau.c
    h, s = record.h, tableau.stages
    Y = record.stage_states()
    integral = objective is not None and objective.has_integral
    Kbar = [None] * s
    Ybar = [None] * s
    J = [None] * s
    Fp = [None] * s
    for i in reversed(range(s)):
        ti = record.t + c[i] * h
        kb = h * b[i] * lam1
        for j in range(i + 1, s):
            if A[j][i] != 0.0:
                kb = kb + h * A[j][i] * Ybar[j]
        Kbar[i] = kb
        J[i] = problem.fu(ti, Y[i], p)
        yb = J[i].T @ kb
        if integral:
            yb = yb + h * b[i] * objective.r_u(ti, Y[i], p)
        Ybar[i] = yb
    lam = lam1.copy()
    for i in range(s):
        lam = lam + Ybar[i]
    mu = mu1.copy()
    if problem.dim_param:
        for i in range(s):
            ti = record.t + c[i] * h
            Fp[i] = problem.fp(ti, Y[i], p)
            mu = mu + Fp[i].T @ Kbar[i]
            if integral:
                mu = mu + h * b[i] * objective.r_p(ti, Y[i], p)
    return lam, mu, RKWork(Kbar, J, Fp)


def adjoint_rk4_step(problem, objective, record: StepRecord, state: AdjointState, p,
                     tableau: RK4 = RK4()) -> AdjointState:
    lam, mu, _ = rk_adjoint_core(problem, objective, record, state.lam, state.mu, p, tableau)
    return AdjointState(record.n, lam, mu)


def _tableau_of(access) -> RK4:
    config = getattr(access, "config", None)
    method = getattr(config, "method", None)
    return method if isinstance(method, RK4) else RK4()


def solve_adjoint(problem: DAEProblem, objective: Objective, access, p=None) -> AdjointState:
    """Full reverse sweep; returns the adjoint at level 0."""
    p = np.zeros(0) if p is None else np.asarray(p, dtype=float)
    tableau = _tableau_of(access)
    N = access.num_steps
    state = adjoint_terminal(objective, access.final_state, p, N)
    for n in reversed(range(N)):
        rec = access.provide_step(n)
        if rec.is_theta:
            state = adjoint_theta_step(problem, objective, rec, state, p)
        else:
            state = adjoint_rk4_step(problem, objective, rec, state, p, tableau)
    return state


def assemble_gradient(param_map: ParamMap, p, lam0: np.ndarray, mu0: np.ndarray) -> np.ndarray:
    """d(cost)/dp = eta_p^T lambda_0 + mu_0."""
    return param_map.vjp(p, lam0) + mu0


@dataclass
class GradientResult:
    cost: float
    gradient: np.ndarray
    lam0: np.ndarray
    mu0: np.ndarray
    recomputations: int = 0


def forward_access(problem, objective, config: StepperConfig, p, param_map: ParamMap, checkpointing=None,
                   tangent=None):
    """Run the forward sweep and return (access, cost).

    Without ``checkpointing`` every step is stored.  Otherwise
    ``checkpointing`` is a :class:`~adjoint_ts.checkpoint.CheckpointPolicy`.
    """
    if checkpointing is None:
        traj, cost = integrate(problem, objective, config, p, param_map)
        return traj, cost
    from .checkpoint import StepProvider

    u0 = param_map.initial_state(p)
    provider = StepProvider.from_policy(problem, objective, config, p, u0, checkpointing, tangent=tangent)
    cost = provider.run_forward()
    return provider, cost


def gradient(problem: DAEProblem, objective: Objective, config: StepperConfig, p, param_map: ParamMap,
             target: str = "param", checkpointing=None) -> GradientResult:
    """Cost and gradient by one forward and one adjoint sweep.

    ``target='param'`` differentiates w.r.t. p (through eta and f);
    ``target='initial'`` returns lambda_0, the gradient w.r.t. u_0.
    """
    p = np.zeros(0) if p is None else np.asarray(p, dtype=float)
    access, cost = forward_access(problem, objective, config, p, param_map, checkpointing)
    state = solve_adjoint(problem, objective, access, p)
    if target == "param":
        g = assemble_gradient(param_map, p, state.lam, state.mu)
    elif target == "initial":
        g = state.lam.copy()
    else:
        raise ValueError(f"target must be 'param' or 'initial', got {target!r}")
    return GradientResult(cost, g, state.lam, state.mu, getattr(access, "recomputations", 0))
