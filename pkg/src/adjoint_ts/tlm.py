"""Discrete tangent linear model.

Sensitivities are propagated either as a full matrix S_n (columns = the
differentiation directions) or as a single direction w_n.  Both use the same
step functions: ``w`` may be a vector or an (N_d, k) matrix, with ``v2``
shaped (N_p,) or (N_p, k) to match.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .algebra import Factorization, ShiftedJacobian
from .forward import RK4, StepRecord, Trajectory, integrate
from .problem import DAEProblem, Objective, ParamMap

FULL_MATRIX_LIMIT = 64


def _v2_like(problem: DAEProblem, w: np.ndarray, v2) -> np.ndarray:
    if v2 is not None:
        return np.asarray(v2, dtype=float)
    shape = (problem.dim_param,) + np.shape(w)[1:]
    return np.zeros(shape)


def _dot(row: np.ndarray, x: np.ndarray):
    """row^T x for a vector or each column of a matrix."""
    return row @ x


def step_matrix(problem: DAEProblem, record: StepRecord, p) -> ShiftedJacobian:
    """M - h theta f_u(u_{n+1}) for a theta record."""
    weight = record.h * record.theta
    if weight == 0.0:
        J = np.zeros((problem.dim_state, problem.dim_state))
    else:
        J = problem.fu(record.t + record.h, record.u_next, p)
    return ShiftedJacobian(1.0, problem.mass, J, weight)


def explicit_identity(problem: DAEProblem, record: StepRecord) -> bool:
    """theta = 0 with M = I: the step matrix is the identity, no solve."""
    return record.theta == 0.0 and problem.mass is None


def tlm_theta_step(
    problem: DAEProblem,
    record: StepRecord,
    w: np.ndarray,
    v2=None,
    p=None,
    objective: Optional[Objective] = None,
    factor: Optional[Factorization] = None,
):
    """Advance the theta-method tangent: returns (w_{n+1}, dq) where dq is
    the step's contribution to the sensitivity of the integral term."""
    p = np.zeros(0) if p is None else p
    w = np.asarray(w, dtype=float)
    v2 = _v2_like(problem, w, v2)
    h, th = record.h, record.theta
    t0, t1 = record.t, record.t + record.h
    rhs = problem.mass_matvec(w)
    if th != 1.0:
        rhs = rhs + h * (1.0 - th) * (problem.fu(t0, record.u, p) @ w + problem.fp(t0, record.u, p) @ v2)
    if th != 0.0:
        rhs = rhs + h * th * (problem.fp(t1, record.u_next, p) @ v2)
    if explicit_identity(problem, record):
        w_next = rhs
    else:
        if factor is None:
            factor = step_matrix(problem, record, p).factorize()
        w_next = factor.solve(rhs)
    dq = 0.0
    if objective is not None and objective.has_integral:
        dq = h * (1.0 - th) * (_dot(objective.r_u(t0, record.u, p), w) + _dot(objective.r_p(t0, record.u, p), v2))
        dq = dq + h * th * (_dot(objective.r_u(t1, record.u_next, p), w_next)
                            + _dot(objective.r_p(t1, record.u_next, p), v2))
    return w_next, dq


def rk_tangent_stages(problem: DAEProblem, record: StepRecord, w, v2, p, tableau: RK4 = RK4()):
    """Stage tangents (dY_i, dK_i) of an explicit RK step."""
    A, c = tableau.A, tableau.c
    h = record.h
    Y = record.stage_states()
    dY, dK = [], []
    for i in range(tableau.stages):
        y = w.copy()
        for j in range(i):
            if A[i][j] != 0.0:
                y = y + h * A[i][j] * dK[j]
        ti = record.t + c[i] * h
        dY.append(y)
        dK.append(problem.fu(ti, Y[i], p) @ y + problem.fp(ti, Y[i], p) @ v2)
    return dY, dK


def tlm_rk4_step(
    problem: DAEProblem,
    record: StepRecord,
    w: np.ndarray,
    v2=None,
    p=None,
    objective: Optional[Objective] = None,
    tableau: RK4 = RK4(),
):
    """Advance the RK tangent: returns (w_{n+1}, dq)."""
    p = np.zeros(0) if p is None else p
    w = np.asarray(w, dtype=float)
    v2 = _v2_like(problem, w, v2)
    dY, dK = rk_tangent_stages(problem, record, w, v2, p, tableau)
    h, b, c = record.h, tableau.b, tableau.c
    w_next = w.copy()
    for i in range(tableau.stages):
        w_next = w_next + h * b[i] * dK[i]
    dq = 0.0
    if objective is not None and objective.has_integral:
        Y = record.stage_states()
        for i in range(tableau.stages):
            ti = record.t + c[i] * h
            dq = dq + h * b[i] * (_dot(objective.r_u(ti, Y[i], p), dY[i]) + _dot(objective.r_p(ti, Y[i], p), v2))
    return w_next, dq


def tlm_step(problem, record: StepRecord, w, v2=None, p=None, objective=None, tableau: RK4 = RK4()):
    if record.is_theta:
        return tlm_theta_step(problem, record, w, v2, p, objective)
    return tlm_rk4_step(problem, record, w, v2, p, objective, tableau)


@dataclass
class TLMState:
    """Tangent at step ``n``: full matrix (2-D ``value``) or direction (1-D)."""

    n: int
    value: np.ndarray
    v2: np.ndarray
    dq: object = 0.0

    @property
    def directional(self) -> bool:
        return self.value.ndim == 1


def propagate_tlm(problem, objective, trajectory: Trajectory, w0, v2=None, p=None, keep_history=False):
    """Run the tangent through a stored trajectory.

    Returns the final :class:`TLMState`, plus the list of w_n when
    ``keep_history`` is set.
    """
    w0 = np.asarray(w0, dtype=float)
    if w0.ndim == 2 and w0.shape[1] > FULL_MATRIX_LIMIT:
        raise ValueError(f"full-matrix TLM is limited to {FULL_MATRIX_LIMIT} columns; use directions")
    v2 = _v2_like(problem, w0, v2)
    tableau = trajectory.config.method if isinstance(trajectory.config.method, RK4) else RK4()
    w = w0
    dq = 0.0
    history = [w0]
    for rec in trajectory.records:
        w, step_dq = tlm_step(problem, rec, w, v2, p, objective, tableau)
        dq = dq + step_dq
        if keep_history:
            history.append(w)
    state = TLMState(trajectory.num_steps, w, v2, dq)
    return (state, history) if keep_history else state


def tlm_total_derivative(objective: Objective, state: TLMState, u_final, p=None):
    """d(psi + q)/d(direction): S_N^T psi_u + psi_p v2 + accumulated dq.

    For a full-matrix state with v2 = I this is the gradient.
    """
    p = np.zeros(0) if p is None else p
    out = objective.psi_u(u_final, p) @ state.value + objective.psi_p(u_final, p) @ state.v2
    return out + state.dq


def tlm_gradient(problem, objective, config, p, param_map: ParamMap):
    """Gradient w.r.t. p through the full-matrix TLM (S_0 = eta_p, v2 = I)."""
    p = np.asarray(p, dtype=float)
    traj, _ = integrate(problem, objective, config, p, param_map)
    npar = problem.dim_param
    S0 = np.column_stack([param_map.jvp(p, e) for e in np.eye(npar)]) if npar else np.zeros((problem.dim_state, 0))
    state = propagate_tlm(problem, objective, traj, S0, np.eye(npar), p)
    return tlm_total_derivative(objective, state, traj.final_state, p)


def tlm_directional(problem, objective, config, p, param_map: ParamMap, sigma):
    """Directional derivative of the cost along sigma in parameter space."""
    p = np.asarray(p, dtype=float)
    traj, _ = integrate(problem, objective, config, p, param_map)
    state = propagate_tlm(problem, objective, traj, param_map.jvp(p, sigma), np.asarray(sigma, float), p)
    return float(tlm_total_derivative(objective, state, traj.final_state, p))
