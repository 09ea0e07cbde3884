"""Second-order adjoint: Hessian-vector products by forward-over-adjoint.

A tangent direction (w_0, v2) is carried through the forward sweep (each
record gets ``w``/``w_next``), then one reverse sweep advances the
first-order adjoint (lambda, mu) together with its directional derivative
(Lambda, Gamma).  Both the theta and the RK recursions are the exact
derivatives of the first-order reverse steps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .adjoint import AdjointState, adjoint_terminal, assemble_gradient, forward_access, rk_adjoint_core, theta_adjoint_core
from .forward import RK4, StepperConfig, StepRecord, Trajectory
from .problem import DAEProblem, Objective, ParamMap
from .tlm import explicit_identity, rk_tangent_stages, tlm_step


@dataclass
class SecondOrderState:
    """Lambda and Gamma at level n, the directional derivatives of lambda and mu.

    ``Theta`` is the companion of the integral-cost state; its update has no
    sources, so it stays at its terminal value.
    """

    n: int
    Lam: np.ndarray
    Gam: np.ndarray
    Theta: float = 0.0


def require_second_order(problem: DAEProblem, objective: Objective) -> None:
    """Fail before any integration when a Hessian callback is missing."""
    problem.require_second_order()
    objective.require_second_order()


def soa_forward_pass(problem, objective, trajectory: Trajectory, w0, v2, p) -> None:
    """Attach the tangent w_n to every stored record."""
    tableau = trajectory.config.method if isinstance(trajectory.config.method, RK4) else RK4()
    w = np.asarray(w0, dtype=float)
    for rec in trajectory.records:
        rec.w = w
        w, _ = tlm_step(problem, rec, w, v2, p, None, tableau)
        rec.w_next = w


def soa_terminal(objective: Objective, u_final, w_final, v2, p, num_steps: int) -> SecondOrderState:
    """Lambda_N = psi_uu w_N + psi_up v2, Gamma_N = psi_pu w_N + psi_pp v2."""
    Lam = objective.psi_uu(u_final, p, w_final) + objective.psi_up(u_final, p, v2)
    Gam = objective.psi_pu(u_final, p, w_final) + objective.psi_pp(u_final, p, v2)
    return SecondOrderState(num_steps, Lam, Gam)


def _point_terms(problem, objective, t, u, p, lam_s, w, v2):
    """(u-part, p-part) of the second-order source at one evaluation point."""
    gu = problem.fuu(t, u, p, lam_s, w)
    gp = np.zeros(problem.dim_param)
    if problem.dim_param:
        gu = gu + problem.fup(t, u, p, lam_s, v2)
        gp = problem.fpu(t, u, p, lam_s, w) + problem.fpp(t, u, p, lam_s, v2)
    return gu, gp


def _integrand_terms(objective, t, u, p, w, v2):
    ru = objective.r_uu(t, u, p, w) + objective.r_up(t, u, p, v2)
    rp = objective.r_pu(t, u, p, w) + objective.r_pp(t, u, p, v2)
    return ru, rp


def soa_theta_step(problem, objective, record: StepRecord, first: AdjointState, second: SecondOrderState, v2, p):
    """Reverse theta step for (lambda, mu) and (Lambda, Gamma) together."""
    lam, mu, work = theta_adjoint_core(problem, objective, record, first.lam, first.mu, p)
    h, th = record.h, record.theta
    t0, t1 = record.t, record.t + record.h
    integral = objective.has_integral
    lam_s = work.lam_s
    rhs = second.Lam
    Gam = second.Gam.copy()
    if th != 0.0:
        gu1, gp1 = _point_terms(problem, objective, t1, record.u_next, p, lam_s, record.w_next, v2)
        if integral:
            ru, rp = _integrand_terms(objective, t1, record.u_next, p, record.w_next, v2)
            gu1, gp1 = gu1 + ru, gp1 + rp
        rhs = rhs + h * th * gu1
    if explicit_identity(problem, record):
        Lam_s = rhs
    else:
        Lam_s = work.factor.solve(rhs, transpose=True)
    Lam = problem.mass_rmatvec(Lam_s)
    if th != 0.0 and problem.dim_param:
        Gam = Gam + h * th * (work.Fp_next.T @ Lam_s + gp1)
    if th != 1.0:
        gu0, gp0 = _point_terms(problem, objective, t0, record.u, p, lam_s, record.w, v2)
        if integral:
            ru, rp = _integrand_terms(objective, t0, record.u, p, record.w, v2)
            gu0, gp0 = gu0 + ru, gp0 + rp
        Lam = Lam + h * (1.0 - th) * (work.J_n.T @ Lam_s + gu0)
        if problem.dim_param:
            Gam = Gam + h * (1.0 - th) * (work.Fp_n.T @ Lam_s + gp0)
    return AdjointState(record.n, lam, mu), SecondOrderState(record.n, Lam, Gam)


def soa_rk4_step(problem, objective, record: StepRecord, first: AdjointState, second: SecondOrderState, v2, p,
                 tableau: RK4 = RK4()):
    """Reverse RK step for (lambda, mu) and (Lambda, Gamma) together.

    Stage tangents are rebuilt from ``record.w``.
    """
    lam, mu, work = rk_adjoint_core(problem, objective, record, first.lam, first.mu, p, tableau)
    A, b, c = tableau.A, tableau.b, tableau.c
    h, s = record.h, tableau.stages
    Y = record.stage_states()
    dY, _ = rk_tangent_stages(problem, record, record.w, v2, p, tableau)
    integral = objective.has_integral
    Kd = [None] * s
    Yd = [None] * s
    Gam = second.Gam.copy()
    for i in reversed(range(s)):
        ti = record.t + c[i] * h
        kd = h * b[i] * second.Lam
        for j in range(i + 1, s):
            if A[j][i] != 0.0:
                kd = kd + h * A[j][i] * Yd[j]
        Kd[i] = kd
        gu, gp = _point_terms(problem, objective, ti, Y[i], p, work.Kbar[i], dY[i], v2)
        yd = work.J[i].T @ kd + gu
        if integral:
            ru, rp = _integrand_terms(objective, ti, Y[i], p, dY[i], v2)
            yd = yd + h * b[i] * ru
            gp = gp + h * b[i] * rp
        Yd[i] = yd
        if problem.dim_param:
            Gam = Gam + work.Fp[i].T @ kd
        Gam = Gam + gp
    Lam = second.Lam.copy()
    for i in range(s):
        Lam = Lam + Yd[i]
    return AdjointState(record.n, lam, mu), SecondOrderState(record.n, Lam, Gam)


def _final_tangent(access) -> np.ndarray:
    final = getattr(access, "final_tangent", None)
    if final is not None:
        return final
    return access.records[-1].w_next


def solve_second_order(problem, objective, access, v2, p=None):
    """Reverse sweep over records carrying tangents.

    Returns the level-0 (AdjointState, SecondOrderState).
    """
    p = np.zeros(0) if p is None else np.asarray(p, dtype=float)
    config = getattr(access, "config", None)
    tableau = config.method if config is not None and isinstance(config.method, RK4) else RK4()
    N = access.num_steps
    u_final = access.final_state
    first = adjoint_terminal(objective, u_final, p, N)
    second = soa_terminal(objective, u_final, _final_tangent(access), v2, p, N)
    for n in reversed(range(N)):
        rec = access.provide_step(n)
        if rec.is_theta:
            first, second = soa_theta_step(problem, objective, rec, first, second, v2, p)
        else:
            first, second = soa_rk4_step(problem, objective, rec, first, second, v2, p, tableau)
    return first, second


@dataclass
class HVPResult:
    cost: float
    gradient: np.ndarray
    hvp: np.ndarray
    recomputations: int = 0


def tangent_seed(problem: DAEProblem, param_map: ParamMap, p, sigma, target: str):
    """(w_0, v2) for a direction sigma in the chosen space."""
    sigma = np.asarray(sigma, dtype=float)
    if target == "param":
        return param_map.jvp(p, sigma), sigma
    if target == "initial":
        return sigma, np.zeros(problem.dim_param)
    raise ValueError(f"target must be 'param' or 'initial', got {target!r}")


def hessian_vector_product(problem: DAEProblem, objective: Objective, config: StepperConfig, p,
                           param_map: ParamMap, sigma, target: str = "param",
                           checkpointing=None) -> HVPResult:
    """Cost, gradient and H sigma from one forward and one reverse sweep.

    For ``target='param'`` the Hessian is w.r.t. p (including the curvature
    of eta); for ``target='initial'`` it is w.r.t. u_0 with p held fixed.
    """
    require_second_order(problem, objective)
    p = np.zeros(0) if p is None else np.asarray(p, dtype=float)
    w0, v2 = tangent_seed(problem, param_map, p, sigma, target)
    access, cost = forward_access(problem, objective, config, p, param_map, checkpointing, tangent=(w0, v2))
    if checkpointing is None:
        soa_forward_pass(problem, objective, access, w0, v2, p)
    first, second = solve_second_order(problem, objective, access, v2, p)
    if target == "param":
        g = assemble_gradient(param_map, p, first.lam, first.mu)
        hv = param_map.hess_vec(p, first.lam, np.asarray(sigma, float)) + param_map.vjp(p, second.Lam) + second.Gam
    else:
        g = first.lam.copy()
        hv = second.Lam.copy()
    return HVPResult(cost, g, hv, getattr(access, "recomputations", 0))
