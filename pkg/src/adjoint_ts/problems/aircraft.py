"""Pursuer/leader trajectory planning with piecewise-constant controls.

State u = (x, y), dynamics x' = v cos(w), y' = v sin(w).  The control is
p = (v_0..v_{K-1}, w_0..w_{K-1}), constant on K equal intervals, and the cost
is the integral of |u - u_leader(t)|^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..forward import StepperConfig, parse_method
from ..optimize import Bounds
from ..problem import DAEProblem, Objective, ParamMap
from .base import ProblemSetup


@dataclass(frozen=True)
class AircraftConfig:
    intervals: int = 10
    steps_per_interval: int = 10
    t0: float = 0.0
    tf: float = 4.0
    start: tuple = (1.5, 0.0)
    leader_velocity: tuple = (0.5, 0.5)
    v_bounds: tuple = (0.0, 2.0)
    w_bounds: tuple = (-np.pi, np.pi)
    v_init: float = 0.5
    w_init: float = np.pi / 4


class Aircraft:
    def __init__(self, cfg: AircraftConfig = AircraftConfig()):
        self.cfg = cfg
        self.K = cfg.intervals
        self.width = (cfg.tf - cfg.t0) / cfg.intervals
        self.velocity = np.asarray(cfg.leader_velocity, dtype=float)

    def interval(self, t: float) -> int:
        # left-closed; a switch time belongs to the interval it opens
        k = int(np.floor((t - self.cfg.t0) / self.width + 1e-9))
        return min(max(k, 0), self.K - 1)

    def leader(self, t: float) -> np.ndarray:
        return self.velocity * (t - self.cfg.t0)

    def rhs(self, t, u, p):
        k = self.interval(t)
        v, w = p[k], p[self.K + k]
        return np.array([v * np.cos(w), v * np.sin(w)])

    def jac_state(self, t, u, p):
        return np.zeros((2, 2))

    def jac_param(self, t, u, p):
        k = self.interval(t)
        v, w = p[k], p[self.K + k]
        J = np.zeros((2, 2 * self.K))
        J[0, k], J[1, k] = np.cos(w), np.sin(w)
        J[0, self.K + k], J[1, self.K + k] = -v * np.sin(w), v * np.cos(w)
        return J

    def hess_zero_state(self, t, u, p, v1, v2):
        return np.zeros(2)

    def hess_zero_param(self, t, u, p, v1, v2):
        return np.zeros(2 * self.K)

    def hess_pp(self, t, u, p, v1, v2):
        k = self.interval(t)
        v, w = p[k], p[self.K + k]
        a, b = v1
        dv, dw = v2[k], v2[self.K + k]
        mixed = -a * np.sin(w) + b * np.cos(w)
        ww = -v * (a * np.cos(w) + b * np.sin(w))
        out = np.zeros(2 * self.K)
        out[k] = mixed * dw
        out[self.K + k] = mixed * dv + ww * dw
        return out

    def problem(self) -> DAEProblem:
        return DAEProblem(
            dim_state=2, dim_param=2 * self.K, rhs=self.rhs, jac_state=self.jac_state, jac_param=self.jac_param,
            hess_uu_vv=self.hess_zero_state, hess_up_vv=self.hess_zero_state, hess_pu_vv=self.hess_zero_param,
            hess_pp_vv=self.hess_pp, name="aircraft")

    def objective(self) -> Objective:
        return Objective(
            integrand=lambda t, u, p: float(np.sum((u - self.leader(t)) ** 2)),
            integrand_grad_state=lambda t, u, p: 2.0 * (u - self.leader(t)),
            integrand_hess_uu=lambda t, u, p, w: 2.0 * np.asarray(w, dtype=float))

    def bounds(self) -> Bounds:
        c = self.cfg
        lo = np.r_[np.full(self.K, c.v_bounds[0]), np.full(self.K, c.w_bounds[0])]
        hi = np.r_[np.full(self.K, c.v_bounds[1]), np.full(self.K, c.w_bounds[1])]
        return Bounds(lo, hi)

    def initial_controls(self) -> np.ndarray:
        return np.r_[np.full(self.K, self.cfg.v_init), np.full(self.K, self.cfg.w_init)]

    def leader_controls(self) -> np.ndarray:
        """Controls that reproduce the leader's motion exactly."""
        speed = float(np.linalg.norm(self.velocity))
        heading = float(np.arctan2(self.velocity[1], self.velocity[0]))
        return np.r_[np.full(self.K, speed), np.full(self.K, heading)]


def aircraft_setup(method: str = "rk4", steps_per_interval: int = None, cfg: AircraftConfig = AircraftConfig(),
                   **_ignored) -> ProblemSetup:
    if steps_per_interval is not None:
        cfg = AircraftConfig(**{**cfg.__dict__, "steps_per_interval": steps_per_interval})
    ac = Aircraft(cfg)
    config = StepperConfig(parse_method(method), cfg.t0, cfg.tf, cfg.intervals * cfg.steps_per_interval)
    p0 = ac.initial_controls()
    return ProblemSetup("aircraft", ac.problem(), ac.objective(), ParamMap(u0=np.asarray(cfg.start, float)),
                        config, p0, "param", ac.bounds(), model=ac)
