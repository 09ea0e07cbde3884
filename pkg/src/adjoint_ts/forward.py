"""Forward time integration: theta methods and classic RK4.

Every step returns a :class:`StepRecord` holding what the tangent linear and
adjoint steps need (endpoint states, stage values, running integral), so the
reverse sweep never re-solves a nonlinear system.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .algebra import (
    Factorization,
    NewtonOptions,
    NewtonStats,
    NonlinearSolveError,
    ShiftedJacobian,
    SingularMatrixError,
    newton_solve,
)
from .problem import DAEProblem, Objective, ParamMap


@dataclass(frozen=True)
class Theta:
    """M u_{n+1} = M u_n + h(1-theta) f(u_n) + h theta f(u_{n+1}).

    theta = 1 is backward Euler, theta = 1/2 Crank-Nicolson, theta = 0
    forward Euler.
    """

    theta: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")

    @property
    def label(self) -> str:
        return f"theta{self.theta:g}"


@dataclass(frozen=True)
class RK4:
    """Classic four-stage Runge-Kutta, as an explicit Butcher tableau."""

    A: tuple = ((0.0, 0.0, 0.0, 0.0), (0.5, 0.0, 0.0, 0.0), (0.0, 0.5, 0.0, 0.0), (0.0, 0.0, 1.0, 0.0))
    b: tuple = (1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0)
    c: tuple = (0.0, 0.5, 0.5, 1.0)

    @property
    def stages(self) -> int:
        return len(self.b)

    @property
    def label(self) -> str:
        return "rk4"


Method = Union[Theta, RK4]


def parse_method(name: str) -> Method:
    """'theta1', 'theta0.5', 'be', 'cn' or 'rk4'."""
    key = name.strip().lower()
    aliases = {"be": "theta1", "backward-euler": "theta1", "cn": "theta0.5", "crank-nicolson": "theta0.5"}
    key = aliases.get(key, key)
    if key == "rk4":
        return RK4()
    m = re.fullmatch(r"theta\s*=?\s*([0-9.eE+-]+)", key)
    if m:
        return Theta(float(m.group(1)))
    raise ValueError(f"unknown method {name!r}; expected theta<value> or rk4")


@dataclass(frozen=True)
class StepperConfig:
    method: Method
    t0: float
    tf: float
    num_steps: int
    newton: NewtonOptions = NewtonOptions()

    def __post_init__(self):
        if self.num_steps < 1:
            raise ValueError("num_steps must be positive")
        if not self.tf > self.t0:
            raise ValueError("need tf > t0")

    @property
    def h(self) -> float:
        return (self.tf - self.t0) / self.num_steps

    def time(self, n: int) -> float:
        return self.t0 + (self.tf - self.t0) * n / self.num_steps

    @property
    def times(self) -> np.ndarray:
        return np.array([self.time(n) for n in range(self.num_steps + 1)])


@dataclass
class StepRecord:
    """Everything about step n -> n+1 the derivative sweeps consume.

    ``stages`` is (f(u_n), f(u_{n+1})) for theta methods and
    (Y_1..Y_s, K_1..K_s) for explicit RK.  ``w``/``w_next`` carry a
    directional tangent when a second-order sweep needs one.
    """

    n: int
    t: float
    h: float
    u: np.ndarray
    u_next: np.ndarray
    stages: tuple
    q: float = 0.0
    q_next: float = 0.0
    theta: Optional[float] = None
    newton: Optional[NewtonStats] = field(default=None, compare=False, repr=False)
    w: Optional[np.ndarray] = None
    w_next: Optional[np.ndarray] = None

    @property
    def is_theta(self) -> bool:
        return self.theta is not None

    def stage_states(self) -> tuple:
        """Y_1..Y_s for RK records."""
        s = len(self.stages) // 2
        return self.stages[:s]


class StepFailure(RuntimeError):
    """A forward step failed; ``partial`` holds the trajectory so far."""

    def __init__(self, step: int, cause: Exception, partial: Optional["Trajectory"] = None):
        super().__init__(f"step {step} failed: {cause}")
        self.step = step
        self.cause = cause
        self.partial = partial


def _empty(p) -> np.ndarray:
    return np.zeros(0) if p is None else np.asarray(p, dtype=float)


def _mass_factor(problem: DAEProblem) -> Factorization:
    try:
        return Factorization(problem.mass)
    except SingularMatrixError as exc:
        raise SingularMatrixError("explicit theta step needs a nonsingular mass matrix") from exc


def theta_step(
    problem: DAEProblem,
    t: float,
    h: float,
    u: np.ndarray,
    theta: float,
    p=None,
    *,
    objective: Optional[Objective] = None,
    q: float = 0.0,
    n: int = 0,
    opts: NewtonOptions = NewtonOptions(),
) -> tuple[np.ndarray, StepRecord]:
    """One theta-method step from (t, u)."""
    p = _empty(p)
    u = np.asarray(u, dtype=float)
    t_next = t + h
    f_n = problem.f(t, u, p)
    known = problem.mass_matvec(u) + h * (1.0 - theta) * f_n
    stats = None
    if theta == 0.0:
        u_next = known.copy() if problem.identity_mass else _mass_factor(problem).solve(known)
    else:
        weight = h * theta

        def residual(x):
            return problem.mass_matvec(x) - weight * problem.f(t_next, x, p) - known

        def jacobian(x):
            return ShiftedJacobian(1.0, problem.mass, problem.fu(t_next, x, p), weight)

        u_next, stats = newton_solve(residual, jacobian, u, opts)
    f_next = problem.f(t_next, u_next, p)
    q_next = q
    if objective is not None and objective.has_integral:
        q_next = q + h * ((1.0 - theta) * objective.r(t, u, p) + theta * objective.r(t_next, u_next, p))
    record = StepRecord(n=n, t=t, h=h, u=u, u_next=u_next, stages=(f_n, f_next), q=q, q_next=q_next,
                        theta=theta, newton=stats)
    return u_next, record


def rk4_step(
    problem: DAEProblem,
    t: float,
    h: float,
    u: np.ndarray,
    p=None,
    *,
    objective: Optional[Objective] = None,
    q: float = 0.0,
    n: int = 0,
    tableau: RK4 = RK4(),
) -> tuple[np.ndarray, StepRecord]:
    """One explicit RK step (classic RK4 by default).  Requires M = I."""
    if not problem.identity_mass:
        raise ValueError("explicit RK steps need an identity mass matrix; use a theta method for DAEs")
    p = _empty(p)
    u = np.asarray(u, dtype=float)
    A, b, c = tableau.A, tableau.b, tableau.c
    Y, K = [], []
    for i in range(tableau.stages):
        y = u.copy()
        for j in range(i):
            if A[i][j] != 0.0:
                y = y + h * A[i][j] * K[j]
        Y.append(y)
        K.append(problem.f(t + c[i] * h, y, p))
    u_next = u.copy()
    for i in range(tableau.stages):
        u_next = u_next + h * b[i] * K[i]
    q_next = q
    if objective is not None and objective.has_integral:
        q_next = q + h * sum(b[i] * objective.r(t + c[i] * h, Y[i], p) for i in range(tableau.stages))
    record = StepRecord(n=n, t=t, h=h, u=u, u_next=u_next, stages=tuple(Y) + tuple(K), q=q, q_next=q_next)
    return u_next, record


def take_step(problem, objective, config: StepperConfig, p, n: int, u: np.ndarray, q: float) -> StepRecord:
    """Step n of a fixed-step integration, dispatching on the method."""
    t, h = config.time(n), config.time(n + 1) - config.time(n)
    method = config.method
    try:
        if isinstance(method, Theta):
            _, rec = theta_step(problem, t, h, u, method.theta, p, objective=objective, q=q, n=n, opts=config.newton)
        else:
            _, rec = rk4_step(problem, t, h, u, p, objective=objective, q=q, n=n, tableau=method)
    except (NonlinearSolveError, SingularMatrixError) as exc:
        raise StepFailure(n, exc) from exc
    if not np.all(np.isfinite(rec.u_next)):
        # explicit steps overflow silently when the solution blows up
        raise StepFailure(n, FloatingPointError("non-finite state"))
    return rec


@dataclass
class Trajectory:
    """Full-storage record of a forward integration."""

    config: StepperConfig
    records: list[StepRecord]
    terminal: float = 0.0

    @property
    def num_steps(self) -> int:
        return len(self.records)

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records] + [self.records[-1].t + self.records[-1].h])

    @property
    def states(self) -> list[np.ndarray]:
        return [r.u for r in self.records] + [self.records[-1].u_next]

    @property
    def final_state(self) -> np.ndarray:
        return self.records[-1].u_next

    @property
    def integral(self) -> float:
        return self.records[-1].q_next

    @property
    def cost(self) -> float:
        return self.terminal + self.integral

    def provide_step(self, n: int) -> StepRecord:
        return self.records[n]

    def to_csv(self, path) -> None:
        """Write one row per time level: step, time, u_0..u_{N_d-1}, q."""
        times = self.times
        states = self.states
        qs = [r.q for r in self.records] + [self.integral]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "time"] + [f"u{i}" for i in range(states[0].size)] + ["q"])
            for n, (t, u, q) in enumerate(zip(times, states, qs)):
                writer.writerow([n, repr(float(t))] + [repr(float(x)) for x in u] + [repr(float(q))])


def integrate(
    problem: DAEProblem,
    objective: Optional[Objective],
    config: StepperConfig,
    p=None,
    param_map: Optional[ParamMap] = None,
    u0: Optional[np.ndarray] = None,
) -> tuple[Trajectory, float]:
    """Integrate from the initial condition and evaluate psi(u_N) + q_N.

    The initial state comes from ``param_map`` (evaluated at p) or ``u0``.
    """
    p = _empty(p)
    if param_map is not None:
        u = param_map.initial_state(p)
    elif u0 is not None:
        u = np.array(u0, dtype=float)
    else:
        raise ValueError("need param_map or u0")
    records: list[StepRecord] = []
    q = 0.0
    for n in range(config.num_steps):
        try:
            rec = take_step(problem, objective, config, p, n, u, q)
        except StepFailure as exc:
            exc.partial = Trajectory(config, records)
            raise
        records.append(rec)
        u, q = rec.u_next, rec.q_next
    traj = Trajectory(config, records)
    if objective is not None:
        traj.terminal = objective.psi(u, p)
    return traj, traj.cost
