"""Gray-Scott reaction-diffusion on a periodic grid over [0, 2]^2.

    u' = D1 lap(u) - u v^2 + gamma (1 - u)
    v' = D2 lap(v) + u v^2 - (gamma + kappa) v

The state stacks u then v (2 n^2 unknowns).  The inverse problem recovers
the initial condition from the final state of a reference run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..forward import StepperConfig, integrate, parse_method
from ..problem import DAEProblem, Objective, ParamMap
from .base import ProblemSetup


@dataclass(frozen=True)
class GrayScottConfig:
    n: int = 32
    D1: float = 8e-5
    D2: float = 4e-5
    gamma: float = 0.024
    kappa: float = 0.06
    t0: float = 0.0
    tf: float = 5.0
    num_steps: int = 10
    length: float = 2.0


def periodic_laplacian(n: int, length: float) -> sp.csr_matrix:
    """Five-point Laplacian on an n x n periodic grid, row-major ordering."""
    dx = length / n
    e = np.ones(n)
    D = sp.diags([e[:-1], -2 * e, e[:-1]], [-1, 0, 1], shape=(n, n), format="lil")
    D[0, n - 1] = 1.0
    D[n - 1, 0] = 1.0
    D = sp.csr_matrix(D)
    I = sp.identity(n, format="csr")
    return sp.csr_matrix((sp.kron(I, D) + sp.kron(D, I)) / dx**2)


class GrayScott:
    def __init__(self, cfg: GrayScottConfig = GrayScottConfig()):
        self.cfg = cfg
        self.m = cfg.n * cfg.n
        self.L = periodic_laplacian(cfg.n, cfg.length)

    def split(self, U):
        return U[: self.m], U[self.m:]

    def rhs(self, t, U, p):
        c = self.cfg
        u, v = self.split(U)
        uvv = u * v * v
        du = c.D1 * (self.L @ u) - uvv + c.gamma * (1.0 - u)
        dv = c.D2 * (self.L @ v) + uvv - (c.gamma + c.kappa) * v
        return np.concatenate([du, dv])

    def jac_state(self, t, U, p):
        c = self.cfg
        u, v = self.split(U)
        I = sp.identity(self.m, format="csr")
        vv, uv2 = sp.diags(v * v), sp.diags(2.0 * u * v)
        return sp.bmat([[c.D1 * self.L - vv - c.gamma * I, -uv2],
                        [vv, c.D2 * self.L + uv2 - (c.gamma + c.kappa) * I]], format="csr")

    def hess_uu(self, t, U, p, a, b):
        # only s = u v^2 is nonlinear; it enters -s in the u rows and +s in the v rows
        u, v = self.split(U)
        au, av = self.split(a)
        bu, bv = self.split(b)
        weight = av - au
        return np.concatenate([weight * 2.0 * v * bv, weight * (2.0 * v * bu + 2.0 * u * bv)])

    def problem(self) -> DAEProblem:
        return DAEProblem(dim_state=2 * self.m, dim_param=0, rhs=self.rhs, jac_state=self.jac_state,
                          hess_uu_vv=self.hess_uu, name="grayscott")

    def grid(self):
        h = self.cfg.length / self.cfg.n
        x = np.arange(self.cfg.n) * h
        return np.meshgrid(x, x, indexing="xy")

    def initial_condition(self) -> np.ndarray:
        X, Y = self.grid()
        inside = (X >= 1.0) & (X <= 1.5) & (Y >= 1.0) & (Y <= 1.5)
        v0 = np.where(inside, np.sin(4 * np.pi * X) ** 2 * np.cos(4 * np.pi * Y) ** 2 / 4.0, 0.0)
        u0 = 1.0 - 2.0 * v0
        return np.concatenate([u0.ravel(), v0.ravel()])


def tracking_objective(target: np.ndarray) -> Objective:
    """psi = |U - target|^2."""
    target = np.asarray(target, dtype=float)
    return Objective(
        terminal=lambda u, p: float(np.sum((u - target) ** 2)),
        terminal_grad_state=lambda u, p: 2.0 * (u - target),
        terminal_hess_uu=lambda u, p, w: 2.0 * np.asarray(w, dtype=float))


def perturbation(gs: GrayScott, amplitude: float = 0.05, seed: int = 0) -> np.ndarray:
    """Smooth random perturbation of the initial condition."""
    rng = np.random.default_rng(seed)
    X, Y = gs.grid()
    fields = []
    for _ in range(2):
        a, b = rng.integers(1, 4, size=2)
        phase = rng.uniform(0, 2 * np.pi, size=2)
        fields.append(amplitude * np.sin(np.pi * a * X + phase[0]) * np.sin(np.pi * b * Y + phase[1]))
    return np.concatenate([f.ravel() for f in fields])


def grayscott_setup(method: str = "theta1", grid: int = 32, num_steps: int = None, amplitude: float = 0.05,
                    seed: int = 0, **_ignored) -> ProblemSetup:
    cfg = GrayScottConfig(n=grid, num_steps=num_steps or GrayScottConfig.num_steps)
    gs = GrayScott(cfg)
    problem = gs.problem()
    config = StepperConfig(parse_method(method), cfg.t0, cfg.tf, cfg.num_steps)
    U0 = gs.initial_condition()
    reference, _ = integrate(problem, None, config, None, u0=U0)
    objective = tracking_objective(reference.final_state)
    guess = U0 + perturbation(gs, amplitude, seed)
    return ProblemSetup("grayscott", problem, objective, ParamMap(u0=U0), config, np.zeros(0), "initial",
                        None, guess, U0, model=gs)
