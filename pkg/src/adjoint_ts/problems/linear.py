"""Linear dynamics with a quadratic objective: every derivative has a dense
closed form, which makes it the reference case for the derivative sweeps.

    u' = A u + B p,   u_0 = c + L p,   psi = 1/2 (u_N - d).Q (u_N - d)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..forward import StepperConfig, Theta, parse_method
from ..problem import DAEProblem, Objective, ParamMap
from .base import ProblemSetup


@dataclass
class LinearSystem:
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    d: np.ndarray
    c: np.ndarray
    L: np.ndarray

    @classmethod
    def random(cls, nd: int = 4, np_: int = 2, seed: int = 0) -> "LinearSystem":
        rng = np.random.default_rng(seed)
        A = -np.eye(nd) + 0.3 * rng.normal(size=(nd, nd))
        X = rng.normal(size=(nd, nd))
        return cls(A, rng.normal(size=(nd, np_)), X @ X.T / nd + np.eye(nd), rng.normal(size=nd),
                   rng.normal(size=nd), rng.normal(size=(nd, np_)))

    @property
    def nd(self) -> int:
        return self.A.shape[0]

    @property
    def np(self) -> int:
        return self.B.shape[1]

    def problem(self) -> DAEProblem:
        zero_d = lambda t, u, p, v1, v2: np.zeros(self.nd)
        zero_p = lambda t, u, p, v1, v2: np.zeros(self.np)
        return DAEProblem(self.nd, self.np, lambda t, u, p: self.A @ u + self.B @ p,
                          jac_state=lambda t, u, p: self.A, jac_param=lambda t, u, p: self.B,
                          hess_uu_vv=zero_d, hess_up_vv=zero_d, hess_pu_vv=zero_p, hess_pp_vv=zero_p,
                          name="linear-test")

    def objective(self) -> Objective:
        return Objective(terminal=lambda u, p: 0.5 * float((u - self.d) @ self.Q @ (u - self.d)),
                         terminal_grad_state=lambda u, p: self.Q @ (u - self.d),
                         terminal_hess_uu=lambda u, p, w: self.Q @ w)

    def param_map(self) -> ParamMap:
        return ParamMap(eta=lambda p: self.c + self.L @ p, eta_jac=lambda p: self.L)

    def step_maps(self, method, h: float):
        """(Phi, Psi) with u_{n+1} = Phi u_n + Psi p for one step."""
        I = np.eye(self.nd)
        if isinstance(method, Theta):
            th = method.theta
            left = np.linalg.inv(I - h * th * self.A)
            return left @ (I + h * (1 - th) * self.A), left @ (h * self.B)
        hA = h * self.A
        poly = I + hA + hA @ hA / 2 + hA @ hA @ hA / 6 + hA @ hA @ hA @ hA / 24
        # affine part: h * (I + hA/2 + (hA)^2/6 + (hA)^3/24) B
        phi1 = I + hA / 2 + hA @ hA / 6 + hA @ hA @ hA / 24
        return poly, h * phi1 @ self.B

    def propagators(self, method, h: float, num_steps: int):
        """Dense (P_u0, P_p): u_N = P_u0 u_0 + P_p p."""
        Phi, Psi = self.step_maps(method, h)
        Pu = np.eye(self.nd)
        Pp = np.zeros((self.nd, self.np))
        for _ in range(num_steps):
            Pu, Pp = Phi @ Pu, Phi @ Pp + Psi
        return Pu, Pp

    def dense_hessian(self, method, h: float, num_steps: int) -> np.ndarray:
        """Exact Hessian of psi w.r.t. p: P^T Q P with P = P_u0 L + P_p."""
        Pu, Pp = self.propagators(method, h, num_steps)
        P = Pu @ self.L + Pp
        return P.T @ self.Q @ P


def linear_setup(method: str = "theta1", num_steps: int = 10, seed: int = 0, dim_state: int = 4,
                 dim_param: int = 2, **_ignored) -> ProblemSetup:
    system = LinearSystem.random(dim_state, dim_param, seed)
    config = StepperConfig(parse_method(method), 0.0, 1.0, num_steps)
    return ProblemSetup("linear-test", system.problem(), system.objective(), system.param_map(), config,
                        np.zeros(dim_param), "param", model=system)
