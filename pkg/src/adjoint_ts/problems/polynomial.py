"""Random polynomial systems with exact first and second derivatives.

    f(t, u, p) = A u + B p + T(u, u) + W(u, p) + P(p, p) + e * u^3 + sin(t) g
    eta(p)     = c + L p + Z(p, p)

with quadratic terminal and integrand terms coupling u and p.  Used to check
duality and Hessian identities on problems with every derivative block
active.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..forward import StepperConfig, parse_method
from ..problem import DAEProblem, Objective, ParamMap
from .base import ProblemSetup


def _sym(T: np.ndarray) -> np.ndarray:
    """Symmetrize the last two axes of a 3-tensor."""
    return T + np.swapaxes(T, 1, 2)


@dataclass
class QuadraticForm:
    """phi(t, u, p) = 1/2 u.Q u + c.u + u.G p + 1/2 p.R p + sin(t) k.u"""

    Q: np.ndarray
    c: np.ndarray
    G: np.ndarray
    R: np.ndarray
    k: np.ndarray

    @classmethod
    def random(cls, rng, nd: int, np_: int, scale: float = 1.0) -> "QuadraticForm":
        Q = rng.normal(size=(nd, nd))
        R = rng.normal(size=(np_, np_))
        return cls(scale * (Q + Q.T) / 2, scale * rng.normal(size=nd), scale * rng.normal(size=(nd, np_)) / 2,
                   scale * (R + R.T) / 2, scale * rng.normal(size=nd))

    def value(self, t, u, p):
        return float(0.5 * u @ self.Q @ u + self.c @ u + u @ self.G @ p + 0.5 * p @ self.R @ p
                     + np.sin(t) * (self.k @ u))

    def grad_u(self, t, u, p):
        return self.Q @ u + self.c + self.G @ p + np.sin(t) * self.k

    def grad_p(self, t, u, p):
        return self.G.T @ u + self.R @ p

    def objective_terms(self, prefix: str) -> dict:
        if prefix == "terminal":
            return dict(terminal=lambda u, p: self.value(0.0, u, p),
                        terminal_grad_state=lambda u, p: self.grad_u(0.0, u, p),
                        terminal_grad_param=lambda u, p: self.grad_p(0.0, u, p),
                        terminal_hess_uu=lambda u, p, w: self.Q @ w,
                        terminal_hess_up=lambda u, p, v: self.G @ v,
                        terminal_hess_pu=lambda u, p, w: self.G.T @ w,
                        terminal_hess_pp=lambda u, p, v: self.R @ v)
        return dict(integrand=self.value, integrand_grad_state=self.grad_u, integrand_grad_param=self.grad_p,
                    integrand_hess_uu=lambda t, u, p, w: self.Q @ w,
                    integrand_hess_up=lambda t, u, p, v: self.G @ v,
                    integrand_hess_pu=lambda t, u, p, w: self.G.T @ w,
                    integrand_hess_pp=lambda t, u, p, v: self.R @ v)


class PolynomialSystem:
    def __init__(self, nd: int, np_: int, rng: np.random.Generator, coupling: float = 0.2):
        self.nd, self.np = nd, np_
        self.A = -np.eye(nd) + coupling * rng.normal(size=(nd, nd))
        self.B = rng.normal(size=(nd, np_))
        self.T = coupling * rng.normal(size=(nd, nd, nd))
        self.W = coupling * rng.normal(size=(nd, nd, np_))
        self.P = coupling * rng.normal(size=(nd, np_, np_))
        self.e = -coupling * rng.uniform(size=nd)
        self.g = rng.normal(size=nd)
        self.Ts, self.Ps = _sym(self.T), _sym(self.P)

    def rhs(self, t, u, p):
        return (self.A @ u + self.B @ p + np.einsum("lij,i,j->l", self.T, u, u)
                + np.einsum("lij,i,j->l", self.W, u, p) + np.einsum("ljk,j,k->l", self.P, p, p)
                + self.e * u**3 + np.sin(t) * self.g)

    def jac_state(self, t, u, p):
        return (self.A + np.einsum("lij,j->li", self.Ts, u) + np.einsum("lij,j->li", self.W, p)
                + np.diag(3.0 * self.e * u**2))

    def jac_param(self, t, u, p):
        return self.B + np.einsum("lij,i->lj", self.W, u) + np.einsum("ljk,k->lj", self.Ps, p)

    def hess_uu(self, t, u, p, v1, v2):
        return np.einsum("l,lij,j->i", v1, self.Ts, v2) + v1 * 6.0 * self.e * u * v2

    def hess_up(self, t, u, p, v1, v2):
        return np.einsum("l,lij,j->i", v1, self.W, v2)

    def hess_pu(self, t, u, p, v1, v2):
        return np.einsum("l,lij,i->j", v1, self.W, v2)

    def hess_pp(self, t, u, p, v1, v2):
        return np.einsum("l,ljk,k->j", v1, self.Ps, v2)

    def problem(self, mass=None) -> DAEProblem:
        return DAEProblem(self.nd, self.np, self.rhs, mass, self.jac_state, self.jac_param,
                          self.hess_uu, self.hess_up, self.hess_pu, self.hess_pp, name="polynomial")


def quadratic_param_map(rng, nd: int, np_: int, scale: float = 0.3) -> ParamMap:
    c = rng.normal(size=nd)
    L = rng.normal(size=(nd, np_))
    Zs = _sym(scale * rng.normal(size=(nd, np_, np_)))
    Z = Zs / 2.0
    return ParamMap(eta=lambda p: c + L @ p + np.einsum("ljk,j,k->l", Z, p, p),
                    eta_jac=lambda p: L + np.einsum("ljk,k->lj", Zs, p),
                    eta_hess_vec=lambda p, lam, sigma: np.einsum("l,ljk,k->j", lam, Zs, sigma))


MASS_KINDS = ("identity", "spd", "dae")


def random_mass(rng, nd: int, kind: str):
    if kind == "identity":
        return None
    if kind == "spd":
        X = rng.normal(size=(nd, nd))
        return np.eye(nd) + 0.2 * X @ X.T / nd
    if kind == "dae":
        M = np.eye(nd)
        M[-1, -1] = 0.0
        return M
    raise ValueError(f"mass kind must be one of {MASS_KINDS}")


def polynomial_setup(seed: int = 0, method: str = "theta1", dim_state: int = None, dim_param: int = None,
                     mass: str = "identity", num_steps: int = 8, tf: float = 1.0, **_ignored) -> ProblemSetup:
    """A random member of the suite; sizes default to N_d in [2, 8], N_p in [1, 4]."""
    rng = np.random.default_rng(seed)
    nd = dim_state or int(rng.integers(2, 9))
    np_ = dim_param or int(rng.integers(1, 5))
    system = PolynomialSystem(nd, np_, rng)
    if mass == "dae":
        # a strongly stable algebraic row keeps the constraint uniquely solvable
        system.A[-1, -1] = -3.0
    M = random_mass(rng, nd, mass)
    problem = system.problem(M)
    terms = {}
    terms.update(QuadraticForm.random(rng, nd, np_).objective_terms("terminal"))
    terms.update(QuadraticForm.random(rng, nd, np_, 0.5).objective_terms("integrand"))
    objective = Objective(**terms)
    param_map = quadratic_param_map(rng, nd, np_)
    p0 = 0.3 * rng.normal(size=np_)
    config = StepperConfig(parse_method(method), 0.0, tf, num_steps)
    return ProblemSetup("polynomial", problem, objective, param_map, config, p0, "param")
