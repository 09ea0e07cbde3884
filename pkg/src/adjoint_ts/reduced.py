"""The reduced functional x -> cost(x) with its gradient and Hessian products."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .adjoint import GradientResult, gradient
from .forward import integrate
from .hessian import HVPResult, hessian_vector_product
from .problem import ParamMap
from .problems.base import ProblemSetup


class ReducedFunctional:
    """Wraps a :class:`ProblemSetup` as a function of the control ``x``.

    For ``target='param'`` x is p; for ``target='initial'`` x is u_0 and p
    stays at ``setup.p0``.  ``evaluations`` counts forward solves.
    """

    def __init__(self, setup: ProblemSetup, checkpointing=None):
        self.setup = setup
        self.checkpointing = checkpointing
        self.evaluations = 0
        self.hessian_products = 0

    def _args(self, x):
        s = self.setup
        x = np.asarray(x, dtype=float)
        if s.target == "param":
            return x, s.param_map
        return np.asarray(s.p0, dtype=float), ParamMap(u0=x)

    def cost(self, x) -> float:
        p, pm = self._args(x)
        self.evaluations += 1
        _, value = integrate(self.setup.problem, self.setup.objective, self.setup.config, p, pm)
        return value

    def gradient_result(self, x) -> GradientResult:
        p, pm = self._args(x)
        self.evaluations += 1
        s = self.setup
        return gradient(s.problem, s.objective, s.config, p, pm, s.target, self.checkpointing)

    def fun_grad(self, x):
        res = self.gradient_result(x)
        return res.cost, res.gradient

    def hvp_result(self, x, sigma) -> HVPResult:
        p, pm = self._args(x)
        self.evaluations += 1
        self.hessian_products += 1
        s = self.setup
        return hessian_vector_product(s.problem, s.objective, s.config, p, pm, sigma, s.target, self.checkpointing)

    def hessp(self, x, sigma) -> np.ndarray:
        return self.hvp_result(x, sigma).hvp


def taylor_remainders(fun: ReducedFunctional, x, direction, steps, grad: Optional[np.ndarray] = None):
    """Rows (h, |J(x+h d) - J(x)|, |J(x+h d) - J(x) - h d.g|) for each h."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(direction, dtype=float)
    res = fun.gradient_result(x)
    g = res.gradient if grad is None else grad
    base = res.cost
    rows = []
    for h in steps:
        val = fun.cost(x + h * d)
        rows.append((h, abs(val - base), abs(val - base - h * float(d @ g))))
    return rows


def convergence_orders(steps, errors) -> list[float]:
    """log(e_i / e_{i+1}) / log(h_i / h_{i+1}) for consecutive rows."""
    out = []
    for (h0, e0), (h1, e1) in zip(zip(steps, errors), zip(steps[1:], errors[1:])):
        if e0 <= 0 or e1 <= 0:
            out.append(float("nan"))
        else:
            out.append(float(np.log(e0 / e1) / np.log(h0 / h1)))
    return out
