"""Bound-constrained minimization: projected L-BFGS and projected Newton-CG.

Both take ``fun_grad(x) -> (f, g)``; Newton-CG additionally takes
``hessp(x, v) -> H v``.  Convergence is measured by the projected gradient
norm ||P(x - g) - x||.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


@dataclass(frozen=True)
class Bounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("bounds need matching shapes and lower <= upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)


def _unbounded(n: int) -> Bounds:
    return Bounds(np.full(n, -np.inf), np.full(n, np.inf))


def projected_gradient_norm(x: np.ndarray, g: np.ndarray, bounds: Bounds) -> float:
    return float(np.linalg.norm(bounds.project(x - g) - x))


def active_mask(x: np.ndarray, g: np.ndarray, bounds: Bounds, tol: float = 0.0) -> np.ndarray:
    """Variables at a bound whose gradient pushes them outward."""
    at_lo = (x <= bounds.lower + tol) & (g > 0)
    at_hi = (x >= bounds.upper - tol) & (g < 0)
    return at_lo | at_hi


@dataclass(frozen=True)
class OptimizerOptions:
    gtol: float = 1e-8
    max_iter: int = 200
    memory: int = 10
    c1: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40
    cg_max_iter: Optional[int] = None
    forcing: Optional[Callable[[float], float]] = None


@dataclass
class IterationLog:
    iteration: int
    f: float
    pg_norm: float
    step: float
    fun_evals: int
    hess_products: int = 0


@dataclass
class OptimizeResult:
    x: np.ndarray
    f: float
    g: np.ndarray
    pg_norm: float
    iterations: int
    converged: bool
    message: str
    history: list[IterationLog] = field(default_factory=list)

    def write_history(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "f", "pg_norm", "step", "fun_evals", "hess_products"])
            for h in self.history:
                writer.writerow([h.iteration, repr(h.f), repr(h.pg_norm), repr(h.step), h.fun_evals, h.hess_products])


def _line_search(fun_grad, x, f, g, d, bounds: Bounds, opts: OptimizerOptions):
    """Projected Armijo backtracking.  Returns (x, f, g, alpha, evals) or None."""
    alpha = 1.0
    evals = 0
    for _ in range(opts.max_backtracks):
        x_new = bounds.project(x + alpha * d)
        step = x_new - x
        if not np.any(step):
            return None
        f_new, g_new = fun_grad(x_new)
        evals += 1
        if np.isfinite(f_new) and f_new <= f + opts.c1 * float(g @ step):
            return x_new, float(f_new), np.asarray(g_new, dtype=float), alpha, evals
        alpha *= opts.backtrack
    return None


def lbfgs_minimize(fun_grad, x0, bounds: Optional[Bounds] = None, opts: OptimizerOptions = OptimizerOptions(),
                   callback=None) -> OptimizeResult:
    """Projected L-BFGS: two-loop recursion on the free variables."""
    x = np.array(x0, dtype=float)
    bounds = bounds or _unbounded(x.size)
    x = bounds.project(x)
    f, g = fun_grad(x)
    f, g = float(f), np.asarray(g, dtype=float)
    evals = 1
    pg = projected_gradient_norm(x, g, bounds)
    history = [IterationLog(0, f, pg, 0.0, evals)]
    S: list[np.ndarray] = []
    Y: list[np.ndarray] = []
    message = "maximum iterations reached"
    it = 0
    while pg > opts.gtol:
        if it >= opts.max_iter:
            break
        free = ~active_mask(x, g, bounds)
        q = np.where(free, g, 0.0)
        alphas = []
        for s, y in zip(reversed(S), reversed(Y)):
            rho = 1.0 / float(y[free] @ s[free]) if float(y[free] @ s[free]) > 0 else 0.0
            a = rho * float(s[free] @ q[free])
            alphas.append((a, rho))
            q = q - a * np.where(free, y, 0.0)
        if S:
            yy = float(Y[-1][free] @ Y[-1][free])
            gamma = float(S[-1][free] @ Y[-1][free]) / yy if yy > 0 else 1.0
            if gamma <= 0:
                gamma = 1.0
        else:
            gamma = 1.0 / max(1.0, float(np.linalg.norm(g[free])))
        r = gamma * q
        for (a, rho), s, y in zip(reversed(alphas), S, Y):
            b = rho * float(y[free] @ r[free])
            r = r + (a - b) * np.where(free, s, 0.0)
        d = -np.where(free, r, 0.0)
        if float(g @ d) >= 0:
            S.clear()
            Y.clear()
            d = -np.where(free, g, 0.0) / max(1.0, float(np.linalg.norm(g[free])))
        found = _line_search(fun_grad, x, f, g, d, bounds, opts)
        if found is None:
            if S:
                S.clear()
                Y.clear()
                continue
            message = "line search failed"
            break
        x_new, f_new, g_new, alpha, ne = found
        evals += ne
        s_vec, y_vec = x_new - x, g_new - g
        if float(s_vec @ y_vec) > 1e-12 * float(np.linalg.norm(s_vec) * np.linalg.norm(y_vec)):
            S.append(s_vec)
            Y.append(y_vec)
            if len(S) > opts.memory:
                S.pop(0)
                Y.pop(0)
        x, f, g = x_new, f_new, g_new
        it += 1
        pg = projected_gradient_norm(x, g, bounds)
        history.append(IterationLog(it, f, pg, alpha, evals))
        if callback is not None:
            callback(x, f, g)
    converged = pg <= opts.gtol
    if converged:
        message = "converged"
    return OptimizeResult(x, f, g, pg, it, converged, message, history)


def default_forcing(gnorm: float) -> float:
    return min(0.5, np.sqrt(gnorm))


def _cg(hessp, g: np.ndarray, free: np.ndarray, tol: float, max_iter: int):
    """Truncated CG on H_FF d = -g_F.  Returns (d, products, negative_curvature)."""
    d = np.zeros_like(g)
    r = -np.where(free, g, 0.0)
    pdir = r.copy()
    rr = float(r @ r)
    products = 0
    for k in range(max_iter):
        if np.sqrt(rr) <= tol:
            break
        Hp = np.where(free, hessp(pdir), 0.0)
        products += 1
        curv = float(pdir @ Hp)
        if curv <= 0:
            if k == 0:
                return -np.where(free, g, 0.0), products, True
            return d, products, True
        alpha = rr / curv
        d = d + alpha * pdir
        r = r - alpha * Hp
        rr_new = float(r @ r)
        pdir = r + (rr_new / rr) * pdir
        rr = rr_new
    return d, products, False


def newton_minimize(fun_grad, hessp, x0, bounds: Optional[Bounds] = None,
                    opts: OptimizerOptions = OptimizerOptions(), callback=None) -> OptimizeResult:
    """Projected Newton-CG.

    The active set is frozen for each outer iteration; CG solves the reduced
    Newton system to relative tolerance ``forcing(||g||)`` and falls back to
    steepest descent on negative curvature.
    """
    x = np.array(x0, dtype=float)
    bounds = bounds or _unbounded(x.size)
    x = bounds.project(x)
    forcing = opts.forcing or default_forcing
    f, g = fun_grad(x)
    f, g = float(f), np.asarray(g, dtype=float)
    evals, products = 1, 0
    pg = projected_gradient_norm(x, g, bounds)
    history = [IterationLog(0, f, pg, 0.0, evals, products)]
    cg_max = opts.cg_max_iter or 2 * x.size
    message = "maximum iterations reached"
    it = 0
    while pg > opts.gtol:
        if it >= opts.max_iter:
            break
        free = ~active_mask(x, g, bounds)
        gf = float(np.linalg.norm(g[free]))
        tol = forcing(gf) * gf
        d, k, _ = _cg(lambda v: np.asarray(hessp(x, v), dtype=float), g, free, tol, cg_max)
        products += k
        if float(g @ d) >= 0:
            d = -np.where(free, g, 0.0)
        found = _line_search(fun_grad, x, f, g, d, bounds, opts)
        if found is None:
            message = "line search failed"
            break
        x, f, g, alpha, ne = found
        evals += ne
        it += 1
        pg = projected_gradient_norm(x, g, bounds)
        history.append(IterationLog(it, f, pg, alpha, evals, products))
        if callback is not None:
            callback(x, f, g)
    converged = pg <= opts.gtol
    if converged:
        message = "converged"
    return OptimizeResult(x, f, g, pg, it, converged, message, history)
