"""Problem definitions: the system M u' = f(t, u; p), the objective and the
initial-condition map, plus finite-difference validation of user callbacks.

Callback conventions (numerator layout, all vectors 1-D numpy arrays):

* ``jac_state(t, u, p)`` -> f_u, shape (N_d, N_d); dense, scipy.sparse or a
  ``(rows, cols, vals)`` triplet.
* ``jac_param(t, u, p)`` -> f_p, shape (N_d, N_p).
* ``hess_uu_vv(t, u, p, v1, v2)`` -> sum_l v1_l d2 f_l/du du . v2, length N_d.
* ``hess_up_vv(t, u, p, v1, v2)`` -> sum_l v1_l d2 f_l/du dp . v2 with
  v2 in R^{N_p}, length N_d.
* ``hess_pu_vv(t, u, p, v1, v2)`` -> sum_l v1_l d2 f_l/dp du . v2 with
  v2 in R^{N_d}, length N_p.
* ``hess_pp_vv(t, u, p, v1, v2)`` -> length N_p.

The objective Hessian products follow the same pattern with the leading
``v1`` dropped (the functional is scalar).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

EPS = np.finfo(float).eps
CBRT_EPS = EPS ** (1.0 / 3.0)

Callback = Optional[Callable[..., object]]


class MissingCallbackError(ValueError):
    """Raised at configuration time when an operation needs absent callbacks."""

    def __init__(self, operation: str, missing: list[str]):
        self.operation = operation
        self.missing = list(missing)
        super().__init__(f"{operation} requires callbacks that were not supplied: {', '.join(missing)}")


def as_matrix(value, shape: tuple[int, int]):
    """Normalize a user-returned Jacobian to a dense ndarray or CSR matrix."""
    if isinstance(value, tuple) and len(value) == 3:
        rows, cols, vals = value
        return sp.csr_matrix((np.asarray(vals, dtype=float), (rows, cols)), shape=shape)
    if sp.issparse(value):
        out = sp.csr_matrix(value, dtype=float)
    else:
        out = np.asarray(value, dtype=float).reshape(shape)
    if out.shape != shape:
        raise ValueError(f"matrix has shape {out.shape}, expected {shape}")
    return out


def fd_step(x: np.ndarray) -> np.ndarray:
    """Per-component central-difference step eps^(1/3) * max(1, |x_i|)."""
    return CBRT_EPS * np.maximum(1.0, np.abs(x))


def fd_jacobian(fun: Callable[[np.ndarray], np.ndarray], x: np.ndarray, m: int) -> np.ndarray:
    """Dense central-difference Jacobian of ``fun`` (R^n -> R^m) at ``x``."""
    x = np.asarray(x, dtype=float)
    steps = fd_step(x)
    jac = np.empty((m, x.size))
    for j in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[j] += steps[j]
        xm[j] -= steps[j]
        # actual spacing after rounding
        jac[:, j] = (np.asarray(fun(xp)) - np.asarray(fun(xm))) / (xp[j] - xm[j])
    return jac


def fd_directional(fun: Callable[[np.ndarray], np.ndarray], x: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Central difference of ``fun`` at ``x`` along ``d``."""
    dnorm = np.linalg.norm(d)
    if dnorm == 0.0:
        return np.zeros_like(np.asarray(fun(x), dtype=float))
    eps = CBRT_EPS * max(1.0, np.linalg.norm(x)) / dnorm
    return (np.asarray(fun(x + eps * d)) - np.asarray(fun(x - eps * d))) / (2.0 * eps)


def _dense(mat) -> np.ndarray:
    return mat.toarray() if sp.issparse(mat) else np.asarray(mat)


@dataclass(frozen=True)
class DAEProblem:
    """The semi-discrete system M u' = f(t, u; p).

    ``mass`` is None for the identity, otherwise a dense or sparse
    (N_d, N_d) matrix that may be singular (DAE).  Missing Jacobians fall back
    to central finite differences; Hessian products have no fallback and are
    demanded eagerly by second-order drivers via :meth:`require_second_order`.
    """

    dim_state: int
    dim_param: int
    rhs: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    mass: object = None
    jac_state: Callback = None
    jac_param: Callback = None
    hess_uu_vv: Callback = None
    hess_up_vv: Callback = None
    hess_pu_vv: Callback = None
    hess_pp_vv: Callback = None
    name: str = "problem"

    def __post_init__(self):
        if self.dim_state < 1:
            raise ValueError("dim_state must be positive")
        if self.dim_param < 0:
            raise ValueError("dim_param must be non-negative")
        if self.mass is not None:
            object.__setattr__(self, "mass", as_matrix(self.mass, (self.dim_state, self.dim_state)))

    # -- first order -----------------------------------------------------
    def f(self, t: float, u: np.ndarray, p: np.ndarray) -> np.ndarray:
        out = np.asarray(self.rhs(t, u, p), dtype=float)
        if out.shape != (self.dim_state,):
            raise ValueError(f"rhs returned shape {out.shape}, expected ({self.dim_state},)")
        return out

    def fu(self, t: float, u: np.ndarray, p: np.ndarray):
        shape = (self.dim_state, self.dim_state)
        if self.jac_state is not None:
            return as_matrix(self.jac_state(t, u, p), shape)
        return fd_jacobian(lambda x: self.f(t, x, p), u, self.dim_state)

    def fp(self, t: float, u: np.ndarray, p: np.ndarray):
        shape = (self.dim_state, self.dim_param)
        if self.dim_param == 0:
            return np.zeros(shape)
        if self.jac_param is not None:
            return as_matrix(self.jac_param(t, u, p), shape)
        return fd_jacobian(lambda x: self.f(t, u, x), p, self.dim_state)

    @property
    def identity_mass(self) -> bool:
        return self.mass is None

    def mass_matvec(self, x: np.ndarray) -> np.ndarray:
        return x.copy() if self.mass is None else self.mass @ x

    def mass_rmatvec(self, x: np.ndarray) -> np.ndarray:
        return x.copy() if self.mass is None else self.mass.T @ x

    # -- second order ----------------------------------------------------
    def missing_second_order(self) -> list[str]:
        needed = ["hess_uu_vv"]
        if self.dim_param > 0:
            needed += ["hess_up_vv", "hess_pu_vv", "hess_pp_vv"]
        return [name for name in needed if getattr(self, name) is None]

    def require_second_order(self) -> None:
        missing = self.missing_second_order()
        if missing:
            raise MissingCallbackError("second-order adjoint", missing)

    def fuu(self, t, u, p, v1, v2) -> np.ndarray:
        return np.asarray(self.hess_uu_vv(t, u, p, v1, v2), dtype=float)

    def fup(self, t, u, p, v1, v2) -> np.ndarray:
        if self.dim_param == 0:
            return np.zeros(self.dim_state)
        return np.asarray(self.hess_up_vv(t, u, p, v1, v2), dtype=float)

    def fpu(self, t, u, p, v1, v2) -> np.ndarray:
        if self.dim_param == 0:
            return np.zeros(0)
        return np.asarray(self.hess_pu_vv(t, u, p, v1, v2), dtype=float)

    def fpp(self, t, u, p, v1, v2) -> np.ndarray:
        if self.dim_param == 0:
            return np.zeros(0)
        return np.asarray(self.hess_pp_vv(t, u, p, v1, v2), dtype=float)


def _zeros_like_param(p):
    return np.zeros(np.shape(p))


@dataclass(frozen=True)
class Objective:
    """psi(u_N; p) + integral of r(t, u; p) over the time window.

    A missing ``*_grad_param`` means the corresponding term has no explicit
    parameter dependence, which also zeroes its mixed and pp Hessian blocks.
    """

    terminal: Callback = None
    terminal_grad_state: Callback = None
    terminal_grad_param: Callback = None
    terminal_hess_uu: Callback = None
    terminal_hess_up: Callback = None
    terminal_hess_pu: Callback = None
    terminal_hess_pp: Callback = None
    integrand: Callback = None
    integrand_grad_state: Callback = None
    integrand_grad_param: Callback = None
    integrand_hess_uu: Callback = None
    integrand_hess_up: Callback = None
    integrand_hess_pu: Callback = None
    integrand_hess_pp: Callback = None

    def __post_init__(self):
        if self.terminal is None and self.integrand is None:
            raise ValueError("objective needs a terminal term, an integrand, or both")
        missing = []
        if self.terminal is not None and self.terminal_grad_state is None:
            missing.append("terminal_grad_state")
        if self.integrand is not None and self.integrand_grad_state is None:
            missing.append("integrand_grad_state")
        if missing:
            raise MissingCallbackError("objective", missing)

    @property
    def has_integral(self) -> bool:
        return self.integrand is not None

    def missing_second_order(self) -> list[str]:
        missing = []
        if self.terminal is not None:
            names = ["terminal_hess_uu"]
            if self.terminal_grad_param is not None:
                names += ["terminal_hess_up", "terminal_hess_pu", "terminal_hess_pp"]
            missing += [n for n in names if getattr(self, n) is None]
        if self.integrand is not None:
            names = ["integrand_hess_uu"]
            if self.integrand_grad_param is not None:
                names += ["integrand_hess_up", "integrand_hess_pu", "integrand_hess_pp"]
            missing += [n for n in names if getattr(self, n) is None]
        return missing

    def require_second_order(self) -> None:
        missing = self.missing_second_order()
        if missing:
            raise MissingCallbackError("second-order adjoint", missing)

    # terminal term
    def psi(self, u, p) -> float:
        return 0.0 if self.terminal is None else float(self.terminal(u, p))

    def psi_u(self, u, p) -> np.ndarray:
        if self.terminal is None:
            return np.zeros_like(u)
        return np.asarray(self.terminal_grad_state(u, p), dtype=float)

    def psi_p(self, u, p) -> np.ndarray:
        if self.terminal_grad_param is None:
            return _zeros_like_param(p)
        return np.asarray(self.terminal_grad_param(u, p), dtype=float)

    def psi_uu(self, u, p, w) -> np.ndarray:
        if self.terminal is None:
            return np.zeros_like(u)
        return np.asarray(self.terminal_hess_uu(u, p, w), dtype=float)

    def psi_up(self, u, p, v2) -> np.ndarray:
        if self.terminal_grad_param is None:
            return np.zeros_like(u)
        return np.asarray(self.terminal_hess_up(u, p, v2), dtype=float)

    def psi_pu(self, u, p, w) -> np.ndarray:
        if self.terminal_grad_param is None:
            return _zeros_like_param(p)
        return np.asarray(self.terminal_hess_pu(u, p, w), dtype=float)

    def psi_pp(self, u, p, v2) -> np.ndarray:
        if self.terminal_grad_param is None:
            return _zeros_like_param(p)
        return np.asarray(self.terminal_hess_pp(u, p, v2), dtype=float)

    # integrand
    def r(self, t, u, p) -> float:
        return 0.0 if self.integrand is None else float(self.integrand(t, u, p))

    def r_u(self, t, u, p) -> np.ndarray:
        if self.integrand is None:
            return np.zeros_like(u)
        return np.asarray(self.integrand_grad_state(t, u, p), dtype=float)

    def r_p(self, t, u, p) -> np.ndarray:
        if self.integrand_grad_param is None:
            return _zeros_like_param(p)
        return np.asarray(self.integrand_grad_param(t, u, p), dtype=float)

    def r_uu(self, t, u, p, w) -> np.ndarray:
        if self.integrand is None:
            return np.zeros_like(u)
        return np.asarray(self.integrand_hess_uu(t, u, p, w), dtype=float)

    def r_up(self, t, u, p, v2) -> np.ndarray:
        if self.integrand_grad_param is None:
            return np.zeros_like(u)
        return np.asarray(self.integrand_hess_up(t, u, p, v2), dtype=float)

    def r_pu(self, t, u, p, w) -> np.ndarray:
        if self.integrand_grad_param is None:
            return _zeros_like_param(p)
        return np.asarray(self.integrand_hess_pu(t, u, p, w), dtype=float)

    def r_pp(self, t, u, p, v2) -> np.ndarray:
        if self.integrand_grad_param is None:
            return _zeros_like_param(p)
        return np.asarray(self.integrand_hess_pp(t, u, p, v2), dtype=float)


@dataclass(frozen=True)
class ParamMap:
    """Initial condition u_0 = eta(p).

    ``eta_jac`` may return a dense array, a sparse matrix or anything
    supporting ``@`` and ``.T``.  ``eta_hess_vec(p, lam, sigma)`` returns the
    contraction lam^T eta_pp sigma in R^{N_p}.  With only ``u0`` given the
    initial condition is independent of p and all derivatives vanish.
    """

    u0: Optional[np.ndarray] = None
    eta: Callback = None
    eta_jac: Callback = None
    eta_hess_vec: Callback = None

    def __post_init__(self):
        if (self.u0 is None) == (self.eta is None):
            raise ValueError("give exactly one of u0 or eta")

    @classmethod
    def identity(cls, dim: int) -> "ParamMap":
        """u_0 = p, the inverse-initial-condition setting."""
        return cls(eta=lambda p: np.array(p, dtype=float), eta_jac=lambda p: sp.identity(dim, format="csr"))

    def initial_state(self, p) -> np.ndarray:
        if self.eta is None:
            return np.array(self.u0, dtype=float)
        return np.array(self.eta(p), dtype=float)

    def depends_on_p(self) -> bool:
        return self.eta_jac is not None

    def jvp(self, p, sigma) -> np.ndarray:
        """eta_p sigma."""
        u0 = self.initial_state(p)
        if self.eta_jac is None:
            return np.zeros_like(u0)
        return np.asarray(self.eta_jac(p) @ sigma, dtype=float)

    def vjp(self, p, lam) -> np.ndarray:
        """eta_p^T lam."""
        if self.eta_jac is None:
            return np.zeros(np.shape(p))
        return np.asarray(self.eta_jac(p).T @ lam, dtype=float)

    def hess_vec(self, p, lam, sigma) -> np.ndarray:
        if self.eta_hess_vec is None:
            return np.zeros(np.shape(p))
        return np.asarray(self.eta_hess_vec(p, lam, sigma), dtype=float)


# ---------------------------------------------------------------------------
# derivative validation
# ---------------------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    discrepancy: float
    passed: bool
    message: str = ""


@dataclass
class ValidationReport:
    tol: float
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def __str__(self) -> str:
        lines = [f"{'callback':<24}{'max rel. discrepancy':>22}  status"]
        for c in self.checks:
            status = "ok" if c.passed else "FAIL"
            extra = f"  ({c.message})" if c.message else ""
            lines.append(f"{c.name:<24}{c.discrepancy:>22.3e}  {status}{extra}")
        return "\n".join(lines)


def _relative(a, b) -> float:
    a = _dense(a)
    b = _dense(b)
    scale = max(np.max(np.abs(b), initial=0.0), np.max(np.abs(a), initial=0.0))
    diff = np.max(np.abs(a - b), initial=0.0)
    if scale == 0.0:
        return float(diff)
    return float(diff / scale)


def _check(report: ValidationReport, name: str, compute) -> None:
    try:
        analytic, approx = compute()
        analytic = _dense(analytic)
        approx = _dense(approx)
        if not (np.all(np.isfinite(analytic)) and np.all(np.isfinite(approx))):
            bad = np.argwhere(~np.isfinite(np.atleast_1d(analytic)))
            where = f"non-finite entries at {bad[:3].tolist()}" if bad.size else "non-finite FD values"
            report.checks.append(CheckResult(name, math.inf, False, where))
            return
        rel = _relative(analytic, approx)
        report.checks.append(CheckResult(name, rel, rel <= report.tol))
    except Exception as exc:  # noqa: BLE001 - report, don't crash
        report.checks.append(CheckResult(name, math.inf, False, f"{type(exc).__name__}: {exc}"))


def validate_derivatives(
    problem: DAEProblem,
    objective: Optional[Objective],
    point: tuple[float, np.ndarray, np.ndarray],
    tol: float = 1e-6,
    seed: int = 0,
) -> ValidationReport:
    """Compare every supplied derivative callback with central differences
    of its parent at ``point = (t, u, p)``.

    Hessian products are checked with random directions against the
    directional difference of the corresponding Jacobian transpose product.
    """
    t, u, p = point
    u = np.asarray(u, dtype=float)
    p = np.asarray(p, dtype=float)
    rng = np.random.default_rng(seed)
    nd, npar = problem.dim_state, problem.dim_param
    report = ValidationReport(tol=tol)
    v1 = rng.standard_normal(nd)
    wu = rng.standard_normal(nd)
    wp = rng.standard_normal(npar)

    if problem.jac_state is not None:
        _check(report, "jac_state", lambda: (problem.fu(t, u, p), fd_jacobian(lambda x: problem.f(t, x, p), u, nd)))
    if problem.jac_param is not None and npar > 0:
        _check(report, "jac_param", lambda: (problem.fp(t, u, p), fd_jacobian(lambda x: problem.f(t, u, x), p, nd)))
    if problem.hess_uu_vv is not None:
        _check(report, "hess_uu_vv", lambda: (
            problem.fuu(t, u, p, v1, wu),
            fd_directional(lambda x: problem.fu(t, x, p).T @ v1, u, wu)))
    if npar > 0:
        if problem.hess_up_vv is not None:
            _check(report, "hess_up_vv", lambda: (
                problem.fup(t, u, p, v1, wp),
                fd_directional(lambda x: problem.fu(t, u, x).T @ v1, p, wp)))
        if problem.hess_pu_vv is not None:
            _check(report, "hess_pu_vv", lambda: (
                problem.fpu(t, u, p, v1, wu),
                fd_directional(lambda x: problem.fp(t, x, p).T @ v1, u, wu)))
        if problem.hess_pp_vv is not None:
            _check(report, "hess_pp_vv", lambda: (
                problem.fpp(t, u, p, v1, wp),
                fd_directional(lambda x: problem.fp(t, u, x).T @ v1, p, wp)))

    if objective is None:
        return report
    ob = objective
    if ob.terminal is not None:
        _check(report, "terminal_grad_state", lambda: (
            ob.psi_u(u, p), fd_jacobian(lambda x: np.atleast_1d(ob.psi(x, p)), u, 1)[0]))
        if ob.terminal_grad_param is not None and npar > 0:
            _check(report, "terminal_grad_param", lambda: (
                ob.psi_p(u, p), fd_jacobian(lambda x: np.atleast_1d(ob.psi(u, x)), p, 1)[0]))
        if ob.terminal_hess_uu is not None:
            _check(report, "terminal_hess_uu", lambda: (
                ob.psi_uu(u, p, wu), fd_directional(lambda x: ob.psi_u(x, p), u, wu)))
        if ob.terminal_grad_param is not None and npar > 0:
            if ob.terminal_hess_up is not None:
                _check(report, "terminal_hess_up", lambda: (
                    ob.psi_up(u, p, wp), fd_directional(lambda x: ob.psi_u(u, x), p, wp)))
            if ob.terminal_hess_pu is not None:
                _check(report, "terminal_hess_pu", lambda: (
                    ob.psi_pu(u, p, wu), fd_directional(lambda x: ob.psi_p(x, p), u, wu)))
            if ob.terminal_hess_pp is not None:
                _check(report, "terminal_hess_pp", lambda: (
                    ob.psi_pp(u, p, wp), fd_directional(lambda x: ob.psi_p(u, x), p, wp)))
    if ob.integrand is not None:
        _check(report, "integrand_grad_state", lambda: (
            ob.r_u(t, u, p), fd_jacobian(lambda x: np.atleast_1d(ob.r(t, x, p)), u, 1)[0]))
        if ob.integrand_grad_param is not None and npar > 0:
            _check(report, "integrand_grad_param", lambda: (
                ob.r_p(t, u, p), fd_jacobian(lambda x: np.atleast_1d(ob.r(t, u, x)), p, 1)[0]))
        if ob.integrand_hess_uu is not None:
            _check(report, "integrand_hess_uu", lambda: (
                ob.r_uu(t, u, p, wu), fd_directional(lambda x: ob.r_u(t, x, p), u, wu)))
        if ob.integrand_grad_param is not None and npar > 0:
            if ob.integrand_hess_up is not None:
                _check(report, "integrand_hess_up", lambda: (
                    ob.r_up(t, u, p, wp), fd_directional(lambda x: ob.r_u(t, u, x), p, wp)))
            if ob.integrand_hess_pu is not None:
                _check(report, "integrand_hess_pu", lambda: (
                    ob.r_pu(t, u, p, wu), fd_directional(lambda x: ob.r_p(t, x, p), u, wu)))
            if ob.integrand_hess_pp is not None:
                _check(report, "integrand_hess_pp", lambda: (
                    ob.r_pp(t, u, p, wp), fd_directional(lambda x: ob.r_p(t, u, x), p, wp)))
    return report
