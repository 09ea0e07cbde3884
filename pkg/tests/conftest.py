import numpy as np
import pytest

from adjoint_ts import DAEProblem, Objective, ParamMap
from adjoint_ts.forward import StepFailure, integrate

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def scalar_problem(rhs, jac, hess=None, mass=None):
    """One-dimensional autonomous problem without parameters."""
    return DAEProblem(1, 0, lambda t, u, p: np.atleast_1d(rhs(u)), mass=mass,
                      jac_state=lambda t, u, p: np.atleast_2d(jac(u)),
                      hess_uu_vv=None if hess is None else (lambda t, u, p, a, b: a * hess(u) * b))


def terminal_value():
    """psi(u) = u_0 (first component)."""
    def grad(u, p):
        g = np.zeros_like(u)
        g[0] = 1.0
        return g
    return Objective(terminal=lambda u, p: float(u[0]), terminal_grad_state=grad,
                     terminal_hess_uu=lambda u, p, w: np.zeros_like(w))


def half_square():
    """psi(u) = |u|^2 / 2."""
    return Objective(terminal=lambda u, p: 0.5 * float(u @ u), terminal_grad_state=lambda u, p: u.copy(),
                     terminal_hess_uu=lambda u, p, w: np.array(w, dtype=float))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def decay():
    """u' = -u."""
    return scalar_problem(lambda u: -u, lambda u: -np.eye(1))


@pytest.fixture
def cubic():
    """u' = -u^3."""
    return scalar_problem(lambda u: -u**3, lambda u: np.diag(-3 * u**2), hess=lambda u: -6 * u)


@pytest.fixture
def unit_start():
    return ParamMap(u0=np.array([1.0]))


def solvable(setup) -> bool:
    """Whether the forward solve exists; random polynomial problems can blow up on [t0, tf]."""
    try:
        integrate(setup.problem, setup.objective, setup.config, setup.p0, setup.param_map)
    except StepFailure:
        return False
    return True
