import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from adjoint_ts import DAEProblem, Objective, ParamMap
from adjoint_ts.adjoint import gradient, solve_adjoint
from adjoint_ts.forward import StepperConfig, Theta, integrate, parse_method
from adjoint_ts.hessian import hessian_vector_product, soa_forward_pass, soa_terminal, solve_second_order
from adjoint_ts.problem import MissingCallbackError
from adjoint_ts.problems import get_setup
from adjoint_ts.reduced import ReducedFunctional, convergence_orders
from adjoint_ts.tlm import propagate_tlm

from conftest import half_square, scalar_problem, solvable

METHODS = ("theta1", "theta0.5", "rk4")


def _hvp(setup, sigma, x=None):
    fun = ReducedFunctional(setup)
    return fun.hessp(setup.p0 if x is None else x, sigma)


def fd_gradient_orders(fun, x, sigma, steps):
    hv = fun.hessp(x, sigma)
    errors = []
    for h in steps:
        fd = (fun.fun_grad(x + h * sigma)[1] - fun.fun_grad(x - h * sigma)[1]) / (2 * h)
        errors.append(np.linalg.norm(fd - hv))
    return convergence_orders(steps, errors), errors


@pytest.mark.parametrize("method", METHODS)
def test_zero_direction(method):
    s = get_setup("polynomial", seed=8, method=method)
    traj, _ = integrate(s.problem, s.objective, s.config, s.p0, s.param_map)
    zero_w, zero_v = np.zeros(s.problem.dim_state), np.zeros(s.problem.dim_param)
    soa_forward_pass(s.problem, s.objective, traj, zero_w, zero_v, s.p0)
    assert all(not np.any(r.w) and not np.any(r.w_next) for r in traj.records)
    first, second = solve_second_order(s.problem, s.objective, traj, zero_v, s.p0)
    assert not np.any(second.Lam) and not np.any(second.Gam)
    assert second.Theta == 0.0


@pytest.mark.parametrize("method", METHODS)
def test_linear_quadratic_dense_oracle(method, rng):
    s = get_setup("linear-test", method=method, num_steps=12)
    H = s.model.dense_hessian(s.config.method, s.config.h, s.config.num_steps)
    for _ in range(3):
        sigma = rng.normal(size=s.problem.dim_param)
        hv = _hvp(s, sigma, rng.normal(size=s.problem.dim_param))
        assert np.linalg.norm(hv - H @ sigma) <= 1e-10 * np.linalg.norm(H @ sigma)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from(METHODS), st.sampled_from(("identity", "spd", "dae")))
def test_symmetry_on_random_polynomials(seed, method, mass):
    if method == "rk4":
        mass = "identity"
    s = get_setup("polynomial", seed=seed, method=method, mass=mass)
    assume(solvable(s))
    rng = np.random.default_rng(seed + 1)
    a, b = rng.normal(size=(2, s.problem.dim_param))
    left, right = a @ _hvp(s, b), b @ _hvp(s, a)
    assert abs(left - right) <= 1e-8 * max(abs(left), abs(right), 1e-300)


def test_symmetry_aircraft(rng):
    s = get_setup("aircraft")
    a, b = rng.normal(size=(2, s.p0.size))
    left, right = a @ _hvp(s, b), b @ _hvp(s, a)
    assert abs(left - right) <= 1e-8 * max(abs(left), abs(right))


@pytest.mark.parametrize("method", METHODS)
@pytest.mark.parametrize("seed", [0, 3])
def test_fd_of_gradient_second_order(method, seed):
    s = get_setup("polynomial", seed=seed, method=method)
    sigma = np.random.default_rng(seed).normal(size=s.problem.dim_param)
    orders, errors = fd_gradient_orders(ReducedFunctional(s), s.p0, sigma, [1e-2, 1e-3])
    assert orders[0] > 1.8 or errors[-1] < 1e-10, (orders, errors)


@pytest.mark.parametrize("method", METHODS)
def test_scalar_cubic_hvp(method):
    cubic = scalar_problem(lambda u: -u**3, lambda u: np.diag(-3 * u**2), hess=lambda u: -6 * u)
    config = StepperConfig(parse_method(method), 0.0, 1.0, 10)
    setup_like = dict(problem=cubic, objective=half_square(), config=config)
    x = np.array([0.9])
    g = lambda y: gradient(p=np.zeros(0), param_map=ParamMap(u0=y), target="initial", **setup_like).gradient
    hv = hessian_vector_product(p=np.zeros(0), param_map=ParamMap(u0=x), sigma=np.ones(1), target="initial",
                                **setup_like).hvp
    errs = [abs((g(x + h) - g(x - h))[0] / (2 * h) - hv[0]) for h in (1e-2, 1e-3)]
    assert errs[1] < errs[0] / 50


def test_tangent_w_matches_tlm_bitwise(rng):
    s = get_setup("polynomial", seed=9, method="theta0.5")
    traj, _ = integrate(s.problem, s.objective, s.config, s.p0, s.param_map)
    w0, v2 = rng.normal(size=s.problem.dim_state), rng.normal(size=s.problem.dim_param)
    soa_forward_pass(s.problem, s.objective, traj, w0, v2, s.p0)
    _, history = propagate_tlm(s.problem, None, traj, w0, v2, s.p0, keep_history=True)
    assert all(np.array_equal(r.w_next, h) for r, h in zip(traj.records, history[1:]))


def test_linear_tangent_is_sensitivity_times_direction(rng):
    s = get_setup("linear-test", method="theta1")
    traj, _ = integrate(s.problem, s.objective, s.config, s.p0, s.param_map)
    nd = s.problem.dim_state
    v = rng.normal(size=nd)
    full = propagate_tlm(s.problem, None, traj, np.eye(nd), np.zeros((s.problem.dim_param, nd)), s.p0)
    soa_forward_pass(s.problem, s.objective, traj, v, np.zeros(s.problem.dim_param), s.p0)
    assert np.allclose(traj.records[-1].w_next, full.value @ v, rtol=1e-13, atol=1e-14)


@pytest.mark.parametrize("method", METHODS)
def test_embedded_first_order_is_bitwise_identical(method, rng):
    s = get_setup("polynomial", seed=5, method=method)
    traj, _ = integrate(s.problem, s.objective, s.config, s.p0, s.param_map)
    v2 = rng.normal(size=s.problem.dim_param)
    soa_forward_pass(s.problem, s.objective, traj, s.param_map.jvp(s.p0, v2), v2, s.p0)
    first, _ = solve_second_order(s.problem, s.objective, traj, v2, s.p0)
    alone = solve_adjoint(s.problem, s.objective, traj, s.p0)
    assert np.array_equal(first.lam, alone.lam) and np.array_equal(first.mu, alone.mu)


def test_terminal_values():
    w = np.array([1.0, -3.0])
    state = soa_terminal(half_square(), np.zeros(2), w, np.zeros(0), np.zeros(0), 4)
    assert np.array_equal(state.Lam, w)
    c = np.array([1.0, 2.0])
    linear = Objective(terminal=lambda u, p: float(c @ u), terminal_grad_state=lambda u, p: c,
                       terminal_hess_uu=lambda u, p, x: np.zeros_like(x))
    assert not np.any(soa_terminal(linear, np.zeros(2), w, np.zeros(0), np.zeros(0), 4).Lam)


def test_terminal_quadratic_blocks(rng):
    Q, G, R = rng.normal(size=(3, 3)), rng.normal(size=(3, 2)), rng.normal(size=(2, 2))
    Q, R = Q + Q.T, R + R.T
    obj = Objective(terminal=lambda u, p: 0.5 * u @ Q @ u + u @ G @ p + 0.5 * p @ R @ p,
                    terminal_grad_state=lambda u, p: Q @ u + G @ p, terminal_grad_param=lambda u, p: G.T @ u + R @ p,
                    terminal_hess_uu=lambda u, p, w: Q @ w, terminal_hess_up=lambda u, p, v: G @ v,
                    terminal_hess_pu=lambda u, p, w: G.T @ w, terminal_hess_pp=lambda u, p, v: R @ v)
    w, v2 = rng.normal(size=3), rng.normal(size=2)
    state = soa_terminal(obj, rng.normal(size=3), w, v2, rng.normal(size=2), 1)
    assert np.allclose(state.Lam, Q @ w + G @ v2, rtol=1e-15, atol=1e-15)
    assert np.allclose(state.Gam, G.T @ w + R @ v2, rtol=1e-15, atol=1e-15)


def test_missing_hessian_fails_before_integrating():
    calls = []

    def rhs(t, u, p):
        calls.append(t)
        return -u

    bare = DAEProblem(1, 0, rhs, jac_state=lambda t, u, p: -np.eye(1))
    config = StepperConfig(Theta(1.0), 0.0, 1.0, 5)
    with pytest.raises(MissingCallbackError) as info:
        hessian_vector_product(bare, half_square(), config, np.zeros(0), ParamMap(u0=np.ones(1)), np.ones(1),
                               target="initial")
    assert "hess_uu_vv" in str(info.value)
    assert calls == []


def test_missing_objective_hessian_fails():
    s = get_setup("linear-test")
    obj = Objective(terminal=s.objective.terminal, terminal_grad_state=s.objective.terminal_grad_state)
    with pytest.raises(MissingCallbackError):
        hessian_vector_product(s.problem, obj, s.config, s.p0, s.param_map, np.ones(s.problem.dim_param))


def test_grayscott_initial_condition_hvp(rng):
    s = get_setup("grayscott", grid=8, method="theta0.5")
    fun = ReducedFunctional(s)
    sigma = rng.normal(size=s.problem.dim_state)
    orders, errors = fd_gradient_orders(fun, s.initial_guess, sigma, [1e-2, 1e-3])
    assert orders[0] > 1.8 or errors[-1] < 1e-10, (orders, errors)
