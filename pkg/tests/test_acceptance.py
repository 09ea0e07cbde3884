"""Acceptance criteria, one test each.  Every test records a one-line
PASS/FAIL verdict that is printed at the end of the pytest run.

Run directly with ``python tests/test_acceptance.py``.
"""

import sys
import time

import numpy as np
import pytest

from adjoint_ts import ParamMap
from adjoint_ts.adjoint import gradient
from adjoint_ts.algebra import NewtonOptions
from adjoint_ts.checkpoint import MODES, CheckpointPolicy, count_recomputations, plan_schedule
from adjoint_ts.cli import adjoint_forward_ratio, revolve_curves
from adjoint_ts.forward import StepperConfig, integrate, parse_method
from adjoint_ts.hessian import hessian_vector_product
from adjoint_ts.optimize import OptimizerOptions, lbfgs_minimize, newton_minimize
from adjoint_ts.problems import get_setup
from adjoint_ts.reduced import ReducedFunctional, convergence_orders, taylor_remainders
from adjoint_ts.tlm import tlm_gradient

from checkpoint_oracle import min_forward_steps
from conftest import ACCEPTANCE_LINES, scalar_problem
from test_checkpoint import recursion_oracle

METHODS = ("theta1", "theta0.5", "rk4")
MASS = ("identity", "spd", "dae")
TIGHT = NewtonOptions(atol=1e-14, rtol=1e-14)
ROUNDOFF = 100 * np.finfo(float).eps


def record(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def random_suite(method):
    """Twenty random polynomial problems; theta methods cycle through mass types."""
    for seed in range(20):
        mass = MASS[seed % 3] if method != "rk4" else "identity"
        yield seed, get_setup("polynomial", seed=seed, method=method, mass=mass).with_config(newton=TIGHT)


def taylor_orders(setup, steps, seed):
    """Second-order remainder orders, plus the finest first-order one.

    A first-order order near 1 shows the gradient term is active; along a
    direction nearly orthogonal to the gradient both remainders are O(h^2)
    and the test would be vacuous.
    """
    fun = ReducedFunctional(setup)
    x = setup.initial_guess
    d = np.random.default_rng(seed).normal(size=x.size)
    rows = taylor_remainders(fun, x, d, steps)
    return convergence_orders(steps, [r[2] for r in rows]), convergence_orders(steps, [r[1] for r in rows])[-1]


def test_1_aircraft_taylor_order():
    start = time.perf_counter()
    orders, first = taylor_orders(get_setup("aircraft", method="rk4"), [5e-3, 5e-4, 5e-5], seed=0)
    elapsed = time.perf_counter() - start
    ok = all(abs(o - 2.0) <= 0.1 for o in orders) and first < 1.5 and elapsed < 10
    record(1, ok, f"aircraft RK4 remainder orders {orders[0]:.4f}, {orders[1]:.4f} (2 +- 0.1), "
                  f"first-order remainder order {first:.2f}, {elapsed:.1f}s < 10s")


def test_2_grayscott_taylor_order():
    start = time.perf_counter()
    orders, first = taylor_orders(get_setup("grayscott", method="rk4", grid=50), [5e-3, 5e-4, 5e-5], seed=0)
    elapsed = time.perf_counter() - start
    ok = all(abs(o - 2.0) <= 0.1 for o in orders) and first < 1.5 and elapsed < 60
    record(2, ok, f"Gray-Scott 50x50 RK4 remainder orders {orders[0]:.4f}, {orders[1]:.4f} (2 +- 0.1), "
                  f"first-order remainder order {first:.2f}, {elapsed:.1f}s < 60s")


def test_3_tlm_adjoint_duality():
    worst = 0.0
    for method in METHODS:
        for _, s in random_suite(method):
            assert s.problem.dim_state <= 8 and s.problem.dim_param <= 4
            g_adj = gradient(s.problem, s.objective, s.config, s.p0, s.param_map).gradient
            g_tlm = tlm_gradient(s.problem, s.objective, s.config, s.p0, s.param_map)
            worst = max(worst, np.linalg.norm(g_adj - g_tlm) / np.linalg.norm(g_tlm))
    record(3, worst <= 1e-9, f"60 gradients (20 problems x 3 methods), worst relative gap {worst:.2e} <= 1e-9")


def _hvp_cases():
    for method in METHODS:
        for seed, s in random_suite(method):
            yield f"{method}/{seed}", s
    yield "aircraft", get_setup("aircraft", method="rk4")


def test_4_hessian_vector_products():
    worst_sym, order_range = 0.0, [np.inf, -np.inf]
    steps = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
    bad = []
    for case, (name, s) in enumerate(_hvp_cases()):
        fun = ReducedFunctional(s)
        x = s.initial_guess
        rng = np.random.default_rng(case)
        a, b = rng.normal(size=(2, x.size))
        Ha, Hb = fun.hessp(x, a), fun.hessp(x, b)
        worst_sym = max(worst_sym, abs(b @ Ha - a @ Hb) / max(abs(b @ Ha), abs(a @ Hb)))
        kept_h, kept_e = [], []
        for h in steps:
            gp, gm = fun.fun_grad(x + h * a)[1], fun.fun_grad(x - h * a)[1]
            error = np.linalg.norm((gp - gm) / (2 * h) - Ha)
            # rows at the round-off floor of a central difference carry no order information
            if error > ROUNDOFF * max(np.linalg.norm(gp), np.linalg.norm(gm)) / h:
                kept_h.append(h)
                kept_e.append(error)
        # the finest two informative intervals measure the asymptotic order
        orders = convergence_orders(kept_h, kept_e)[-2:]
        if orders:
            order_range = [min(order_range[0], *orders), max(order_range[1], *orders)]
        if not orders or not all(abs(o - 2.0) <= 0.15 for o in orders):
            bad.append(name)
    worst_dense = 0.0
    for method in METHODS:
        s = get_setup("linear-test", method=method, num_steps=12)
        H = s.model.dense_hessian(s.config.method, s.config.h, s.config.num_steps)
        fun = ReducedFunctional(s)
        for k in range(3):
            sigma = np.random.default_rng(k).normal(size=s.p0.size)
            exact = H @ sigma
            worst_dense = max(worst_dense, np.linalg.norm(fun.hessp(s.p0, sigma) - exact) / np.linalg.norm(exact))
    ok = worst_sym <= 1e-8 and not bad and worst_dense <= 1e-10
    record(4, ok, f"(a) symmetry worst {worst_sym:.1e} <= 1e-8; (b) FD-of-gradient orders in "
                  f"[{order_range[0]:.3f}, {order_range[1]:.3f}] (2 +- 0.15){' failing: ' + ','.join(bad) if bad else ''}; "
                  f"(c) dense oracle worst {worst_dense:.1e} <= 1e-10")


def test_5_checkpoint_reference_counts():
    sol = plan_schedule(10, 3, "sol").recomputations
    stg = plan_schedule(10, 3, "sol+stages").recomputations
    record(5, sol == 15 and stg == 6, f"N=10, s=3: solution-only {sol} (expect 15), solution+stages {stg} (expect 6)")


def test_6_schedule_optimality():
    mismatches = []
    for mode in MODES:
        for N in range(1, 31):
            for s in range(1, 7):
                if plan_schedule(N, s, mode).recomputations != recursion_oracle(N, s, mode):
                    mismatches.append((mode, N, s))
                if N <= 10 and s <= 4 and count_recomputations(N, s, mode) != \
                        min_forward_steps(N, s, mode != "sol") - N:
                    mismatches.append(("search", mode, N, s))
    rows = revolve_curves(1, 60, 12, [2, 4])
    curves = {}
    for r in rows:
        curves.setdefault(r["mode"], []).append(r["recomputations"])
    monotone = all(all(a <= b for a, b in zip(v, v[1:])) for v in curves.values())
    crossings = {}
    sol = np.array(curves["sol"])
    for name in ("sol+2stages", "sol+4stages"):
        diff = np.array(curves[name]) - sol
        signs = np.sign(diff[1:])
        signs = signs[signs != 0]
        crossings[name] = (int(np.count_nonzero(np.diff(signs))), int(np.argmax(diff > 0)) + 1)
    single = all(c == 1 for c, _ in crossings.values())
    ok = not mismatches and monotone and single
    detail = ", ".join(f"{k} overtakes sol at N={n}" for k, (_, n) in crossings.items())
    record(6, ok, f"N<=30, s<=6, both modes: {len(mismatches)} mismatches vs oracle; 12-unit curves monotone, "
                  f"one crossover each ({detail})")


def test_7_checkpoint_transparency():
    s = get_setup("grayscott", grid=16, method="theta1")
    N = s.config.num_steps
    x = s.initial_guess
    pm = ParamMap(u0=x)
    sigma = np.random.default_rng(0).normal(size=x.size)
    args = (s.problem, s.objective, s.config, s.p0, pm)
    g0 = gradient(*args, "initial").gradient
    h0 = hessian_vector_product(*args, sigma, "initial").hvp
    identical = True
    for mode in MODES:
        for cap in (1, 3, N):
            policy = CheckpointPolicy(cap, mode)
            identical &= np.array_equal(gradient(*args, "initial", policy).gradient, g0)
            identical &= np.array_equal(hessian_vector_product(*args, sigma, "initial", policy).hvp, h0)
    record(7, bool(identical), f"Gray-Scott 16x16 gradient and HVP bitwise identical for s in (1, 3, {N}), both modes")


@pytest.mark.slow
def test_8_newton_beats_lbfgs():
    s = get_setup("aircraft", method="rk4")
    fun = ReducedFunctional(s)
    opts = OptimizerOptions(gtol=1e-8, max_iter=200)
    lb = lbfgs_minimize(fun.fun_grad, s.p0, s.bounds, opts)
    nt = newton_minimize(fun.fun_grad, fun.hessp, s.p0, s.bounds, opts)
    first = lambda res: next((h.iteration for h in res.history if h.pg_norm <= 1e-6), None)
    n_lb, n_nt = first(lb), first(nt)
    tail = [h.pg_norm for h in nt.history[-3:]]
    ratios = [tail[1] / tail[0], tail[2] / tail[1]]
    superlinear = ratios[1] < ratios[0] and ratios[1] < 0.05
    ok = n_nt is not None and (n_lb is None or n_nt < n_lb) and superlinear
    record(8, ok, f"|g|<=1e-6 at Newton iteration {n_nt} vs L-BFGS {n_lb}; Newton tail "
                  f"{tail[0]:.2e} -> {tail[1]:.2e} -> {tail[2]:.2e} (ratios {ratios[0]:.1e}, {ratios[1]:.1e})")


def test_9_adjoint_forward_cost_ratio():
    ratios = {}
    for method in METHODS:
        s = get_setup("grayscott", grid=32, method=method)
        ratios[method] = adjoint_forward_ratio(s, s.initial_guess, repeats=3)
    ok = ratios["theta1"] < 1.2 and ratios["theta0.5"] < 1.2
    record(9, ok, f"Gray-Scott 32x32 adjoint/forward: theta1 {ratios['theta1']:.2f}, theta0.5 "
                  f"{ratios['theta0.5']:.2f} (< 1.2); rk4 {ratios['rk4']:.2f} (reported only)")


def test_10_integrator_orders():
    decay = scalar_problem(lambda u: -u, lambda u: -np.eye(1))
    pm = ParamMap(u0=np.ones(1))
    found = {}
    for method, nominal in (("theta1", 1), ("theta0.5", 2), ("rk4", 4)):
        errors = []
        for N in (16, 32, 64, 128):
            traj, _ = integrate(decay, None, StepperConfig(parse_method(method), 0.0, 2.0, N), None, pm)
            errors.append(abs(traj.final_state[0] - np.exp(-2.0)))
        found[method] = (nominal, np.log2(np.array(errors[:-1]) / np.array(errors[1:])))
    ok = all(np.all(np.abs(r - n) <= 0.15) for n, r in found.values())
    detail = "; ".join(f"{m} " + ",".join(f"{x:.3f}" for x in r) for m, (_, r) in found.items())
    record(10, ok, f"orders over three halvings: {detail} (nominal 1/2/4 +- 0.15)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
