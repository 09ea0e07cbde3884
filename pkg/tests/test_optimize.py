import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adjoint_ts.optimize import (Bounds, OptimizerOptions, active_mask, lbfgs_minimize, newton_minimize,
                                 projected_gradient_norm)


def shifted_square(c):
    return lambda x: (0.5 * float((x - c) @ (x - c)), x - c)


def rosenbrock(x):
    a, b = x
    f = (1 - a) ** 2 + 100 * (b - a * a) ** 2
    g = np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)])
    return f, g


def rosenbrock_hessp(x, v):
    a, b = x
    H = np.array([[2 - 400 * (b - 3 * a * a), -400 * a], [-400 * a, 200.0]])
    return H @ v


def spd_quadratic(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, n))
    H = X @ X.T + n * np.eye(n)
    c = rng.normal(size=n)
    return H, c, (lambda x: (0.5 * float((x - c) @ H @ (x - c)), H @ (x - c))), (lambda x, v: H @ v)


def test_lbfgs_quadratic():
    c = np.array([1.0, -2.0, 3.0, 0.5])
    res = lbfgs_minimize(shifted_square(c), np.zeros(4), opts=OptimizerOptions(gtol=1e-10))
    assert res.converged and res.iterations <= 3
    assert np.linalg.norm(res.g) < 1e-10
    assert np.allclose(res.x, c, atol=1e-10)


def test_lbfgs_rosenbrock():
    res = lbfgs_minimize(rosenbrock, np.array([-1.2, 1.0]), opts=OptimizerOptions(gtol=1e-8, max_iter=100))
    assert res.iterations <= 100
    assert np.allclose(res.x, [1.0, 1.0], atol=1e-6)


@pytest.mark.parametrize("minimize", ["lbfgs", "newton"])
def test_box_projection_of_minimizer(minimize):
    c = np.array([-1.0, 1.0, 2.0, 3.0, 7.0])
    bounds = Bounds(np.zeros(5), np.full(5, 2.0))
    fg = shifted_square(c)
    if minimize == "lbfgs":
        res = lbfgs_minimize(fg, np.ones(5), bounds)
    else:
        res = newton_minimize(fg, lambda x, v: v, np.ones(5), bounds)
    assert res.converged
    assert np.allclose(res.x, np.clip(c, 0.0, 2.0), atol=1e-10)


def test_newton_quadratic_one_step():
    c = np.array([3.0, -1.0, 0.25])
    res = newton_minimize(shifted_square(c), lambda x, v: v, np.zeros(3), opts=OptimizerOptions(gtol=1e-12))
    assert res.iterations == 1
    assert np.allclose(res.x, c, atol=1e-14)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_newton_general_quadratic_with_tight_forcing(seed):
    n = 6
    H, c, fg, hessp = spd_quadratic(n, seed)
    opts = OptimizerOptions(gtol=1e-8, forcing=lambda g: 1e-14)
    res = newton_minimize(fg, hessp, np.zeros(n), opts=opts)
    assert res.iterations == 1
    assert res.history[-1].hess_products <= n
    assert np.allclose(res.x, c, atol=1e-9)


def test_newton_rosenbrock():
    res = newton_minimize(rosenbrock, rosenbrock_hessp, np.array([-1.2, 1.0]))
    assert res.converged
    assert np.allclose(res.x, [1.0, 1.0], atol=1e-8)


def test_saddle_stops_at_bound():
    fg = lambda x: (x[0] ** 2 - x[1] ** 2, np.array([2 * x[0], -2 * x[1]]))
    hessp = lambda x, v: np.array([2 * v[0], -2 * v[1]])
    bounds = Bounds(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    res = newton_minimize(fg, hessp, np.array([0.5, 0.1]), bounds)
    assert np.all(np.isfinite(res.x))
    assert abs(res.x[1]) == pytest.approx(1.0)
    assert res.x[0] == pytest.approx(0.0, abs=1e-8)
    assert res.converged


def test_negative_curvature_at_origin_is_not_stuck():
    fg = lambda x: (x[0] ** 2 - x[1] ** 2, np.array([2 * x[0], -2 * x[1]]))
    hessp = lambda x, v: np.array([2 * v[0], -2 * v[1]])
    bounds = Bounds(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    res = newton_minimize(fg, hessp, np.array([0.3, -1e-3]), bounds)
    assert res.x[1] == pytest.approx(-1.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["lbfgs", "newton"]))
def test_monotone_and_feasible(seed, method):
    rng = np.random.default_rng(seed)
    n = 4
    H, c, fg, hessp = spd_quadratic(n, seed)
    # add a quartic term so the problem is not quadratic
    fq = lambda x: (fg(x)[0] + 0.25 * float(np.sum(x**4)), fg(x)[1] + x**3)
    hq = lambda x, v: hessp(x, v) + 3 * x**2 * v
    lo, hi = -rng.uniform(0.1, 1.0, n), rng.uniform(0.1, 1.0, n)
    bounds = Bounds(lo, hi)
    seen = []
    cb = lambda x, f, g: seen.append(x.copy())
    x0 = rng.uniform(lo, hi)
    if method == "lbfgs":
        res = lbfgs_minimize(fq, x0, bounds, callback=cb)
    else:
        res = newton_minimize(fq, hq, x0, bounds, callback=cb)
    fs = [h.f for h in res.history]
    assert all(b <= a for a, b in zip(fs, fs[1:]))
    assert all(np.all(x >= lo) and np.all(x <= hi) for x in seen)


def test_line_search_failure_flagged():
    # a gradient that lies about the descent direction
    fg = lambda x: (float(x @ x), -x)
    res = lbfgs_minimize(fg, np.ones(2))
    assert not res.converged
    assert "line search" in res.message
    assert np.array_equal(res.x, np.ones(2))


def test_projected_gradient_and_active_set():
    b = Bounds(np.zeros(3), np.ones(3))
    x = np.array([0.0, 0.5, 1.0])
    g = np.array([1.0, 2.0, -3.0])
    assert active_mask(x, g, b).tolist() == [True, False, True]
    # |P(x - g) - x|: the free component moves 0.5 before hitting its bound
    assert projected_gradient_norm(x, g, b) == pytest.approx(0.5)
    free = Bounds(np.full(3, -np.inf), np.full(3, np.inf))
    assert projected_gradient_norm(x, g, free) == pytest.approx(np.linalg.norm(g))
    with pytest.raises(ValueError):
        Bounds(np.ones(2), np.zeros(2))


def test_history_csv(tmp_path):
    res = lbfgs_minimize(rosenbrock, np.array([-1.2, 1.0]))
    path = tmp_path / "hist.csv"
    res.write_history(path)
    rows = list(csv.reader(open(path)))
    assert rows[0][:3] == ["iteration", "f", "pg_norm"]
    assert len(rows) == len(res.history) + 1
    assert float(rows[-1][1]) == res.f
