"""Command line: verification experiments and plot-ready data.

Every command is deterministic given its flags and exits with status 1 when
its check fails, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from typing import Optional, Sequence

import numpy as np

from .adjoint import solve_adjoint
from .checkpoint import MODES, CheckpointPolicy, count_recomputations, units_to_checkpoints
from .forward import integrate
from .optimize import OptimizerOptions, lbfgs_minimize, newton_minimize
from .problem import ParamMap, validate_derivatives
from .problems import REGISTRY, get_setup
from .reduced import ReducedFunctional, convergence_orders, taylor_remainders

ORDER_TOL = 0.1


def _emit(rows: list[dict], args, title: Optional[str] = None) -> None:
    """Print rows as a table (or JSON with --json); write CSV to --out."""
    if args.out and rows:
        with open(args.out, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    if args.json:
        print(json.dumps(rows, indent=1))
        return
    if title:
        print(title)
    if not rows:
        return
    cols = list(rows[0])
    fmt = lambda v: f"{v:.4e}" if isinstance(v, float) else str(v)
    cells = [[fmt(r[c]) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    print("  ".join(c.rjust(w) for c, w in zip(cols, widths)))
    for row in cells:
        print("  ".join(v.rjust(w) for v, w in zip(row, widths)))


def _setup(args):
    options = dict(method=args.method, seed=args.seed)
    if args.steps is not None:
        options["num_steps"] = args.steps
    if args.grid is not None:
        options["grid"] = args.grid
    return get_setup(args.problem, **options)


def _policy(args) -> Optional[CheckpointPolicy]:
    if args.capacity is None:
        return None
    return CheckpointPolicy(args.capacity, args.mode)


def _direction(size: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).normal(size=size)


def _log(args, message: str) -> None:
    if not args.json:
        print(message)


# -- commands ---------------------------------------------------------------


def cmd_taylor(args) -> int:
    setup = _setup(args)
    fun = ReducedFunctional(setup, _policy(args))
    x = setup.initial_guess
    d = _direction(x.size, args.seed)
    rows = taylor_remainders(fun, x, d, args.h)
    hs = [r[0] for r in rows]
    order1 = [float("nan")] + convergence_orders(hs, [r[1] for r in rows])
    order2 = [float("nan")] + convergence_orders(hs, [r[2] for r in rows])
    out = [dict(h=h, remainder1=r1, order1=o1, remainder2=r2, order2=o2)
           for (h, r1, r2), o1, o2 in zip(rows, order1, order2)]
    _emit(out, args, f"Taylor remainder test: {setup.name}, {setup.config.method.label}")
    bad = [o for o in order2[1:] if not abs(o - 2.0) <= ORDER_TOL]
    if bad:
        print(f"FAIL: second-order remainder orders {order2[1:]} not within 2 +- {ORDER_TOL}", file=sys.stderr)
        return 1
    # along a direction almost orthogonal to the gradient remainder1 is itself O(h^2)
    if len(order1) > 1 and not order1[-1] < 1.5:
        print(f"FAIL: gradient term is inactive along this direction (order1 {order1[-1]:.2f}); "
              "try another --seed", file=sys.stderr)
        return 1
    return 0


def cmd_hvp_test(args) -> int:
    setup = _setup(args)
    fun = ReducedFunctional(setup, _policy(args))
    x = setup.initial_guess
    sigma = _direction(x.size, args.seed + 1)
    other = _direction(x.size, args.seed + 2)
    Hs = fun.hessp(x, sigma)
    Ho = fun.hessp(x, other)
    scale = max(abs(float(other @ Hs)), abs(float(sigma @ Ho)), 1e-300)
    symmetry = abs(float(other @ Hs) - float(sigma @ Ho)) / scale
    errors = []
    for h in args.h:
        gp = fun.fun_grad(x + h * sigma)[1]
        gm = fun.fun_grad(x - h * sigma)[1]
        errors.append(float(np.linalg.norm(Hs - (gp - gm) / (2 * h))))
    orders = [float("nan")] + convergence_orders(args.h, errors)
    rows = [dict(h=h, error=e, order=o) for h, e, o in zip(args.h, errors, orders)]
    _emit(rows, args, f"HVP vs central differences of the gradient: {setup.name}, {setup.config.method.label}")
    _log(args, f"symmetry residual {symmetry:.3e}   |H sigma| {np.linalg.norm(Hs):.3e}")
    status = 0
    if symmetry > 1e-8:
        print(f"FAIL: symmetry residual {symmetry:.3e} > 1e-8", file=sys.stderr)
        status = 1
    if any(not abs(o - 2.0) <= ORDER_TOL for o in orders[1:] if np.isfinite(o)):
        print(f"FAIL: orders {orders[1:]} not within 2 +- {ORDER_TOL}", file=sys.stderr)
        status = 1
    return status


def _first_below(result, tol: float) -> Optional[int]:
    return next((h.iteration for h in result.history if h.pg_norm <= tol), None)


def cmd_optimal_control(args) -> int:
    from .problems.aircraft import AircraftConfig, aircraft_setup

    cfg = AircraftConfig(intervals=args.intervals)
    if args.v_max is not None:
        cfg = AircraftConfig(**{**cfg.__dict__, "v_bounds": (cfg.v_bounds[0], args.v_max)})
    if args.start_on_leader:
        cfg = AircraftConfig(**{**cfg.__dict__, "start": (0.0, 0.0)})
    setup = aircraft_setup(args.method, args.steps_per_interval, cfg)
    x0 = setup.model.leader_controls() if args.start_on_leader else setup.p0
    fun = ReducedFunctional(setup, _policy(args))
    opts = OptimizerOptions(gtol=args.gtol, max_iter=args.max_iter)
    results = {}
    if args.optimizer in ("lbfgs", "both"):
        results["lbfgs"] = lbfgs_minimize(fun.fun_grad, x0, setup.bounds, opts)
    if args.optimizer in ("newton", "both"):
        results["newton"] = newton_minimize(fun.fun_grad, fun.hessp, x0, setup.bounds, opts)
    rows = [dict(optimizer=name, iteration=h.iteration, cost=h.f, gradnorm=h.pg_norm)
            for name, res in results.items() for h in res.history]
    if args.json or args.out:
        _emit(rows, args)
    status = 0
    lo, hi = setup.bounds.lower, setup.bounds.upper
    for name, res in results.items():
        at_bound = int(np.sum((res.x <= lo) | (res.x >= hi)))
        _log(args, f"{name}: {res.message} after {res.iterations} iterations, cost {res.f:.10e}, "
                   f"|g| {res.pg_norm:.3e}, first |g|<=1e-6 at {_first_below(res, 1e-6)}, "
                   f"{at_bound} controls at a bound")
    if not args.json:
        best = min(results.values(), key=lambda r: r.f)
        K = setup.model.K
        print("v:", np.array2string(best.x[:K], precision=4))
        print("w:", np.array2string(best.x[K:], precision=4))
    if len(results) == 2:
        nl, nn = _first_below(results["lbfgs"], 1e-6), _first_below(results["newton"], 1e-6)
        already_optimal = nl == 0 and nn == 0
        if not already_optimal and (nn is None or (nl is not None and nn >= nl)):
            print(f"FAIL: Newton reached 1e-6 at {nn}, L-BFGS at {nl}", file=sys.stderr)
            status = 1
    return status


def cmd_grayscott_invert(args) -> int:
    setup = get_setup("grayscott", method=args.method, grid=args.grid or 16, num_steps=args.steps,
                      amplitude=args.amplitude, seed=args.seed)
    fun = ReducedFunctional(setup, _policy(args))
    x0 = setup.initial_guess
    opts = OptimizerOptions(gtol=args.gtol, max_iter=args.max_iter)
    res = lbfgs_minimize(fun.fun_grad, x0, None, opts)
    f0 = res.history[0].f
    reduction = f0 / res.f if res.f > 0 else float("inf")
    error0 = float(np.linalg.norm(x0 - setup.reference))
    error = float(np.linalg.norm(res.x - setup.reference))
    ratio = adjoint_forward_ratio(setup, res.x)
    rows = [dict(iteration=h.iteration, cost=h.f, gradnorm=h.pg_norm) for h in res.history]
    if args.json or args.out:
        _emit(rows, args)
    _log(args, f"L-BFGS: {res.message} after {res.iterations} iterations")
    _log(args, f"cost {f0:.4e} -> {res.f:.4e} (reduction {reduction:.3e})")
    _log(args, f"|U0 - U0_true| {error0:.4e} -> {error:.4e}")
    _log(args, f"adjoint/forward time ratio {ratio:.3f} ({setup.config.method.label})")
    if f0 > 0 and reduction < 1e3:
        print(f"FAIL: cost reduced only {reduction:.3e}x", file=sys.stderr)
        return 1
    return 0


def adjoint_forward_ratio(setup, x, repeats: int = 3) -> float:
    """Best-of-``repeats`` wall time of the adjoint sweep over the forward solve."""
    pm = ParamMap(u0=x) if setup.target == "initial" else setup.param_map
    p = setup.p0 if setup.target == "initial" else x
    fwd, adj = [], []
    for _ in range(repeats):
        t = time.perf_counter()
        traj, _ = integrate(setup.problem, setup.objective, setup.config, p, pm)
        fwd.append(time.perf_counter() - t)
        t = time.perf_counter()
        solve_adjoint(setup.problem, setup.objective, traj, p)
        adj.append(time.perf_counter() - t)
    return min(adj) / min(fwd)


def revolve_curves(n_min: int, n_max: int, units: int, stage_counts: Sequence[int]) -> list[dict]:
    """Recomputation curves for solution-only and solution+stages checkpoints
    sharing ``units`` solution-sized memory slots."""
    curves = [("sol", 0)] + [("sol+stages", k) for k in stage_counts]
    rows = []
    for N in range(n_min, n_max + 1):
        for mode, k in curves:
            cap = units_to_checkpoints(units, k, mode)
            rows.append(dict(N=N, capacity=cap, mode=mode if mode == "sol" else f"sol+{k}stages",
                             recomputations=count_recomputations(N, cap, mode)))
    return rows


def cmd_revolve_stats(args) -> int:
    if args.steps is not None and args.capacity is not None:
        modes = [args.mode] if args.mode_given else list(MODES)
        rows = [dict(N=args.steps, capacity=args.capacity, mode=m,
                     recomputations=count_recomputations(args.steps, args.capacity, m)) for m in modes]
    else:
        rows = revolve_curves(args.n_min, args.n_max, args.units, args.stages)
    _emit(rows, args)
    return 0


def cmd_validate(args) -> int:
    setup = _setup(args)
    x = setup.initial_guess
    p = setup.p0 if setup.target == "initial" else x
    u = setup.param_map.initial_state(p) if setup.target == "param" else x
    report = validate_derivatives(setup.problem, setup.objective, (setup.config.t0, u, p), args.tol, args.seed)
    rows = [dict(check=c.name, discrepancy=c.discrepancy, passed=c.passed) for c in report.checks]
    _emit(rows, args, f"derivative checks for {setup.name} (tol {args.tol:g})")
    return 0 if report.passed else 1


def cmd_integrate(args) -> int:
    setup = _setup(args)
    x = setup.initial_guess
    pm = ParamMap(u0=x) if setup.target == "initial" else setup.param_map
    p = setup.p0 if setup.target == "initial" else x
    traj, cost = integrate(setup.problem, setup.objective, setup.config, p, pm)
    if args.out:
        traj.to_csv(args.out)
    if args.json:
        print(json.dumps(dict(problem=setup.name, method=setup.config.method.label, steps=traj.num_steps,
                              cost=cost)))
    else:
        print(f"{setup.name} {setup.config.method.label}: {traj.num_steps} steps, cost {cost:.12e}")
    return 0


# -- parser -----------------------------------------------------------------


def _common(p: argparse.ArgumentParser, problem: Optional[str] = "aircraft") -> None:
    if problem is not None:
        p.add_argument("--problem", default=problem, choices=sorted(REGISTRY))
    p.add_argument("--method", default="rk4", help="theta1, theta0.5, theta<value> or rk4")
    p.add_argument("--steps", type=int, default=None, help="number of time steps")
    p.add_argument("--grid", type=int, default=None, help="grid size n for the Gray-Scott problem")
    p.add_argument("--capacity", type=int, default=None, help="checkpoint capacity (default: store every step)")
    p.add_argument("--mode", default="sol+stages", choices=MODES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="CSV output file")
    p.add_argument("--json", action="store_true", help="print JSON records instead of a table")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adjoint-ts", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("taylor", help="Taylor remainder test of the adjoint gradient")
    _common(p)
    p.add_argument("--h", type=float, nargs="+", default=[5e-3, 5e-4, 5e-5])
    p.set_defaults(func=cmd_taylor)

    p = sub.add_parser("hvp-test", help="Hessian-vector product vs differences of gradients")
    _common(p)
    p.add_argument("--h", type=float, nargs="+", default=[1e-1, 1e-2, 1e-3])
    p.set_defaults(func=cmd_hvp_test)

    p = sub.add_parser("optimal-control", help="aircraft trajectory planning with L-BFGS and Newton")
    _common(p, problem=None)
    p.add_argument("--optimizer", default="both", choices=["lbfgs", "newton", "both"])
    p.add_argument("--intervals", type=int, default=10)
    p.add_argument("--steps-per-interval", type=int, default=None)
    p.add_argument("--gtol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--v-max", type=float, default=None)
    p.add_argument("--start-on-leader", action="store_true")
    p.set_defaults(func=cmd_optimal_control)

    p = sub.add_parser("grayscott-invert", help="recover the Gray-Scott initial condition")
    _common(p, problem=None)
    p.set_defaults(method="theta1")
    p.add_argument("--amplitude", type=float, default=0.05)
    p.add_argument("--gtol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=200)
    p.set_defaults(func=cmd_grayscott_invert)

    p = sub.add_parser("revolve-stats", help="recomputation counts of optimal checkpoint schedules")
    _common(p, problem=None)
    p.add_argument("--n-min", type=int, default=1)
    p.add_argument("--n-max", type=int, default=60)
    p.add_argument("--units", type=int, default=12)
    p.add_argument("--stages", type=int, nargs="+", default=[2, 3])
    p.set_defaults(func=cmd_revolve_stats)

    p = sub.add_parser("validate", help="check derivative callbacks against finite differences")
    _common(p)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("integrate", help="forward solve; --out writes the trajectory")
    _common(p)
    p.set_defaults(func=cmd_integrate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    args.mode_given = "--mode" in argv
    try:
        return int(args.func(args))
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
