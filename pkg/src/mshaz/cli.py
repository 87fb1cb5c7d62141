"""Command-line interface: ``mshaz eval|simulate|verify|cascade|risk --model FILE``.

Exit codes: 0 success, 1 verification failure, 2 unreadable or invalid input,
3 numerical flag (negative density, or an improper model evaluated where its
cumulative hazard is no longer small).
"""
from __future__ import annotations

import argparse
import io
import math
import sys

import numpy as np
from scipy import optimize

from .cascade import cascade_survival, enumerate_orderings, route_laws, route_probabilities
from .curves import CurveSet, TimeGrid, compose_competing
from .distributions import HORIZON_TAIL, horizon_of
from .errors import MshazError
from .expoly import ExpPolyMix
from .microenv import expansion_residual, microenv_coeffs, microenv_density, microenv_oracle, microenv_pdf
from .modelfile import load_model
from .montecarlo import ks_statistic, ks_threshold, simulate_cascade, simulate_system
from .routes import (
    CascadeRoute,
    PowerLawRoute,
    SequentialRoute,
    UnorderedRoute,
    lifetime_curves,
    lifetime_risk,
    route_curves,
)
from .sequential import MAX_NESTED_STEPS, convolve_arrays, exact_sum, general_integral_eval

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
IMPROPER_H_LIMIT = 0.1
VERIFY_POINTS = 4096


class InputError(Exception):
    """Problems with the command line or model file (exit code 2)."""


def fmt(x):
    return format(float(x), ".17g")


def write_text(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def curves_csv(curves):
    buf = io.StringIO()
    buf.write("t,f,F,S,h,H\n")
    for row in curves.rows():
        buf.write(",".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# horizons and grids


def _powerlaw_horizon(terms, q=HORIZON_TAIL):
    target = -math.log(q)
    hi = max((target / a) ** (1.0 / p) for a, p in terms)
    return optimize.brentq(lambda t: sum(a * t**p for a, p in terms) - target, 0.0, hi)


def route_horizon(route):
    if isinstance(route, SequentialRoute):
        return horizon_of(route.steps)
    if isinstance(route, UnorderedRoute):
        return max(horizon_of([s]) for s in route.steps)
    if isinstance(route, CascadeRoute):
        return max(horizon_of(route_laws(o, route.spec)) for o in enumerate_orderings(route.spec))
    if isinstance(route, PowerLawRoute):
        return _powerlaw_horizon(route.terms)
    return horizon_of([route])


def model_t_max(model, built, override):
    if override is not None:
        return override
    if model.grid.t_max is not None:
        return model.grid.t_max
    try:
        if model.kind == "system":
            return max(route_horizon(r) for r in built.routes)
        if model.kind == "cascade":
            return route_horizon(CascadeRoute(built))
        if model.kind == "lifetime-risk":
            return model.lifetime_risk.divisions
    except MshazError as exc:
        raise InputError(f"cannot choose a time horizon ({exc}); set grid.t_max or --t-max") from exc
    raise InputError(f"kind {model.kind!r} needs grid.t_max or --t-max")


def build(model):
    try:
        if model.kind == "system":
            return model.system.build()
        if model.kind == "cascade":
            return model.cascade.build()
        if model.kind == "microenv":
            return model.microenv.build()
        return model.lifetime_risk
    except (MshazError, ValueError) as exc:
        raise InputError(str(exc)) from exc


def model_curves(model, built, grid):
    if model.kind == "system":
        return compose_competing([route_curves(r, grid) for r in built.routes], grid, built.multiplicity)
    if model.kind == "cascade":
        return cascade_survival(built, grid, model.cascade.composition)[0]
    if model.kind == "microenv":
        return microenv_pdf(built, grid)
    lr = built
    return lifetime_curves(lr.mu, lr.steps, lr.cells, grid)


def numeric_flags(curves):
    notes = []
    if "negative_density" in curves.flags or np.any(curves.f < 0):
        notes.append("negative density on the grid")
    if "improper" in curves.flags and curves.H[-1] > IMPROPER_H_LIMIT:
        notes.append(f"improper model with H(t_max) = {curves.H[-1]:.6g} > {IMPROPER_H_LIMIT}")
    return notes


# ---------------------------------------------------------------------------
# subcommands


def cmd_eval(args, model, built):
    grid = TimeGrid.uniform(model_t_max(model, built, args.t_max), args.points or model.grid.points)
    curves = model_curves(model, built, grid)
    write_text(args.out, curves_csv(curves))
    notes = numeric_flags(curves)
    for n in notes:
        print(f"numerical flag: {n}", file=sys.stderr)
    return EXIT_NUMERIC if notes else EXIT_OK


def cmd_simulate(args, model, built):
    count = args.samples or model.verify.samples
    seed = model.verify.seed if args.seed is None else args.seed
    if model.kind == "system":
        samples = simulate_system(built, count, seed)
    elif model.kind == "cascade":
        samples = simulate_cascade(built, count, seed, args.process)
    else:
        raise InputError(f"simulate is not available for kind {model.kind!r}")
    buf = io.StringIO()
    buf.write("index,t\n")
    for i, t in enumerate(samples.times):
        buf.write(f"{i},{fmt(t)}\n")
    write_text(args.out, buf.getvalue())
    return EXIT_OK


def cmd_cascade(args, model, built):
    if model.kind != "cascade":
        raise InputError("the cascade command needs a model of kind 'cascade'")
    grid = TimeGrid.uniform(model_t_max(model, built, args.t_max), args.points or model.grid.points)
    composition = args.composition or model.cascade.composition
    curves, _ = cascade_survival(built, grid, composition)
    probs = route_probabilities(built)
    lines = ["ordering,probability"] + [f"{'>'.join(o)},{fmt(p)}" for o, p in probs.items()]
    sys.stdout.write("\n".join(lines) + "\n")
    if args.out is not None:
        write_text(args.out, curves_csv(curves))
    notes = numeric_flags(curves)
    for n in notes:
        print(f"numerical flag: {n}", file=sys.stderr)
    return EXIT_NUMERIC if notes else EXIT_OK


def cmd_risk(args, model, built):
    if model.kind != "lifetime-risk":
        raise InputError("the risk command needs a model of kind 'lifetime-risk'")
    lr = built
    res = lifetime_risk(lr.mu, lr.divisions, lr.steps, lr.cells)
    write_text(args.out, f"exact,approx,rel_gap\n{fmt(res.exact)},{fmt(res.approx)},{fmt(res.rel_diff)}\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verification


class Report:
    def __init__(self):
        self.lines = []
        self.ok = True

    def check(self, name, metric, tol, kind="sup-norm"):
        passed = bool(np.isfinite(metric) and metric <= tol)
        self.ok &= passed
        self.lines.append(f"{'PASS' if passed else 'FAIL'} {name} {kind}={fmt(metric)} tol={fmt(tol)}")

    def info(self, text):
        self.lines.append(f"INFO {text}")

    def text(self):
        status = "ALL PASS" if self.ok else "FAILED"
        return "\n".join(self.lines + [f"RESULT {status}"]) + "\n"


def ks_grid(t_max):
    """Uniform points plus a geometric refinement near t = 0, for interpolating model CDFs."""
    pts = np.union1d(np.linspace(0.0, t_max, VERIFY_POINTS), np.geomspace(t_max * 1e-7, t_max, VERIFY_POINTS))
    return TimeGrid(pts, "irregular")


def corrupted(mix, rel):
    if not rel:
        return mix
    (c, k, mu), *rest = mix.terms
    return ExpPolyMix([(c * (1.0 + rel), k, mu), *rest], proper=True)


def _verify_exact_route(report, label, steps, mix, tol, rel):
    """Closed form against grid convolution and nested quadrature."""
    mix = corrupted(mix, rel)
    t_max = horizon_of(steps)
    # resolve the fastest rate: about four grid steps per e-folding
    points = int(min(2**15, max(VERIFY_POINTS, math.ceil(4.0 * max(mix.rates) * t_max))))
    grid = TimeGrid.uniform(t_max, points)
    t = grid.points
    f = np.asarray(steps[0].pdf(t), dtype=float)
    for s in steps[1:]:
        f = convolve_arrays(f, np.asarray(s.pdf(t), dtype=float), grid.step, "gregory")
    exact = mix.pdf(t)
    peak = np.max(np.abs(exact))
    report.check(f"{label} closed-form vs grid convolution", np.max(np.abs(exact - f)) / peak, tol)
    if len(steps) <= MAX_NESTED_STEPS:
        pts = np.linspace(0.0, grid.t_max, 7)[1:-1]
        nested = np.array([general_integral_eval(steps, x) for x in pts])
        report.check(f"{label} closed-form vs nested quadrature", np.max(np.abs(mix.pdf(pts) - nested)) / peak, tol)


def _analytic_route(route, grid, rel):
    if rel and isinstance(route, SequentialRoute):
        mix = exact_sum(route.steps)
        if mix is not None:
            return corrupted(mix, rel).curves(grid)
    return route_curves(route, grid)


def verify_system(report, model, built, args, tol, count, seed):
    for i, route in enumerate(built.routes):
        if isinstance(route, SequentialRoute) and len(route.steps) > 1:
            mix = exact_sum(route.steps)
            if mix is not None:
                _verify_exact_route(report, f"route {i}", list(route.steps), mix, tol, args.corrupt_coefficient)
    t_max = max(model_t_max(model, built, args.t_max), 1e-300)
    grid = ks_grid(t_max)
    routes = [_analytic_route(r, grid, args.corrupt_coefficient) for r in built.routes]
    system = compose_competing(routes, grid, built.multiplicity)
    samples = simulate_system(built, count, seed)
    report.check("system CDF vs Monte Carlo", ks_statistic(samples, system), ks_threshold(count), "KS")


def verify_cascade(report, model, built, args, tol, count, seed):
    rel = args.corrupt_coefficient
    for o in enumerate_orderings(built):
        laws = route_laws(o, built)
        mix = exact_sum(laws) if len(laws) > 1 else None
        if mix is not None:
            _verify_exact_route(report, f"ordering {'>'.join(o)}", laws, mix, tol, rel if o == enumerate_orderings(built)[0] else 0.0)
    grid = ks_grid(model_t_max(model, built, args.t_max))
    product, routes = cascade_survival(built, grid, "product")
    if rel:
        first = enumerate_orderings(built)[0]
        mix = exact_sum(route_laws(first, built))
        if mix is not None:
            routes[first] = corrupted(mix, rel).curves(grid)
        else:
            c = routes[first]
            routes[first] = CurveSet.from_survival(grid, 1.0 - c.F * (1 + rel), c.f * (1 + rel), F=c.F * (1 + rel))
        product = compose_competing(routes.values(), grid)
    partition, _ = cascade_survival(built, grid, "partition")
    prod_mc = simulate_cascade(built, count, seed, "route-product")
    report.check("product composition vs route-product Monte Carlo", ks_statistic(prod_mc, product), ks_threshold(count), "KS")
    race = simulate_cascade(built, count, seed + 1, "race")
    report.check("race composition vs race Monte Carlo", ks_statistic(race, partition), ks_threshold(count), "KS")
    probs = route_probabilities(built)
    freq = np.bincount(race.labels, minlength=len(probs)) / count
    p = np.array(list(probs.values()))
    z = np.max(np.abs(freq - p) / np.sqrt(np.maximum(p * (1 - p), 1.0 / count) / count))
    report.check("route probabilities vs race frequencies", z, 4.0, "max-z")
    report.info(f"product vs race survival gap sup|dS|={fmt(np.max(np.abs(product.S - partition.S)))}")


def verify_microenv(report, model, built, args, tol):
    if built.m > 3:
        raise InputError("microenv verification needs m <= 3 (simplex quadrature)")
    t_max = model_t_max(model, built, args.t_max)
    pts = np.linspace(0.0, t_max, 21)[1:]
    dens = microenv_density(built, pts)
    if args.corrupt_coefficient:
        a0, _ = microenv_coeffs(built)
        dens = dens + args.corrupt_coefficient * a0 * pts ** (built.m - 1) / math.gamma(built.m)
    oracle = np.array([microenv_oracle(built, x) for x in pts])
    report.check("closed form vs simplex quadrature", np.max(np.abs(dens - oracle) / np.abs(oracle)), tol, "max-rel")
    rng = np.random.default_rng(np.random.SeedSequence(int(args.seed if args.seed is not None else model.verify.seed)))
    tj = rng.uniform(0.0, t_max / built.m, size=(20, built.m))
    report.info(f"stated joint-density form vs full product max residual={fmt(expansion_residual(built, tj))}")


def verify_risk(report, model, built, args, tol):
    import mpmath

    lr = built
    res = lifetime_risk(lr.mu, lr.divisions, lr.steps, lr.cells)
    with mpmath.workdps(60):
        mu = mpmath.mpf(lr.mu)
        q = 1 - (1 - mu) ** mpmath.mpf(lr.divisions)
        ref = 1 - (1 - q ** int(lr.steps)) ** mpmath.mpf(lr.cells)
        ref = float(ref)
    exact = res.exact * (1.0 + args.corrupt_coefficient)
    report.check("stable evaluation vs 60-digit arithmetic", abs(exact - ref) / ref, tol, "rel")
    report.info(f"small-(mu d) approximation rel_gap={fmt(res.rel_diff)}")


def cmd_verify(args, model, built):
    tol = args.tolerance if args.tolerance is not None else model.verify.tolerance
    count = args.samples or model.verify.samples
    seed = model.verify.seed if args.seed is None else args.seed
    report = Report()
    if model.kind == "system":
        verify_system(report, model, built, args, tol, count, seed)
    elif model.kind == "cascade":
        verify_cascade(report, model, built, args, tol, count, seed)
    elif model.kind == "microenv":
        verify_microenv(report, model, built, args, tol)
    else:
        verify_risk(report, model, built, args, tol)
    write_text(args.out, report.text())
    return EXIT_OK if report.ok else EXIT_VERIFY


COMMANDS = {"eval": cmd_eval, "simulate": cmd_simulate, "verify": cmd_verify, "cascade": cmd_cascade, "risk": cmd_risk}


def make_parser():
    parser = argparse.ArgumentParser(prog="mshaz", description="Multi-stage hazard models.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--model", required=True, help="model file (.yaml, .yml or .json)")
        p.add_argument("--out", default=None, help="output path (default: stdout)")
        p.add_argument("--t-max", type=float, default=None, help="grid end (overrides grid.t_max)")
        p.add_argument("--points", type=int, default=None, help="grid size (overrides grid.points)")
        p.add_argument("--samples", type=int, default=None, help="Monte Carlo sample count")
        p.add_argument("--seed", type=int, default=None, help="Monte Carlo seed")
        p.add_argument("--tolerance", type=float, default=None, help="verify tolerance")
        if name == "verify":
            p.add_argument(
                "--corrupt-coefficient", type=float, default=0.0, metavar="REL",
                help="scale one closed-form coefficient by 1+REL (negative control)",
            )
        if name == "simulate":
            p.add_argument("--process", choices=["race", "route-product"], default="race", help="cascade sampling process")
        if name == "cascade":
            p.add_argument("--composition", choices=["product", "partition"], default=None, help="route composition")
    return parser


def _check_args(args):
    if args.t_max is not None and not (math.isfinite(args.t_max) and args.t_max > 0):
        raise InputError("--t-max must be a positive number")
    if args.points is not None and args.points < 2:
        raise InputError("--points must be >= 2")
    if args.samples is not None and args.samples < 1:
        raise InputError("--samples must be >= 1")
    if args.seed is not None and args.seed < 0:
        raise InputError("--seed must be >= 0")
    if args.tolerance is not None and not args.tolerance > 0:
        raise InputError("--tolerance must be > 0")


def main(argv=None):
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        _check_args(args)
        model = load_model(args.model)
        built = build(model)
        return COMMANDS[args.command](args, model, built)
    except (InputError, MshazError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
