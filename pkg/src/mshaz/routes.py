"""Systems of competing failure routes, unordered routes and discrete lifetime risk."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .cascade import CascadeSpec, cascade_survival, powerlaw_cascade, _powerlaw_terms
from .curves import CurveSet, compose_competing
from .distributions import StepDistribution, eval_curves
from .errors import InvalidParameterError, MshazError, RouteEvaluationError, UnsupportedOperationError
from .expoly import ExpPolyMix
from .sequential import sum_sequential


def _step_list(steps):
    steps = tuple(steps)
    if not steps:
        raise InvalidParameterError("a route needs at least one step")
    for s in steps:
        if not isinstance(s, (StepDistribution, ExpPolyMix)):
            raise InvalidParameterError(f"{s!r} is not a step distribution")
    return steps


@dataclass(frozen=True)
class SequentialRoute:
    """Steps that must occur in order; the failure time is their sum."""

    steps: tuple

    def __post_init__(self):
        object.__setattr__(self, "steps", _step_list(self.steps))


@dataclass(frozen=True)
class UnorderedRoute:
    """Steps that must all occur, in any order; the failure time is their maximum."""

    steps: tuple

    def __post_init__(self):
        object.__setattr__(self, "steps", _step_list(self.steps))


@dataclass(frozen=True)
class CascadeRoute:
    spec: CascadeSpec
    composition: str = "product"


@dataclass(frozen=True)
class PowerLawRoute:
    """Route with cumulative hazard sum a_i t^p_i."""

    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(_powerlaw_terms(self.terms)))


@dataclass(frozen=True)
class SystemSpec:
    """Competing routes, each carried independently by ``multiplicity`` equivalent units."""

    routes: tuple
    multiplicity: int = 1

    def __post_init__(self):
        routes = tuple(self.routes)
        if not routes:
            raise InvalidParameterError("a system needs at least one route")
        n = self.multiplicity
        if int(n) != n or n < 1:
            raise InvalidParameterError(f"multiplicity must be an integer >= 1, got {n}")
        object.__setattr__(self, "routes", routes)
        object.__setattr__(self, "multiplicity", int(n))


def route_curves(route, grid):
    if isinstance(route, SequentialRoute):
        return sum_sequential(route.steps, grid)
    if isinstance(route, UnorderedRoute):
        return unordered_route_survival(route.steps, grid)
    if isinstance(route, CascadeRoute):
        return cascade_survival(route.spec, grid, route.composition)[0]
    if isinstance(route, PowerLawRoute):
        return powerlaw_cascade(route.terms, grid)
    if isinstance(route, (StepDistribution, ExpPolyMix)):
        return eval_curves(route, grid)
    raise InvalidParameterError(f"unknown route type {type(route).__name__}")


def combine_routes(spec, grid):
    """System curves: S = (prod S_i)^n_s, h = n_s sum h_i, H = n_s sum H_i."""
    curves = []
    for i, route in enumerate(spec.routes):
        try:
            curves.append(route_curves(route, grid))
        except MshazError as exc:
            raise RouteEvaluationError(i, exc) from exc
    return compose_competing(curves, grid, spec.multiplicity)


def unordered_route_survival(steps, grid):
    """S = 1 - prod F_j, with density sum_j f_j prod_{k != j} F_k."""
    steps = _step_list(steps)
    for s in steps:
        if not getattr(s, "proper", True):
            raise UnsupportedOperationError("unordered routes need proper step distributions")
    parts = [eval_curves(s, grid) for s in steps]
    if len(parts) == 1:
        return parts[0]
    F = np.prod([p.F for p in parts], axis=0)
    # 1 - prod(1 - S_j) without cancellation when every S_j is small
    with np.errstate(divide="ignore"):
        S = -np.expm1(np.sum([np.log1p(-p.S) for p in parts], axis=0))
    f = np.zeros(len(grid))
    for j, p in enumerate(parts):
        others = np.prod([q.F for k, q in enumerate(parts) if k != j], axis=0)
        f += p.f * others
    flags = frozenset().union(*(p.flags for p in parts))
    return CurveSet.from_survival(grid, S, f, F=F, flags=flags)


class LifetimeRisk(NamedTuple):
    exact: float
    approx: float
    rel_diff: float


def _check_risk_args(mu, d, m, n):
    mu = float(mu)
    if not (0.0 < mu <= 1.0):
        raise InvalidParameterError(f"mutation probability must lie in (0, 1], got {mu}")
    for name, v in (("divisions", d), ("steps", m), ("cells", n)):
        if not (math.isfinite(v) and v >= 1):
            raise InvalidParameterError(f"{name} must be >= 1, got {v}")
    return mu, float(d), float(m), float(n)


def lifetime_risk(mu, d, m, n):
    """Risk 1 - (1 - (1 - (1-mu)^d)^m)^n that one of n cells collects all m mutations.

    Evaluated through log1p/expm1 so that tiny mu and huge n neither underflow
    nor overflow.  Also returns the small-(mu d) form n (mu d)^m and the
    relative difference between the two.
    """
    mu, d, m, n = _check_risk_args(mu, d, m, n)
    with np.errstate(divide="ignore"):
        q = -math.expm1(d * math.log1p(-mu)) if mu < 1.0 else 1.0
        r = math.exp(m * math.log(q))
        exact = 1.0 if r >= 1.0 else -math.expm1(n * math.log1p(-r))
    approx = math.exp(math.log(n) + m * (math.log(mu) + math.log(d)))
    rel = abs(approx - exact) / exact if exact > 0 else math.inf
    return LifetimeRisk(exact, approx, rel)


def lifetime_curves(mu, m, n, grid):
    """Curves of the lifetime-risk model with the number of divisions d as the time axis.

    S(d) = (1 - q^m)^n with q = 1 - (1-mu)^d, treated as continuous in d.
    """
    mu, _, m, n = _check_risk_args(mu, 1, m, n)
    d = grid.points
    if mu >= 1.0:
        raise InvalidParameterError("continuous lifetime curves need mu < 1")
    lg = math.log1p(-mu)
    q = -np.expm1(d * lg)
    dq = -np.exp(d * lg) * lg
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.exp(m * np.log(q))
        H = -n * np.log1p(-r)
        h = np.where(d > 0, n * m * np.exp((m - 1) * np.log(q)) * dq / (1.0 - r), 0.0 if m > 1 else n * -lg)
    return CurveSet.from_hazard(grid, h, H)
