"""Cascading failures: component failure orders with history-dependent waiting times.

Each ordering of the m components is one route.  The waiting time for the next
component depends on which components have already failed.  Route densities
come from the sequential engine, and system survival is the product of route
survivals.  Two further constructions are offered.  ``competing=True`` gives
each step's sub-density f_X * prod S_Y over the still-working components.
``composition="partition"`` sums these route masses, which reproduces the race
between components exactly.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .curves import CurveSet, TimeGrid, compose_competing
from .distributions import Exponential, Gamma, StepDistribution
from .errors import ConfigurationError, InvalidParameterError, UnsupportedOperationError
from .expoly import ExpPolyMix
from .sequential import convolve_arrays, sum_sequential

MAX_COMPONENTS = 8


@dataclass(frozen=True, eq=False)
class CascadeSpec:
    """Components and their conditional waiting-time laws.

    ``laws`` maps ``(frozenset(failed), next)`` to a StepDistribution.  When
    ``prefix_laws`` holds an entry for ``(tuple(ordered prefix), next)`` it takes
    precedence, so the law may depend on the order of earlier failures.
    """

    components: tuple
    laws: dict
    prefix_laws: dict = field(default_factory=dict)

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise InvalidParameterError("a cascade needs at least one component")
        if len(set(comps)) != len(comps):
            raise InvalidParameterError("component labels must be unique")
        laws = {}
        for (failed, nxt), law in dict(self.laws).items():
            failed = frozenset(failed)
            if nxt not in comps or not failed <= set(comps) or nxt in failed:
                raise ConfigurationError(f"law key ({sorted(failed)}, {nxt!r}) does not fit the components")
            _check_law(law, (sorted(failed), nxt))
            laws[(failed, nxt)] = law
        prefix = {}
        for (pre, nxt), law in dict(self.prefix_laws).items():
            pre = tuple(pre)
            if nxt not in comps or nxt in pre or not set(pre) <= set(comps):
                raise ConfigurationError(f"prefix law key ({list(pre)}, {nxt!r}) does not fit the components")
            _check_law(law, (list(pre), nxt))
            prefix[(pre, nxt)] = law
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "laws", laws)
        object.__setattr__(self, "prefix_laws", prefix)

    @property
    def m(self):
        return len(self.components)

    def law(self, prefix, nxt):
        """Law of the waiting time for ``nxt`` after the components in ``prefix`` have failed."""
        prefix = tuple(prefix)
        if (prefix, nxt) in self.prefix_laws:
            return self.prefix_laws[(prefix, nxt)]
        key = (frozenset(prefix), nxt)
        if key not in self.laws:
            raise ConfigurationError(f"no law for next={nxt!r} after failed set {sorted(prefix)}")
        return self.laws[key]

    @classmethod
    def history_independent(cls, laws):
        """Spec whose law for each component ignores what has failed before."""
        comps = tuple(laws)
        table = {}
        for c in comps:
            others = [o for o in comps if o != c]
            for r in range(len(others) + 1):
                for failed in itertools.combinations(others, r):
                    table[(frozenset(failed), c)] = laws[c]
        return cls(comps, table)


def _check_law(law, where):
    if not isinstance(law, (StepDistribution, ExpPolyMix)):
        raise ConfigurationError(f"law for {where} is not a distribution")
    if not getattr(law, "proper", True):
        raise ConfigurationError(f"law for {where} is improper")


def enumerate_orderings(spec):
    """All m! failure orders, in lexicographic order of component position."""
    if spec.m > MAX_COMPONENTS:
        raise UnsupportedOperationError(f"at most {MAX_COMPONENTS} components ({spec.m} given)")
    return list(itertools.permutations(spec.components))


def route_laws(ordering, spec):
    """Step laws along one ordering."""
    ordering = tuple(ordering)
    if sorted(map(str, ordering)) != sorted(map(str, spec.components)) or len(set(ordering)) != spec.m:
        raise InvalidParameterError(f"{ordering!r} is not an ordering of the components")
    return [spec.law(ordering[:i], c) for i, c in enumerate(ordering)]


def _as_mix(law):
    if isinstance(law, ExpPolyMix):
        return law
    if isinstance(law, Exponential) or (isinstance(law, Gamma) and law.integer_shape):
        return law.as_mix()
    return None


def stage_subdensities(ordering, spec):
    """For each step, the law of the winner and the laws of the components it races against."""
    ordering = tuple(ordering)
    out = []
    for i, c in enumerate(ordering):
        prefix = ordering[:i]
        rivals = [spec.law(prefix, o) for o in ordering[i + 1 :]]
        out.append((spec.law(prefix, c), rivals))
    return out


def _subdensity_mix(winner, rivals):
    mix = _as_mix(winner)
    if mix is None:
        return None
    for r in rivals:
        rm = _as_mix(r)
        if rm is None:
            return None
        mix = mix.multiply(rm.survival_mix())
    return mix


def _stage_mass(winner, rivals):
    mix = _subdensity_mix(winner, rivals)
    if mix is not None:
        return mix.mass()
    f = lambda x: float(winner.pdf(np.array([x]))[0] * np.prod([r.sf(np.array([x]))[0] for r in rivals]))
    return integrate.quad(f, 0.0, np.inf, limit=200)[0]


def route_probability(ordering, spec):
    """Probability that components fail in ``ordering`` when they race against each other."""
    return math.prod(_stage_mass(w, r) for w, r in stage_subdensities(ordering, spec))


def route_probabilities(spec):
    return {o: route_probability(o, spec) for o in enumerate_orderings(spec)}


def _defective_curves(grid, f, F, flags=()):
    """Curves of a sub-distribution with total mass below one: S = 1 - F."""
    F = np.asarray(F, dtype=float)
    return CurveSet.from_survival(grid, 1.0 - F, f, F=F, flags=flags)


def _competing_parts(ordering, spec, grid, points=4096):
    """Sub-density, sub-distribution and tail mass of one ordering of the race."""
    stages = stage_subdensities(ordering, spec)
    mixes = [_subdensity_mix(w, r) for w, r in stages]
    if all(m is not None for m in mixes):
        from .sequential import _convolve_terms

        total = mixes[0]
        for m in mixes[1:]:
            total = _convolve_terms(total, m)
        t = grid.points
        return total.pdf(t), total.cdf(t), total.tail(t), ("route-partition",)
    # numeric: sub-densities sampled on an internal uniform grid
    inner = grid if (grid.spacing == "uniform" and grid.starts_at_zero and len(grid) >= points) else TimeGrid.uniform(
        grid.t_max, max(points, len(grid))
    )
    t = inner.points
    h = inner.step
    subs = []
    for w, rivals in stages:
        val = np.asarray(w.pdf(t), dtype=float)
        for r in rivals:
            val = val * r.sf(t)
        subs.append(val)
    f = subs[0]
    for s in subs[1:]:
        f = convolve_arrays(f, s, h, "gregory")
    F = np.concatenate(([0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * h)))
    if inner is not grid:
        f = np.interp(grid.points, t, f)
        F = np.interp(grid.points, t, F)
    tail = np.maximum(route_probability(ordering, spec) - F, 0.0)
    return f, F, tail, ("route-partition", "numeric")


def cascade_route_pdf(ordering, spec, grid, competing=False):
    """Curves of the failure time along one ordering.

    By default the steps are the unconditional laws along the route, summed as
    independent waiting times.  With ``competing=True`` each step is the
    sub-density of that component failing first, so the result carries mass
    equal to ``route_probability``.
    """
    if competing:
        f, F, _, flags = _competing_parts(ordering, spec, grid)
        return _defective_curves(grid, f, F, flags)
    return sum_sequential(route_laws(ordering, spec), grid)


def cascade_survival(spec, grid, composition="product"):
    """System curves of a cascade, with the per-ordering curves.

    ``composition="product"`` multiplies route survivals.  ``"partition"``
    adds the route sub-distributions of the race, which is exact when every
    surviving component restarts its clock after each failure.
    """
    orders = enumerate_orderings(spec)
    if composition == "product":
        routes = {o: cascade_route_pdf(o, spec, grid) for o in orders}
        return compose_competing(routes.values(), grid), routes
    if composition == "partition":
        parts = {o: _competing_parts(o, spec, grid) for o in orders}
        routes = {o: _defective_curves(grid, f, F, fl) for o, (f, F, _, fl) in parts.items()}
        f = np.sum([p[0] for p in parts.values()], axis=0)
        F = np.sum([p[1] for p in parts.values()], axis=0)
        # the route masses sum to one, so system survival is the sum of the route tails
        S = np.sum([p[2] for p in parts.values()], axis=0)
        return CurveSet.from_survival(grid, S, f, F=F), routes
    raise InvalidParameterError(f"unknown composition {composition!r}")


def powerlaw_cascade(components, grid):
    """Curves with survival exp(-sum a_i t^p_i)."""
    terms = _powerlaw_terms(components)
    t = grid.points
    H = np.zeros_like(t)
    h = np.zeros_like(t)
    for a, p in terms:
        H += a * t**p
        with np.errstate(divide="ignore"):
            h += a * p * np.power(t, p - 1.0, where=t > 0, out=np.full_like(t, 0.0 if p > 1 else (np.inf if p < 1 else 1.0)))
    return CurveSet.from_hazard(grid, h, H)


def _powerlaw_terms(components):
    terms = [(float(a), float(p)) for a, p in components]
    if not terms:
        raise InvalidParameterError("at least one power-law term is required")
    for a, p in terms:
        if not (np.isfinite(a) and a > 0 and np.isfinite(p) and p > 0):
            raise InvalidParameterError(f"power-law terms need a > 0 and p > 0, got ({a}, {p})")
    return terms


def hazard_crossovers(components):
    """Times at which the leading hazard term changes, ``a_i p_i t^(p_i-1) = a_j p_j t^(p_j-1)``.

    Returns sorted ``(time, term_before, term_after)`` for consecutive leaders.
    """
    terms = _powerlaw_terms(components)
    lead = lambda t: max(range(len(terms)), key=lambda i: terms[i][0] * terms[i][1] * t ** (terms[i][1] - 1.0))
    cuts = set()
    for i, j in itertools.combinations(range(len(terms)), 2):
        (ai, pi), (aj, pj) = terms[i], terms[j]
        if pi != pj:
            cuts.add((ai * pi / (aj * pj)) ** (1.0 / (pj - pi)))
    out = []
    for t in sorted(cuts):
        before, after = lead(t * (1 - 1e-9)), lead(t * (1 + 1e-9))
        if before != after:
            out.append((t, before, after))
    return out


def dominant_term(components, t):
    """Index of the largest hazard term at each time."""
    terms = _powerlaw_terms(components)
    t = np.asarray(t, dtype=float)
    vals = np.array([a * p * np.power(t, p - 1.0, where=t > 0, out=np.full_like(t, 0.0 if p > 1 else (np.inf if p < 1 else 1.0))) for a, p in terms])
    return np.argmax(vals, axis=0)
