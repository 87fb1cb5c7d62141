"""Waiting-time laws for single steps, curve evaluation and seeded sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .curves import DEFAULT_POINTS, CurveSet, TimeGrid
from .errors import InvalidParameterError, UnsupportedOperationError
from .expoly import ExpPolyMix

HORIZON_TAIL = 1e-6


def _positive(name, value):
    value = float(value)
    if not np.isfinite(value):
        raise InvalidParameterError(f"{name} must be finite, got {value}")
    if value <= 0:
        raise InvalidParameterError(f"{name} must be > 0, got {value}")
    return value


class StepDistribution:
    """Common interface of the single-step waiting-time laws.

    Subclasses supply ``cumhaz`` and ``hazard`` (or override ``curves``), a
    sampler and an upper horizon.  ``proper`` is False for small-time
    approximations that are not normalised densities.
    """

    proper = True

    def hazard(self, t):
        raise NotImplementedError

    def cumhaz(self, t):
        raise NotImplementedError

    def sf(self, t):
        return np.exp(-self.cumhaz(np.asarray(t, dtype=float)))

    def cdf(self, t):
        return -np.expm1(-self.cumhaz(np.asarray(t, dtype=float)))

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t >= 0, self.hazard(t) * self.sf(t), 0.0)

    def curves(self, grid):
        t = grid.points
        flags = () if self.proper else ("improper",)
        return CurveSet.from_hazard(grid, self.hazard(t), self.cumhaz(t), flags=flags)

    def horizon(self, q=HORIZON_TAIL):
        raise NotImplementedError

    def sample(self, rng, size):
        raise NotImplementedError


@dataclass(frozen=True)
class Exponential(StepDistribution):
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "rate", _positive("rate", self.rate))

    def hazard(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.rate)

    def cumhaz(self, t):
        return self.rate * np.maximum(np.asarray(t, dtype=float), 0.0)

    def horizon(self, q=HORIZON_TAIL):
        return -math.log(q) / self.rate

    def sample(self, rng, size):
        return rng.exponential(1.0 / self.rate, size)

    def as_mix(self):
        return ExpPolyMix.exponential(self.rate)


@dataclass(frozen=True)
class Gamma(StepDistribution):
    shape: float
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "shape", _positive("shape", self.shape))
        object.__setattr__(self, "rate", _positive("rate", self.rate))

    @property
    def _law(self):
        return stats.gamma(a=self.shape, scale=1.0 / self.rate)

    @property
    def integer_shape(self):
        return float(self.shape).is_integer()

    def logpdf(self, t):
        return self._law.logpdf(np.asarray(t, dtype=float))

    def pdf(self, t):
        return self._law.pdf(np.asarray(t, dtype=float))

    def cumhaz(self, t):
        return -self._law.logsf(np.maximum(np.asarray(t, dtype=float), 0.0))

    def hazard(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore"):
            return np.exp(self._law.logpdf(t) - self._law.logsf(t))

    def sf(self, t):
        return self._law.sf(np.asarray(t, dtype=float))

    def cdf(self, t):
        return self._law.cdf(np.asarray(t, dtype=float))

    def curves(self, grid):
        t = grid.points
        flags = ("singular_origin",) if self.shape < 1 and t[0] == 0 else ()
        return CurveSet.from_hazard(grid, self.hazard(t), self.cumhaz(t), flags=flags)

    def horizon(self, q=HORIZON_TAIL):
        return float(self._law.isf(q))

    def sample(self, rng, size):
        return rng.gamma(self.shape, 1.0 / self.rate, size)

    def as_mix(self):
        return ExpPolyMix.gamma(self.shape, self.rate)


@dataclass(frozen=True)
class Weibull2(StepDistribution):
    """Linear hazard b t, survival exp(-b t^2 / 2)."""

    b: float

    def __post_init__(self):
        object.__setattr__(self, "b", _positive("b", self.b))

    def hazard(self, t):
        return self.b * np.maximum(np.asarray(t, dtype=float), 0.0)

    def cumhaz(self, t):
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        return 0.5 * self.b * t * t

    def horizon(self, q=HORIZON_TAIL):
        return math.sqrt(-2.0 * math.log(q) / self.b)

    def sample(self, rng, size):
        return np.sqrt(2.0 * rng.exponential(1.0, size) / self.b)


@dataclass(frozen=True)
class PowerLawHazard(StepDistribution):
    """Hazard ``coef * t**exponent``; a small-time approximation with f ~ h.

    Flagged improper.  Sampling requires a truncation ``horizon``: draws beyond
    it are returned as ``inf`` (no event inside the horizon).
    """

    coef: float
    exponent: float = 0.0
    truncation: float | None = None
    proper = False

    def __post_init__(self):
        object.__setattr__(self, "coef", _positive("coef", self.coef))
        p = float(self.exponent)
        if not np.isfinite(p) or p < 0:
            raise InvalidParameterError(f"exponent must be >= 0, got {self.exponent}")
        object.__setattr__(self, "exponent", p)
        if self.truncation is not None:
            object.__setattr__(self, "truncation", _positive("truncation", self.truncation))

    def hazard(self, t):
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        return self.coef * t**self.exponent

    def cumhaz(self, t):
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        p1 = self.exponent + 1.0
        return self.coef * t**p1 / p1

    def approx_pdf(self, t):
        """The power-law density approximation f ~ h."""
        return self.hazard(t)

    def horizon(self, q=HORIZON_TAIL):
        if self.truncation is None:
            raise UnsupportedOperationError("an improper power-law hazard has no horizon without truncation")
        return self.truncation

    def sample(self, rng, size):
        if self.truncation is None:
            raise UnsupportedOperationError("sampling an improper power-law hazard needs a truncation horizon")
        p1 = self.exponent + 1.0
        t = (p1 * rng.exponential(1.0, size) / self.coef) ** (1.0 / p1)
        return np.where(t <= self.truncation, t, np.inf)


@dataclass(frozen=True)
class LogisticDetection(StepDistribution):
    """Detection hazard ``a x(t)`` with logistic clone fraction ``x(t) = 1/(1+(N-1)e^{-ct})``."""

    a: float
    c: float
    N: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "a", _positive("a", self.a))
        object.__setattr__(self, "c", _positive("c", self.c))
        N = float(self.N)
        if not np.isfinite(N) or N < 1:
            raise InvalidParameterError(f"N must be >= 1, got {self.N}")
        object.__setattr__(self, "N", N)

    def hazard(self, t):
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        return self.a / (1.0 + (self.N - 1.0) * np.exp(-self.c * t))

    def clone_integral(self, t):
        """Definite integral of x from 0 to t, zero at t=0."""
        ct = self.c * np.maximum(np.asarray(t, dtype=float), 0.0)
        out = np.empty_like(ct)
        lo = ct <= 30.0
        out[lo] = np.log1p(np.expm1(ct[lo]) / self.N)
        hi = ~lo
        out[hi] = ct[hi] + np.log1p((self.N - 1.0) * np.exp(-ct[hi])) - math.log(self.N)
        return out / self.c

    def cumhaz(self, t):
        return self.a * self.clone_integral(t)

    def horizon(self, q=HORIZON_TAIL):
        target = -math.log(q)
        hi = (target / self.a) + math.log(self.N) / self.c + 1.0
        while self.cumhaz(np.array([hi]))[0] < target:
            hi *= 2.0
        return float(optimize.brentq(lambda x: self.cumhaz(np.array([x]))[0] - target, 0.0, hi))

    def sample(self, rng, size):
        e = rng.exponential(1.0, size)
        x = self.c * e / self.a
        # invert H: e^{ct} = N e^{x} - (N - 1)
        return (math.log(self.N) + x + np.log1p(-(self.N - 1.0) / self.N * np.exp(-x))) / self.c


@dataclass(frozen=True, eq=False)
class Tabulated(StepDistribution):
    """Density values on a grid, linearly interpolated and zero outside it."""

    grid: TimeGrid
    density: np.ndarray
    improper: bool = False
    _cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        d = np.array(self.density, dtype=float)
        if d.shape != (len(self.grid),):
            raise InvalidParameterError("tabulated density must match its grid")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise InvalidParameterError("tabulated density must be finite and >= 0")
        t = self.grid.points
        cum = np.concatenate(([0.0], np.cumsum(0.5 * (d[1:] + d[:-1]) * np.diff(t))))
        if not self.improper and abs(cum[-1] - 1.0) > 1e-6:
            raise InvalidParameterError(f"tabulated density integrates to {cum[-1]}, not 1")
        d.setflags(write=False)
        object.__setattr__(self, "density", d)
        object.__setattr__(self, "_cdf", cum)

    @property
    def proper(self):
        return not self.improper

    def pdf(self, t):
        return np.interp(np.asarray(t, dtype=float), self.grid.points, self.density, left=0.0, right=0.0)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        pts, d, cum = self.grid.points, self.density, self._cdf
        i = np.clip(np.searchsorted(pts, t, side="right") - 1, 0, pts.size - 2)
        dt = np.clip(t - pts[i], 0.0, pts[i + 1] - pts[i])
        slope = (d[i + 1] - d[i]) / (pts[i + 1] - pts[i])
        val = cum[i] + d[i] * dt + 0.5 * slope * dt * dt
        val = np.where(t < pts[0], 0.0, val)
        return np.where(t >= pts[-1], cum[-1], val)

    def sf(self, t):
        return 1.0 - self.cdf(t)

    def cumhaz(self, t):
        with np.errstate(divide="ignore"):
            return -np.log(self.sf(t))

    def hazard(self, t):
        s = self.sf(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(s > 0, self.pdf(t) / np.where(s > 0, s, 1.0), 0.0)

    def curves(self, grid):
        t = grid.points
        flags = ("improper",) if self.improper else ()
        return CurveSet.from_survival(grid, self.sf(t), self.pdf(t), F=self.cdf(t), flags=flags)

    def horizon(self, q=HORIZON_TAIL):
        return self.grid.t_max

    def sample(self, rng, size):
        if self.improper:
            raise UnsupportedOperationError("cannot sample an improper tabulated density")
        u = rng.random(size) * self._cdf[-1]
        # invert the piecewise-quadratic CDF on a fine resampling
        fine = np.linspace(self.grid.points[0], self.grid.t_max, 16 * len(self.grid) + 1)
        return np.interp(u, self.cdf(fine), fine)


def eval_curves(dist, grid):
    """Sample f, F, S, h and H of a step law or exponential-polynomial density on ``grid``."""
    if isinstance(dist, ExpPolyMix):
        if not dist.proper:
            t = grid.points
            f = dist.pdf(t)
            F = dist.cdf(t)
            # an improper density is read as a hazard: S = exp(-int h)
            return CurveSet.from_hazard(grid, f, F, flags=("improper",))
        return dist.curves(grid)
    if not isinstance(dist, StepDistribution):
        raise InvalidParameterError(f"cannot evaluate curves of {type(dist).__name__}")
    return dist.curves(grid)


def horizon_of(dists, q=HORIZON_TAIL):
    """An upper time bound covering all but ``q`` of the mass of a sum of the given steps."""
    total = 0.0
    for d in dists:
        total += d.horizon(q) if not isinstance(d, ExpPolyMix) else d.quantile_upper(q)
    return total


def default_grid(dists, points=DEFAULT_POINTS, q=HORIZON_TAIL):
    """Uniform grid from 0 to the 1 - q quantile bound of the summed steps."""
    if isinstance(dists, (StepDistribution, ExpPolyMix)):
        dists = [dists]
    return TimeGrid.uniform(horizon_of(dists, q), points)


def sample_step(dist, count, seed):
    """Draw ``count`` seeded samples of a step law; identical seeds give identical draws."""
    count = int(count)
    if count < 1:
        raise InvalidParameterError("count must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed) & (2**64 - 1)))
    out = np.asarray(dist.sample(rng, count), dtype=float)
    return out
