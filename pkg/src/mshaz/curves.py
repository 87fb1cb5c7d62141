"""Time grids and sampled f/F/S/h/H curve sets."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, InvalidParameterError

DEFAULT_POINTS = 1024


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing, non-negative evaluation times."""

    points: np.ndarray
    spacing: str = "uniform"

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise InvalidParameterError("a time grid needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise InvalidParameterError("time grid contains non-finite points")
        if pts[0] < 0:
            raise InvalidParameterError("time grid must start at t >= 0")
        if np.any(np.diff(pts) <= 0):
            raise InvalidParameterError("time grid must be strictly increasing")
        if self.spacing not in ("uniform", "logarithmic", "irregular"):
            raise InvalidParameterError(f"unknown grid spacing {self.spacing!r}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, t_max, points=DEFAULT_POINTS, t_min=0.0):
        if not (np.isfinite(t_max) and t_max > t_min):
            raise InvalidParameterError(f"t_max must exceed t_min, got {t_max}")
        return cls(np.linspace(t_min, t_max, int(points)), "uniform")

    @classmethod
    def logarithmic(cls, t_min, t_max, points=DEFAULT_POINTS):
        if not (0 < t_min < t_max):
            raise InvalidParameterError("logarithmic grid needs 0 < t_min < t_max")
        return cls(np.geomspace(t_min, t_max, int(points)), "logarithmic")

    def __len__(self):
        return self.points.size

    @property
    def t_max(self):
        return float(self.points[-1])

    @property
    def step(self):
        """Spacing of a uniform grid."""
        if self.spacing != "uniform":
            raise InvalidArgumentError("grid is not uniform")
        return float(self.points[1] - self.points[0])

    @property
    def starts_at_zero(self):
        return self.points[0] == 0.0

    def same_as(self, other):
        return len(self) == len(other) and np.array_equal(self.points, other.points)


@dataclass(frozen=True, eq=False)
class CurveSet:
    """Density, distribution, survival, hazard and cumulative hazard on one grid.

    ``flags`` records numerical events met while building the curves, such as
    ``"underflow"`` (survival clamped to zero) or ``"improper"``.
    """

    grid: TimeGrid
    f: np.ndarray
    F: np.ndarray
    S: np.ndarray
    h: np.ndarray
    H: np.ndarray
    flags: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        n = len(self.grid)
        for name in ("f", "F", "S", "h", "H"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise InvalidArgumentError(f"curve {name} has shape {arr.shape}, expected ({n},)")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "flags", frozenset(self.flags))

    @property
    def t(self):
        return self.grid.points

    @classmethod
    def from_hazard(cls, grid, h, H, flags=()):
        """Build from an analytic hazard and cumulative hazard."""
        h = np.asarray(h, dtype=float)
        H = np.asarray(H, dtype=float)
        S = np.exp(-H)
        # subnormal survival has lost its relative precision; treat as zero
        S = np.where(S < np.finfo(float).tiny, 0.0, S)
        F = -np.expm1(-H)
        with np.errstate(invalid="ignore"):
            f = np.where(S > 0, h * S, 0.0)
        flags = set(flags)
        if np.any(S == 0):
            flags.add("underflow")
        return cls(grid, f, F, S, h, H, frozenset(flags))

    @classmethod
    def from_survival(cls, grid, S, f, F=None, flags=()):
        """Build from survival and density values, deriving h = f/S and H = -ln S.

        Survival is clipped to [0, 1] and made non-increasing; roundoff-level
        density noise where S has underflowed is zeroed.
        """
        S = np.minimum.accumulate(np.clip(np.asarray(S, dtype=float), 0.0, 1.0))
        f = np.asarray(f, dtype=float).copy()
        flags = set(flags)
        if F is None:
            F = 1.0 - S
            with np.errstate(divide="ignore"):
                H = -np.log(S)
        else:
            F = np.clip(np.asarray(F, dtype=float), 0.0, 1.0)
            F = np.maximum.accumulate(F)
            # keep the more accurate of the two representations on each side
            small = F < 0.5
            S = np.minimum.accumulate(np.where(small, 1.0 - F, S))
            with np.errstate(divide="ignore"):
                H = np.where(small, -np.log1p(-F), -np.log(np.where(small, 1.0, S)))
            F = np.where(small, F, 1.0 - S)
        live = S > 0
        h = np.zeros_like(S)
        h[live] = f[live] / S[live]
        if not live.all():
            # S is non-increasing, so clamped points form a tail
            flags.add("underflow")
            f[~live] = 0.0
            alive = np.flatnonzero(live)
            h[~live] = h[alive[-1]] if alive.size else 0.0
        return cls(grid, f, F, S, h, H, frozenset(flags))

    @classmethod
    def from_density(cls, grid, f, flags=()):
        """Build from density samples alone, integrating with the trapezoid rule from t=0."""
        if not grid.starts_at_zero:
            raise InvalidArgumentError("density-only curves need a grid starting at t=0")
        f = np.asarray(f, dtype=float)
        F = np.concatenate(([0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(grid.points))))
        return cls.from_survival(grid, 1.0 - F, f, F=F, flags=flags)

    def violations(self, atol=1e-10, rel_fh=1e-8):
        """List violated CurveSet invariants (empty when consistent)."""
        problems = []
        for name in ("f", "F", "S", "h", "H"):
            if np.any(np.isnan(getattr(self, name))):
                problems.append(f"{name} contains NaN")
        if self.grid.starts_at_zero and self.S[0] != 1.0:
            problems.append(f"S(0) = {self.S[0]!r} != 1")
        if np.any(np.diff(self.S) > 0):
            problems.append("S is not non-increasing")
        if np.max(np.abs(self.F - (1.0 - self.S))) > 1e-15:
            problems.append("F != 1 - S")
        with np.errstate(divide="ignore"):
            lnS = -np.log(self.S)
        finite = np.isfinite(lnS)
        if np.any(np.abs(self.H[finite] - lnS[finite]) > atol * np.maximum(1.0, np.abs(lnS[finite]))):
            problems.append("H != -ln S")
        fmax = np.max(np.abs(self.f[np.isfinite(self.f)]), initial=0.0)
        ok = np.isfinite(self.f) & np.isfinite(self.h)
        if np.any(np.abs(self.f[ok] - self.h[ok] * self.S[ok]) > rel_fh * max(fmax, 1e-300)):
            problems.append("f != h S")
        return problems

    def mass(self):
        """Trapezoid integral of f over the grid."""
        return float(np.trapezoid(self.f, self.t))

    def peak(self):
        return float(np.max(self.f))

    def with_flags(self, *extra):
        return CurveSet(self.grid, self.f, self.F, self.S, self.h, self.H, self.flags | set(extra))

    def rows(self):
        """Iterate (t, f, F, S, h, H) tuples."""
        return zip(self.t, self.f, self.F, self.S, self.h, self.H)


def compose_competing(curve_sets, grid, multiplicity=1):
    """System curves when failure occurs on the first of several independent routes.

    Cumulative hazards and hazards add (scaled by ``multiplicity``); survival is
    recomputed as exp(-H) so the log-space identity holds to roundoff.
    """
    curve_sets = list(curve_sets)
    if not curve_sets:
        raise InvalidParameterError("at least one route is required")
    n = int(multiplicity)
    if n < 1:
        raise InvalidParameterError(f"multiplicity must be >= 1, got {multiplicity}")
    if len(curve_sets) == 1 and n == 1:
        return curve_sets[0]
    H = n * np.sum([c.H for c in curve_sets], axis=0)
    h = n * np.sum([c.h for c in curve_sets], axis=0)
    flags = frozenset().union(*(c.flags for c in curve_sets))
    return CurveSet.from_hazard(grid, h, H, flags=flags)
