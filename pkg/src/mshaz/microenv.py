"""Step rates that drift linearly with elapsed time.

Step j has small-time density ``mu_j0 + mu_j1 * (t_1 + ... + t_j)``.  The joint
density is taken in the polynomial form ``a_0 + sum_j a_j t_j^(m-j+1)``, whose
integral over the simplex t_1 + ... + t_m = t is the two-part power law
evaluated by ``microenv_pdf``.  The residual of that form against the full
product of step rates is reported separately.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .curves import CurveSet
from .errors import InvalidParameterError, UnsupportedOperationError
from .quadrature import integrate_cube
from .sequential import _simplex_weights

MAX_ORACLE_STEPS = 3


@dataclass(frozen=True)
class MicroEnvModel:
    """Base rates ``mu0`` (> 0) and drift rates ``mu1`` (any sign), one per step."""

    mu0: tuple
    mu1: tuple

    def __post_init__(self):
        mu0 = tuple(float(x) for x in self.mu0)
        mu1 = tuple(float(x) for x in self.mu1)
        if not mu0:
            raise InvalidParameterError("at least one step is required")
        if len(mu0) != len(mu1):
            raise InvalidParameterError("mu0 and mu1 must have the same length")
        if any(not (np.isfinite(x) and x > 0) for x in mu0):
            raise InvalidParameterError("base rates mu0 must be > 0")
        if any(not np.isfinite(x) for x in mu1):
            raise InvalidParameterError("drift rates mu1 must be finite")
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "mu1", mu1)

    @property
    def m(self):
        return len(self.mu0)


def microenv_coeffs(model):
    """Return ``(a0, [a_1, ..., a_m])``.

    a_0 = prod mu_j0.  a_j is the coefficient of the pure power t_j^(m-j+1) in
    the product of step rates: t_j enters the factors of steps j..m, so
    a_j = prod_{i<j} mu_i0 * prod_{i>=j} mu_i1.
    """
    mu0, mu1 = model.mu0, model.mu1
    m = model.m
    a0 = math.prod(mu0)
    a = [math.prod(mu0[: j - 1]) * math.prod(mu1[j - 1 :]) for j in range(1, m + 1)]
    return a0, a


def _power_terms(model):
    """(coefficient, exponent) pairs of the density as a sum of powers of t."""
    a0, a = microenv_coeffs(model)
    m = model.m
    terms = [(a0 / math.gamma(m), m - 1)]
    for j, aj in enumerate(a, start=1):
        coef = aj * math.exp(special.gammaln(m - j + 2) - special.gammaln(2 * m - j + 1))
        terms.append((coef, 2 * m - j))
    return terms


def microenv_density(model, t):
    """Density ``a0 t^(m-1)/Gamma(m) + sum_j a_j Gamma(m-j+2)/Gamma(2m-j+1) t^(2m-j)``."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for c, k in _power_terms(model):
        out = out + c * t**k
    return out


def correction_ratio(model, t):
    """Ratio of the drift terms to the leading term at each time."""
    t = np.asarray(t, dtype=float)
    terms = _power_terms(model)
    lead_c, lead_k = terms[0]
    corr = np.zeros_like(t)
    for c, k in terms[1:]:
        corr = corr + c * t ** (k - lead_k)
    return corr / lead_c


def correction_constant(m):
    """C with |correction ratio| <= C * x for x = max_j |mu_j1| t / mu_j0 <= 1."""
    return sum(
        math.exp(special.gammaln(m - j + 2) + special.gammaln(m) - special.gammaln(2 * m - j + 1))
        for j in range(1, m + 1)
    )


def microenv_pdf(model, grid):
    """Improper small-time curves of the drifting-rate model.

    Flags: ``negative_density`` when f < 0 on the grid, ``declining`` when f
    decreases somewhere, ``higher_order_dominates`` when the drift terms exceed
    the leading power.
    """
    t = grid.points
    f = microenv_density(model, t)
    H = np.zeros_like(t)
    for c, k in _power_terms(model):
        H = H + c * t ** (k + 1) / (k + 1)
    flags = {"improper"}
    if np.any(f < 0):
        flags.add("negative_density")
    if np.any(np.diff(f) < 0):
        flags.add("declining")
    ratio = correction_ratio(model, t[t > 0])
    if np.any(np.abs(ratio) > 1.0):
        flags.add("higher_order_dominates")
    return CurveSet.from_hazard(grid, f, H, flags=flags)


def _stated_joint(model, tj):
    a0, a = microenv_coeffs(model)
    m = model.m
    out = np.full(tj.shape[0], a0)
    for j in range(1, m + 1):
        out = out + a[j - 1] * tj[:, j - 1] ** (m - j + 1)
    return out


def _product_joint(model, tj):
    cum = np.cumsum(tj, axis=1)
    out = np.ones(tj.shape[0])
    for j in range(model.m):
        out = out * (model.mu0[j] + model.mu1[j] * cum[:, j])
    return out


def microenv_oracle(model, t, form="stated", rtol=1e-10):
    """Density at ``t`` by quadrature of the joint density over the simplex sum t_j = t.

    ``form="stated"`` integrates the polynomial form used by ``microenv_pdf``;
    ``form="product"`` integrates the full product of drifting step rates.
    """
    m = model.m
    if m > MAX_ORACLE_STEPS:
        raise UnsupportedOperationError(f"simplex quadrature supports at most {MAX_ORACLE_STEPS} steps")
    joint = {"stated": _stated_joint, "product": _product_joint}.get(form)
    if joint is None:
        raise InvalidParameterError(f"unknown form {form!r}")
    t = float(t)
    if m == 1:
        return float(joint(model, np.array([[t]]))[0])
    if t <= 0:
        return 0.0

    def integrand(y):
        w, measure = _simplex_weights(y)
        return measure * joint(model, t * w)

    return t ** (m - 1) * integrate_cube(integrand, m - 1, rtol)


def expansion_residual(model, points):
    """Max |product - stated form| of the joint density over the given (n, m) step times."""
    tj = np.atleast_2d(np.asarray(points, dtype=float))
    if tj.shape[1] != model.m:
        raise InvalidParameterError(f"points need {model.m} columns")
    return float(np.max(np.abs(_product_joint(model, tj) - _stated_joint(model, tj))))
