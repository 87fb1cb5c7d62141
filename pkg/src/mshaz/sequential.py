"""Densities of sums of independent step times.

Exact results are built in the exponential-polynomial algebra: products of
Laplace-domain poles are split into partial fractions and inverted term by
term.  Numerical convolution on a uniform grid and the nested-integral form of
the m-fold convolution serve as independent routes to the same densities.
"""
from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache, reduce

import numpy as np
from scipy import special

from .curves import CurveSet, TimeGrid
from .distributions import Exponential, Gamma, PowerLawHazard, StepDistribution
from .errors import InvalidArgumentError, InvalidParameterError, UnsupportedOperationError
from .expoly import MERGE_RTOL, ExpPolyMix, cluster_rates
from .quadrature import integrate_cube

MAX_NESTED_STEPS = 4
GREGORY_ORDER = 8


# ---------------------------------------------------------------------------
# pole algebra


def merge_nearby_rates(poles, rtol=MERGE_RTOL):
    """Coalesce poles ``(rate, multiplicity)`` whose rates lie within ``rtol * max(rate)``.

    Multiplicities of a merged cluster are summed; its rate is the
    multiplicity-weighted mean.  Output is sorted by rate.
    """
    if not (0 < rtol <= 1e-3):
        raise InvalidParameterError(f"merge tolerance must lie in (0, 1e-3], got {rtol}")
    poles = [(float(mu), int(p)) for mu, p in poles]
    if not poles:
        return []
    merged = []
    for group in cluster_rates([mu for mu, _ in poles], rtol):
        mult = sum(poles[i][1] for i in group)
        rate = sum(poles[i][0] * poles[i][1] for i in group) / mult
        merged.append((rate, mult))
    return merged


def chi(rates):
    """Residues 1 / prod_{j != i} (mu_j - mu_i) of the product of simple poles."""
    rates = np.asarray(rates, dtype=float)
    out = np.empty_like(rates)
    for i, mu in enumerate(rates):
        others = np.delete(rates, i)
        out[i] = 1.0 / np.prod(others - mu)
    return out


def partial_fractions(poles):
    """Split ``prod_i 1/(s + mu_i)**p_i`` into ``sum residue / (s + mu)**k``.

    Returns ``(rate, k, residue)`` triples.  Rates must be distinct; merge
    coincident poles first.  Residues of each pole come from the Taylor
    expansion of the remaining factors, built with the exact recurrence
    ``(r+1) g_{r+1} = sum_n L_n g_{r-n}`` where L is the logarithmic derivative.
    """
    poles = [(float(mu), int(p)) for mu, p in poles]
    for mu, p in poles:
        if not np.isfinite(mu) or mu < 0:
            raise InvalidParameterError(f"pole rate must be finite and >= 0, got {mu}")
        if p < 1:
            raise InvalidParameterError(f"pole multiplicity must be >= 1, got {p}")
    rates = [mu for mu, _ in poles]
    if any(len(g) > 1 for g in cluster_rates(rates, MERGE_RTOL)):
        raise InvalidParameterError("duplicate pole rates; merge multiplicities first")
    out = []
    for i, (mu, p) in enumerate(poles):
        d = np.array([m - mu for j, (m, _) in enumerate(poles) if j != i])
        q = np.array([pj for j, (_, pj) in enumerate(poles) if j != i], dtype=float)
        g = np.zeros(p)
        g[0] = np.prod(d ** (-q)) if d.size else 1.0
        # L_n = -sum_j q_j (-1)^n / d_j^(n+1)
        L = np.array([-np.sum(q * (-1.0) ** n / d ** (n + 1)) for n in range(p)]) if d.size else np.zeros(p)
        for r in range(p - 1):
            g[r + 1] = np.dot(L[: r + 1], g[r::-1]) / (r + 1)
        for k in range(1, p + 1):
            out.append((mu, k, g[p - k]))
    return out


def _invert_fractions(fractions, scale=1.0):
    """Inverse Laplace transform of ``sum residue/(s+mu)^k`` as an ExpPolyMix term list."""
    return [(scale * res / math.factorial(k - 1), k - 1, mu) for mu, k, res in fractions]


def gamma_integer_sum(components, rtol=MERGE_RTOL):
    """Exact density of a sum of Gamma steps with integer shapes.

    ``components`` are ``(rate, shape)`` pairs.  Near-coincident rates are merged
    first, so equal rates reduce to a single Gamma law.
    """
    comps = []
    for mu, p in components:
        if float(p) != int(p) or p < 1:
            raise UnsupportedOperationError(f"integer shape >= 1 required, got {p}; use sum_sequential")
        if not (np.isfinite(mu) and mu > 0):
            raise InvalidParameterError(f"rate must be > 0, got {mu}")
        comps.append((float(mu), int(p)))
    if not comps:
        raise InvalidParameterError("at least one component is required")
    poles = merge_nearby_rates(comps, rtol)
    prefactor = math.prod(mu**p for mu, p in poles)
    # the unmerged stages keep close rates evaluable without cancellation
    chain = (math.prod(mu**p for mu, p in comps), tuple(mu for mu, p in comps for _ in range(p)))
    return ExpPolyMix(_invert_fractions(partial_fractions(poles), prefactor), proper=True, chain=chain)


def moolgavkar_exact(rates, rtol=MERGE_RTOL):
    """Density of a sum of exponential steps: ``prod(mu) * sum_i chi_i exp(-mu_i t)``.

    Near-duplicate rates are merged into higher-order poles rather than
    evaluated through cancelling residues.
    """
    rates = [float(r) for r in rates]
    if not rates:
        raise InvalidParameterError("at least one rate is required")
    for r in rates:
        if not (np.isfinite(r) and r > 0):
            raise InvalidParameterError(f"rates must be > 0, got {r}")
    poles = merge_nearby_rates([(r, 1) for r in rates], rtol)
    if any(p > 1 for _, p in poles):
        return gamma_integer_sum([(r, 1) for r in rates], rtol)
    mus = np.array([mu for mu, _ in poles])
    coef = np.prod(mus) * chi(mus)
    return ExpPolyMix([(c, 0, mu) for c, mu in zip(coef, mus)], proper=True, chain=(math.prod(rates), tuple(rates)))


def convolve_exact(f1, f2):
    """Exact convolution of two proper exponential-polynomial densities."""
    if not (f1.proper and f2.proper):
        raise UnsupportedOperationError("exact convolution needs proper densities")
    return _convolve_terms(f1, f2)


def _convolve_terms(f1, f2):
    """Termwise convolution; the result is proper exactly when both inputs are."""
    rates = [mu for _, _, mu in f1.terms] + [mu for _, _, mu in f2.terms]
    rep = {}
    for group in cluster_rates(rates, MERGE_RTOL):
        value = float(np.mean([rates[i] for i in group]))
        for i in group:
            rep[i] = value
    n1 = len(f1.terms)
    out = []
    for i, (c1, k1, _) in enumerate(f1.terms):
        a = rep[i]
        for j, (c2, k2, _) in enumerate(f2.terms):
            b = rep[n1 + j]
            scale = c1 * c2 * math.factorial(k1) * math.factorial(k2)
            if a == b:
                # int_0^t tau^k1 (t-tau)^k2 dtau = k1! k2! t^(k1+k2+1) / (k1+k2+1)!
                out.append((scale / math.factorial(k1 + k2 + 1), k1 + k2 + 1, a))
            else:
                out.extend(_invert_fractions(partial_fractions([(a, k1 + 1), (b, k2 + 1)]), scale))
    chain = None
    if f1.chain is not None and f2.chain is not None:
        chain = (f1.chain[0] * f2.chain[0], f1.chain[1] + f2.chain[1])
    return ExpPolyMix(out, proper=f1.proper and f2.proper, chain=chain)


def power_law_sum(components):
    """Small-time density of a sum of steps with power-law densities ``mu_i t^p_i``.

    Returns the improper law with coefficient
    ``prod(mu_i Gamma(1+p_i)) / Gamma(m + sum p_i)`` and exponent ``m - 1 + sum p_i``.
    """
    comps = [(float(mu), float(p)) for mu, p in components]
    if not comps:
        raise InvalidParameterError("at least one component is required")
    for mu, p in comps:
        if not (np.isfinite(mu) and mu > 0) or not (np.isfinite(p) and p >= 0):
            raise InvalidParameterError(f"power-law component needs mu > 0, p >= 0, got ({mu}, {p})")
    m = len(comps)
    ptot = sum(p for _, p in comps)
    log_coef = sum(math.log(mu) + special.gammaln(1.0 + p) for mu, p in comps) - special.gammaln(m + ptot)
    return PowerLawHazard(math.exp(log_coef), m - 1.0 + ptot)


# ---------------------------------------------------------------------------
# numerical convolution


@lru_cache(maxsize=None)
def gregory_end_corrections(order):
    """End-weight corrections e_i (i < order) turning the trapezoid rule into Gregory's rule.

    Solved exactly so that ``sum_i e_i i^d`` reproduces the Euler-Maclaurin
    boundary terms for d < order.
    """
    K = int(order)
    A = [[Fraction(i) ** d if (i or d) else Fraction(1) for i in range(K)] for d in range(K)]
    rhs = []
    for d in range(K):
        val = Fraction(-1, 2) if d == 0 else Fraction(0)
        if d % 2 == 1:
            val += _bernoulli(d + 1) / (d + 1)
        rhs.append(val)
    # Gaussian elimination in exact arithmetic
    M = [row[:] + [r] for row, r in zip(A, rhs)]
    for col in range(K):
        piv = next(r for r in range(col, K) if M[r][col] != 0)
        M[col], M[piv] = M[piv], M[col]
        for r in range(K):
            if r != col and M[r][col] != 0:
                fac = M[r][col] / M[col][col]
                M[r] = [x - fac * y for x, y in zip(M[r], M[col])]
    return tuple(float(M[i][K] / M[i][i]) for i in range(K))


def _bernoulli(n):
    B = [Fraction(1)]
    for m in range(1, n + 1):
        B.append(-sum(math.comb(m + 1, k) * B[k] for k in range(m)) / (m + 1))
    return B[n]


@lru_cache(maxsize=None)
def _startup_weights(order):
    """W[m][i, j] = int_0^m L_i(tau) L_j(m - tau) dtau for Lagrange bases on nodes 0..2*order-1."""
    D = 2 * order - 1
    x, w = np.polynomial.legendre.leggauss(2 * D + 8)

    def basis(z):
        out = np.ones((D + 1, z.size))
        for i in range(D + 1):
            for j in range(D + 1):
                if j != i:
                    out[i] *= (z - j) / (i - j)
        return out

    W = [np.zeros((D + 1, D + 1))]
    for m in range(1, D):
        tau = 0.5 * m * (x + 1.0)
        W.append(np.einsum("q,iq,jq->ij", 0.5 * m * w, basis(tau), basis(m - tau)))
    return W


def convolve_arrays(a, b, step, method="trapezoid", order=GREGORY_ORDER):
    """Discretised ``int_0^t a(tau) b(t - tau) dtau`` for samples on a uniform grid from 0.

    ``method="trapezoid"`` is second order; ``"gregory"`` adds end corrections
    of the given order to the same sums and integrates local Lagrange
    interpolants over the first few points, where the corrections do not fit.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidArgumentError("convolution operands must be 1-D arrays on the same grid")
    n = a.size
    full = np.convolve(a, b)[:n]
    if method == "trapezoid":
        out = full - 0.5 * (a[0] * b + a * b[0])
        out[0] = 0.0
        return out * step
    if method != "gregory":
        raise InvalidArgumentError(f"unknown convolution method {method!r}")
    K = int(order)
    e = gregory_end_corrections(K)
    out = full.copy()
    out[0] = 0.0
    big = np.arange(n) >= 2 * K - 1
    idx = np.flatnonzero(big)
    for i in range(K):
        out[idx] += e[i] * (a[i] * b[idx - i] + a[idx - i] * b[i])
    if n >= 2 * K:
        # the first points lack room for both end corrections; integrate local interpolants instead
        D = 2 * K - 1
        W = _startup_weights(K)
        for m in range(1, D):
            out[m] = a[: D + 1] @ W[m] @ b[: D + 1]
    else:
        for m in range(1, n):
            k = (m + 1) // 2
            ek = gregory_end_corrections(k)
            val = full[m]
            for i in range(k):
                val += ek[i] * (a[i] * b[m - i] + a[m - i] * b[i])
            out[m] = val
    return out * step


def convolve_numeric(f1, f2, method="trapezoid"):
    """Grid convolution of two densities given as CurveSets on one uniform grid from 0."""
    g1, g2 = f1.grid, f2.grid
    if not g1.same_as(g2):
        raise InvalidArgumentError("densities are sampled on different grids")
    if g1.spacing != "uniform" or not g1.starts_at_zero:
        raise InvalidArgumentError("numerical convolution needs a uniform grid starting at 0")
    return convolve_arrays(f1.f, f2.f, g1.step, method)


# ---------------------------------------------------------------------------
# sums of steps on a grid


def _exact_mix(step):
    if isinstance(step, ExpPolyMix):
        return step if step.proper else None
    if isinstance(step, Exponential):
        return step.as_mix()
    if isinstance(step, Gamma) and step.integer_shape:
        return step.as_mix()
    return None


def _poles_of(step):
    if isinstance(step, Exponential):
        return [(step.rate, 1)]
    if isinstance(step, Gamma) and step.integer_shape:
        return [(step.rate, int(step.shape))]
    return None


def exact_sum(steps):
    """ExpPolyMix of a sum of exponential / integer-Gamma / mixture steps, or None."""
    mixes = [_exact_mix(s) for s in steps]
    if any(m is None for m in mixes):
        return None
    poles = [_poles_of(s) for s in steps]
    if all(p is not None for p in poles):
        return gamma_integer_sum([pole for ps in poles for pole in ps])
    return reduce(convolve_exact, mixes)


def _sampled_density(step, t):
    """Density samples with a finite stand-in at an integrable singularity at t=0."""
    f = np.asarray(step.pdf(t), dtype=float)
    if not np.isfinite(f[0]):
        h = t[1] - t[0]
        # trapezoid over the first cell then reproduces the exact mass F(h)
        f = f.copy()
        f[0] = 2.0 * float(step.cdf(np.array([h]))[0]) / h - f[1]
    return f


def _numeric_sum(steps, grid, method, points):
    t_max = grid.t_max
    if grid.spacing == "uniform" and grid.starts_at_zero and len(grid) >= points:
        inner = grid
    else:
        inner = TimeGrid.uniform(t_max, max(points, len(grid)))
    t = inner.points
    step = inner.step
    f_acc = _sampled_density(steps[0], t)
    F_acc = np.asarray(steps[0].cdf(t), dtype=float)
    for s in steps[1:]:
        f_s = _sampled_density(s, t)
        f_new = convolve_arrays(f_acc, f_s, step, method)
        # F_{A+B}(t) = int f_B(tau) F_A(t - tau) dtau
        F_acc = convolve_arrays(f_s, F_acc, step, method)
        f_acc = f_new
    if inner is not grid:
        f_acc = np.interp(grid.points, t, f_acc)
        F_acc = np.interp(grid.points, t, F_acc)
    return CurveSet.from_survival(grid, 1.0 - F_acc, f_acc, F=F_acc, flags=("numeric",))


def sum_sequential(steps, grid, method="gregory", points=4096):
    """Curves of the failure time of a route whose steps occur one after another.

    Exponential and integer-shape Gamma steps (and proper mixtures) are
    combined exactly; any other step is folded in by grid convolution, with
    the exactly-solvable steps pre-combined into one known density.
    """
    steps = list(steps)
    if not steps:
        raise InvalidParameterError("a sequential route needs at least one step")
    for s in steps:
        if not getattr(s, "proper", True):
            raise UnsupportedOperationError("sequential sums need proper step densities")
    if len(steps) == 1:
        from .distributions import eval_curves

        return eval_curves(steps[0], grid)
    exact = exact_sum(steps)
    if exact is not None:
        return exact.curves(grid)
    known = [s for s in steps if _exact_mix(s) is not None]
    other = [s for s in steps if _exact_mix(s) is None]
    head = [exact_sum(known)] if known else []
    return _numeric_sum(head + other, grid, method, points)


# ---------------------------------------------------------------------------
# nested-integral form and parameterisation identities


def _simplex_weights(y):
    """Map y in [0,1]^(m-1) to fractions w_1..w_m summing to one, plus the measure.

    w_1 = y_1 ... y_{m-1}, w_j = (1 - y_{j-1}) y_j ... y_{m-1}, w_m = 1 - y_{m-1};
    measure = y_2 y_3^2 ... y_{m-1}^{m-2}.
    """
    n, d = y.shape
    m = d + 1
    w = np.empty((n, m))
    tail = np.ones(n)
    for j in range(m - 1, 0, -1):
        # fraction for step j+1 (1-based) uses y_j
        w[:, j] = (1.0 - y[:, j - 1]) * tail
        tail = tail * y[:, j - 1]
    w[:, 0] = tail
    measure = np.ones(n)
    for j in range(d):
        measure *= y[:, j] ** j
    return w, measure


def general_integral_eval(steps, t, rtol=1e-9):
    """Density of a sum of up to four steps at one time from the nested-integral form.

    ``f(t) = t^(m-1) int_[0,1]^(m-1) y_2 y_3^2 ... y_{m-1}^(m-2) prod_j f_j(t w_j(y)) dy``.
    """
    steps = list(steps)
    m = len(steps)
    if m == 0:
        raise InvalidParameterError("at least one step is required")
    if m > MAX_NESTED_STEPS:
        raise UnsupportedOperationError(f"nested quadrature supports at most {MAX_NESTED_STEPS} steps")
    t = float(t)
    if m == 1:
        return float(steps[0].pdf(np.array([t]))[0])
    if t <= 0:
        return 0.0

    def integrand(y):
        w, measure = _simplex_weights(y)
        val = measure
        for j, s in enumerate(steps):
            val = val * s.pdf(t * w[:, j])
        return val

    return t ** (m - 1) * integrate_cube(integrand, m - 1, rtol)


def schwinger_identity_check(rates, powers, s=0.0, rtol=1e-11):
    """Compare ``prod 1/(s+a_j)^p_j`` with its Feynman-parameter integral.

    Returns ``(lhs, rhs, |lhs - rhs|)``.
    """
    a = np.asarray(rates, dtype=float)
    p = np.asarray(powers, dtype=float)
    if a.shape != p.shape or a.size == 0:
        raise InvalidParameterError("rates and powers must be non-empty and of equal length")
    if np.any(a <= 0) or np.any(p < 1) or s < 0:
        raise InvalidParameterError("need a_j > 0, p_j >= 1, s >= 0")
    m = a.size
    if m > 3:
        raise UnsupportedOperationError("identity check supports at most 3 factors")
    lhs = float(np.prod((s + a) ** (-p)))
    ptot = p.sum()
    norm = math.exp(special.gammaln(ptot) - special.gammaln(p).sum())
    if m == 1:
        rhs = norm * (s + a[0]) ** (-ptot)
    else:

        def integrand(y):
            w, measure = _simplex_weights(y)
            val = measure * np.prod(w ** (p - 1.0), axis=1)
            return val / (s + w @ a) ** ptot

        rhs = norm * integrate_cube(integrand, m - 1, rtol)
    return lhs, rhs, abs(lhs - rhs)
