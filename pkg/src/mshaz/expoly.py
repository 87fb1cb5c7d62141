"""Exponential-polynomial mixtures: densities of the form sum_i c_i t^k_i exp(-mu_i t).

Every closed form for sums of exponential and integer-shape Gamma steps lives in
this class, and it is closed under convolution (see ``mshaz.sequential``),
pointwise products and survival integration.
"""
from __future__ import annotations

import math
from functools import cached_property

import numpy as np
from scipy import linalg, optimize, special

from .curves import CurveSet
from .errors import InvalidParameterError, UnsupportedOperationError

MERGE_RTOL = 1e-9
_EPS = np.finfo(float).eps
# below this value of max(mu) * t the density is summed as a Taylor series
_TAYLOR_REACH = 1.0
_TAYLOR_EXTRA = 45
# ratio of absolute to net term mass above which terms lose too many digits
_CHAIN_CONDITION = 1e4


def cluster_rates(rates, rtol=MERGE_RTOL):
    """Group sorted rates whose neighbours lie within ``rtol * max(rates)``.

    Returns a list of index lists into ``rates``.
    """
    rates = np.asarray(rates, dtype=float)
    if rates.size == 0:
        return []
    order = np.argsort(rates, kind="stable")
    scale = float(np.max(np.abs(rates)))
    tol = rtol * scale
    groups = [[int(order[0])]]
    for prev, cur in zip(order[:-1], order[1:]):
        if rates[cur] - rates[prev] <= tol:
            groups[-1].append(int(cur))
        else:
            groups.append([int(cur)])
    return groups


class ExpPolyMix:
    """Density ``f(t) = sum c t**k exp(-mu t)`` held as canonical ``(c, k, mu)`` terms.

    Terms sharing a power and a rate (rates equal within ``rtol`` relative to
    the largest rate) are merged on construction; zero coefficients are
    dropped.  ``proper`` marks a normalised probability density.

    ``chain = (scale, rates)`` optionally records that the density is the
    convolution of exponential stages, with Laplace transform
    ``scale * prod 1 / (s + rate)``.  The terms remain the algebraic form; when
    close but unmerged rates make them cancel badly the density is evaluated
    from the stage chain instead.
    """

    def __init__(self, terms, proper=None, rtol=MERGE_RTOL, chain=None):
        cleaned = []
        for c, k, mu in terms:
            c, mu = float(c), float(mu)
            if int(k) != k or k < 0:
                raise InvalidParameterError(f"term power must be a non-negative integer, got {k}")
            if not (np.isfinite(c) and np.isfinite(mu)):
                raise InvalidParameterError("non-finite ExpPolyMix term")
            if mu < 0:
                raise InvalidParameterError(f"term rate must be >= 0, got {mu}")
            cleaned.append((c, int(k), mu))
        merged = {}
        if cleaned:
            rates = [mu for _, _, mu in cleaned]
            for group in cluster_rates(rates, rtol):
                rep = float(np.mean([rates[i] for i in group]))
                for i in group:
                    c, k, _ = cleaned[i]
                    merged[(k, rep)] = merged.get((k, rep), 0.0) + c
        self.terms = tuple(
            sorted(((c, k, mu) for (k, mu), c in merged.items() if c != 0.0), key=lambda x: (x[2], x[1]))
        )
        if not self.terms:
            raise InvalidParameterError("ExpPolyMix needs at least one non-zero term")
        if chain is None and len(self.terms) == 1 and self.terms[0][2] > 0:
            c, k, mu = self.terms[0]
            chain = (c * math.factorial(k), (mu,) * (k + 1))
        if chain is not None:
            scale, stages = chain
            stages = tuple(float(r) for r in stages)
            if not stages or min(stages) <= 0:
                raise InvalidParameterError("chain stage rates must be positive")
            chain = (float(scale), stages)
        self.chain = chain
        if proper is None:
            proper = all(mu > 0 for _, _, mu in self.terms) and abs(self.mass() - 1.0) <= 1e-10
        self.proper = bool(proper)

    @classmethod
    def exponential(cls, rate):
        return cls([(rate, 0, rate)], proper=True)

    @classmethod
    def gamma(cls, shape, rate):
        """Integer-shape Gamma (Erlang) density."""
        if int(shape) != shape or shape < 1:
            raise InvalidParameterError(f"ExpPolyMix Gamma needs integer shape >= 1, got {shape}")
        shape = int(shape)
        return cls([(rate**shape / math.factorial(shape - 1), shape - 1, rate)], proper=True)

    def __repr__(self):
        body = " + ".join(f"{c:.6g}*t^{k}*exp(-{mu:.6g}t)" for c, k, mu in self.terms)
        return f"ExpPolyMix({body})"

    def __len__(self):
        return len(self.terms)

    @property
    def coefficients(self):
        return np.array([c for c, _, _ in self.terms])

    @property
    def powers(self):
        return np.array([k for _, k, _ in self.terms], dtype=int)

    @property
    def rates(self):
        return np.array([mu for _, _, mu in self.terms])

    def allclose(self, other, rtol=1e-9, atol=1e-12):
        """Termwise comparison of two canonical mixtures."""
        if len(self) != len(other):
            return False
        for (c1, k1, m1), (c2, k2, m2) in zip(self.terms, other.terms):
            if k1 != k2 or not math.isclose(m1, m2, rel_tol=rtol, abs_tol=atol):
                return False
            if not math.isclose(c1, c2, rel_tol=rtol, abs_tol=atol):
                return False
        return True

    @cached_property
    def _condition(self):
        """Absolute term mass over net mass; large values mean cancelling terms."""
        if any(mu == 0 for _, _, mu in self.terms):
            return 1.0
        gross = sum(abs(c) * math.factorial(k) / mu ** (k + 1) for c, k, mu in self.terms)
        net = abs(self.mass())
        return gross / net if net > 0 else math.inf

    @property
    def _use_chain(self):
        return self.chain is not None and self._condition > _CHAIN_CONDITION

    def mass(self):
        """Analytic integral over [0, inf)."""
        if self.chain is not None:
            scale, stages = self.chain
            return scale / math.prod(stages)
        total = 0.0
        for c, k, mu in self.terms:
            if mu == 0:
                return math.inf
            total += c * math.factorial(k) / mu ** (k + 1)
        return total

    def laplace(self, s):
        s = np.asarray(s, dtype=complex if np.iscomplexobj(s) else float)
        out = np.zeros_like(s)
        if self.chain is not None:
            out = out + self.chain[0]
            for r in self.chain[1]:
                out = out / (s + r)
            return out
        for c, k, mu in self.terms:
            out = out + c * math.factorial(k) / (s + mu) ** (k + 1)
        return out

    def scaled(self, factor):
        chain = None if self.chain is None else (self.chain[0] * factor, self.chain[1])
        return ExpPolyMix(
            [(c * factor, k, mu) for c, k, mu in self.terms],
            proper=False if factor != 1 else self.proper,
            chain=chain,
        )

    def __add__(self, other):
        return ExpPolyMix(self.terms + other.terms)

    def multiply(self, other):
        """Pointwise product, again an exponential-polynomial mixture."""
        return ExpPolyMix(
            [(c1 * c2, k1 + k2, m1 + m2) for c1, k1, m1 in self.terms for c2, k2, m2 in other.terms],
            proper=False,
        )

    def survival_mix(self):
        """The tail integral ``int_t^inf f`` as an ExpPolyMix (requires all rates > 0)."""
        out = []
        for c, k, mu in self.terms:
            if mu <= 0:
                raise UnsupportedOperationError("tail integral diverges for a zero-rate term")
            # int_t^inf y^k e^{-mu y} dy = k! e^{-mu t} sum_j t^j / (j! mu^{k-j+1})
            for j in range(k + 1):
                out.append((c * math.factorial(k) / (math.factorial(j) * mu ** (k - j + 1)), j, mu))
        return ExpPolyMix(out, proper=False)

    @cached_property
    def _taylor(self):
        """Coefficients a_n of f(t) = sum a_n t^n, with roundoff-level cancellations set to zero."""
        mu_max = max(mu for _, _, mu in self.terms)
        if self.chain is not None:
            return self._chain_taylor(), max(mu_max, max(self.chain[1]))
        kmax = max(k for _, k, _ in self.terms)
        order = kmax + _TAYLOR_EXTRA
        a = np.zeros(order)
        mag = np.zeros(order)
        for c, k, mu in self.terms:
            for n in range(k, order):
                j = n - k
                val = c * (-mu) ** j / math.factorial(j)
                a[n] += val
                mag[n] += abs(val)
        a[np.abs(a) <= 64 * _EPS * mag] = 0.0
        return a, mu_max

    def _chain_taylor(self):
        # prod 1/(s + r) = s^-n sum_j (-1)^j h_j s^-j with h_j the complete
        # homogeneous symmetric polynomials of the rates, all positive
        scale, stages = self.chain
        n = len(stages)
        h = np.zeros(_TAYLOR_EXTRA)
        h[0] = 1.0
        for r in stages:
            for j in range(1, h.size):
                h[j] += r * h[j - 1]
        a = np.zeros(n - 1 + h.size)
        for j in range(h.size):
            a[n - 1 + j] = scale * (-1) ** j * h[j] / math.factorial(n - 1 + j)
        return a

    def _chain_eval(self, t):
        """Density and stage-chain survival at ``t > 0`` from the stage generator.

        The bidiagonal generator is shifted by the slowest rate so the state
        vector stays moderate.  It is carried between anchors by one
        nonnegative step matrix, which keeps entrywise accuracy, and from the
        nearest anchor to each point by a short Taylor series.
        """
        _, stages = self.chain
        lam = np.array(stages)
        low = lam.min()
        gen = np.diag(low - lam) + np.diag(lam[:-1], 1)
        width = 0.5 / max(np.abs(gen).sum(axis=1).max(), 1e-300)
        idx = np.floor(t / width).astype(int)
        step = linalg.expm(gen * width)
        anchors = np.zeros((int(idx.max(initial=0)) + 1, lam.size))
        anchors[0, 0] = 1.0
        for j in range(1, anchors.shape[0]):
            anchors[j] = anchors[j - 1] @ step
        delta = (t - idx * width)[:, None]
        term = anchors[idx]
        state = term.copy()
        for k in range(1, 30):
            term = (term @ gen) * (delta / k)
            state += term
            if not np.any(term):
                break
        decay = np.exp(-low * t)
        return state[:, -1] * lam[-1] * decay * self.mass(), state.sum(axis=1) * decay

    def _series(self, t, integrate=False):
        a, _ = self._taylor
        n = np.arange(a.size)
        coef = a / (n + 1) if integrate else a
        shift = 1 if integrate else 0
        # Horner on t
        acc = np.zeros_like(t)
        for cn in coef[::-1]:
            acc = acc * t + cn
        return acc * t**shift

    def _near_zero(self, t):
        _, mu_max = self._taylor
        return t * mu_max <= _TAYLOR_REACH

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        pos = t >= 0
        tt = t[pos]
        small = self._near_zero(tt)
        direct = np.zeros_like(tt)
        if self._use_chain:
            direct[~small] = self._chain_eval(tt[~small])[0]
        else:
            for c, k, mu in self.terms:
                direct += c * tt**k * np.exp(-mu * tt)
        if np.any(small):
            direct[small] = self._series(tt[small])
        out[pos] = direct
        return out

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        tt = np.maximum(t, 0.0)
        small = self._near_zero(tt)
        direct = np.zeros_like(tt)
        if self._use_chain:
            direct[~small] = self.mass() * (1.0 - self._chain_eval(tt[~small])[1])
        else:
            for c, k, mu in self.terms:
                if mu == 0:
                    direct += c * tt ** (k + 1) / (k + 1)
                else:
                    direct += c * math.factorial(k) / mu ** (k + 1) * special.gammainc(k + 1, mu * tt)
        if np.any(small):
            direct[small] = self._series(tt[small], integrate=True)
        return np.where(t > 0, direct, 0.0)

    def tail(self, t):
        """The tail integral ``int_t^inf f`` for any mixture with positive rates."""
        t = np.asarray(t, dtype=float)
        tt = np.maximum(t, 0.0)
        if any(mu <= 0 for _, _, mu in self.terms):
            raise UnsupportedOperationError("tail integral diverges for a zero-rate term")
        small = self._near_zero(tt)
        tail = np.zeros_like(tt)
        if self._use_chain:
            tail[~small] = self.mass() * self._chain_eval(tt[~small])[1]
        else:
            for c, k, mu in self.terms:
                tail += c * math.factorial(k) / mu ** (k + 1) * special.gammaincc(k + 1, mu * tt)
        if np.any(small):
            tail[small] = self.mass() - self._series(tt[small], integrate=True)
        return np.where(t > 0, tail, self.mass())

    def sf(self, t):
        """Survival from the tail integral; accurate deep in the tail."""
        if not self.proper:
            raise UnsupportedOperationError("survival of an unnormalised mixture is undefined")
        return self.tail(t)

    def hazard(self, t):
        return self.curves_at(t)[1]

    def curves_at(self, t):
        """Return (f, h, F, S) at arbitrary times for a proper mixture."""
        t = np.asarray(t, dtype=float)
        f = self.pdf(t)
        F = self.cdf(t)
        S = self.sf(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            h = np.where(S > 0, f / np.where(F < 0.5, 1.0 - F, S), 0.0)
        return f, h, F, S

    def curves(self, grid):
        if not self.proper:
            raise UnsupportedOperationError("curves of an unnormalised mixture need eval_curves on a proper density")
        t = grid.points
        return CurveSet.from_survival(grid, self.sf(t), self.pdf(t), F=self.cdf(t))

    def mean(self):
        if not self.proper:
            raise UnsupportedOperationError("mean of an unnormalised mixture")
        if self.chain is not None:
            return sum(1.0 / r for r in self.chain[1])
        return sum(c * math.factorial(k + 1) / mu ** (k + 2) for c, k, mu in self.terms)

    def quantile_upper(self, q=1e-6):
        """Time beyond which the survival probability is below ``q``."""
        slowest = min(mu for _, _, mu in self.terms)
        hi = max(self.mean(), 1.0 / slowest)
        while self.sf(np.array([hi]))[0] > q:
            hi *= 2.0
        return float(optimize.brentq(lambda x: self.sf(np.array([x]))[0] - q, 0.0, hi, xtol=1e-12 * hi))

    horizon = quantile_upper

    def sample(self, rng, size):
        """Inverse-CDF sampling with Newton polishing."""
        if not self.proper:
            raise UnsupportedOperationError("cannot sample an unnormalised mixture")
        hi = self.quantile_upper(1e-12)
        grid = np.linspace(0.0, hi, 8193)
        F = np.maximum.accumulate(self.cdf(grid))
        u = rng.random(size)
        x = np.interp(u, F, grid)
        for _ in range(3):
            dens = self.pdf(x)
            step = np.where(dens > 0, (self.cdf(x) - u) / np.where(dens > 0, dens, 1.0), 0.0)
            x = np.clip(x - step, 0.0, None)
        return x
