"""Detection-time models: clonal expansion after initiation.

The time to detection is the initiation time plus a detection delay.  Closed
forms exist for an exponential initiation followed by a Weibull (linear hazard)
delay, and for a Gamma initiation followed by an exponential delay.  Other
combinations are convolved pointwise by adaptive quadrature.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate, special

from .curves import CurveSet
from .distributions import Exponential, Gamma, LogisticDetection, StepDistribution, Weibull2
from .errors import InvalidParameterError, UnsupportedOperationError
from .expoly import ExpPolyMix

# detection delay laws accepted by detect_after_mixture
GammaDetect = Gamma
DETECTION_LAWS = (LogisticDetection, Weibull2, Gamma)


def _check_positive(**kw):
    for name, value in kw.items():
        if not (np.isfinite(value) and value > 0):
            raise InvalidParameterError(f"{name} must be > 0, got {value}")


def logistic_detection_curves(a, c, N, grid):
    """Curves of the detection time when the hazard grows with a logistic clone fraction.

    S(t) = ((e^{ct} + N - 1) / N)^{-a/c}, so that S(0) = 1.
    """
    return LogisticDetection(a, c, N).curves(grid)


def _weibull_exp_density(a, b, t):
    """Density of Exp(a) + Weibull2(b), evaluated with scaled complementary error functions.

    Writing alpha = a/sqrt(2b) and beta = sqrt(b/2)(t - a/b), the erf bracket of
    the closed form is split at t = a/b and rewritten in terms of erfcx so that
    no exp(a^2/2b) factor is ever formed on its own.
    """
    t = np.maximum(np.asarray(t, dtype=float), 0.0)
    alpha = a / math.sqrt(2.0 * b)
    beta = math.sqrt(b / 2.0) * (t - a / b)
    ea = np.exp(-a * t)
    eb = np.exp(-0.5 * b * t * t)
    # the unused branch of np.where may overflow; only the selected one is finite by construction
    with np.errstate(over="ignore", invalid="ignore"):
        G = np.where(
            beta >= 0,
            2.0 * np.exp(-a * t + a * a / (2.0 * b)) - ea * special.erfcx(alpha) - eb * special.erfcx(np.abs(beta)),
            eb * special.erfcx(np.abs(beta)) - ea * special.erfcx(alpha),
        )
    f = a * (ea - eb) + a * a * math.sqrt(math.pi / (2.0 * b)) * G
    return np.maximum(f, 0.0)


def _from_parts(grid, f, S_delay, a, extra_flags=()):
    """Curves of X + Y with X ~ Exp(a): S = S_Y + f/a."""
    S = S_delay + f / a
    F = 1.0 - S
    return CurveSet.from_survival(grid, S, f, F=F, flags=extra_flags)


def weibull_after_exponential(a, b, grid):
    """Exponential initiation (rate a) followed by a Weibull delay with hazard b t."""
    _check_positive(a=a, b=b)
    t = grid.points
    f = _weibull_exp_density(a, b, t)
    S_w = np.exp(-0.5 * b * t * t)
    tail = S_w + f / a
    # F from the complementary side keeps precision near t = 0
    F = np.maximum(-np.expm1(-0.5 * b * t * t) - f / a, 0.0)
    return CurveSet.from_survival(grid, tail, f, F=F)


def _quad_convolution(fa, fb, t, singular_b=None):
    """int_0^t fa(tau) fb(t - tau) dtau at every t, by vector-valued adaptive quadrature.

    With ``tau = t x`` all grid points share one integral over [0, 1].  When
    ``singular_b = (smooth, p)`` gives fb(y) = y^(p-1) smooth(y), the
    substitution ``1 - x = s^(1/p)`` absorbs the algebraic endpoint factor.
    """
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    tp = t[pos]
    if tp.size == 0:
        return out
    if singular_b is None:
        g = lambda x: tp * fa(tp * x) * fb(tp * (1.0 - x))
    else:
        smooth, p = singular_b
        scale = tp**p / p

        def g(s):
            y = s ** (1.0 / p)
            return scale * fa(tp * (1.0 - y)) * smooth(tp * y)

    val, _ = integrate.quad_vec(g, 0.0, 1.0, epsabs=1e-14, epsrel=1e-11, norm="max", limit=2000)
    out[pos] = val
    return out


def exponential_after_gamma(a, b, p, grid):
    """Gamma(p, b) initiation followed by an exponential delay of rate a.

    For b > a the density is ``b^p a e^{-at} / (b-a)^p * P(p, t(b-a))`` with P
    the regularised lower incomplete Gamma function.  For a = b the sum is
    Gamma(p+1, b); for a > b the density is integrated pointwise.
    """
    _check_positive(a=a, b=b, p=p)
    t = grid.points
    init = Gamma(p, b)
    if b > a:
        with np.errstate(divide="ignore"):
            log_f = p * math.log(b) + math.log(a) - a * t - p * math.log(b - a) + np.log(special.gammainc(p, t * (b - a)))
        f = np.exp(log_f)
    elif a == b:
        return Gamma(p + 1.0, b).curves(grid)
    else:
        norm = math.exp(p * math.log(b) - special.gammaln(p))
        f = _quad_convolution(
            lambda x: a * np.exp(-a * x),
            None,
            t,
            singular_b=(lambda y: norm * np.exp(-b * y), p),
        )
    S_g = init.sf(t)
    F = np.maximum(init.cdf(t) - f / a, 0.0)
    return CurveSet.from_survival(grid, S_g + f / a, f, F=F)


def _gamma_term_curves(k, mu, detection, grid):
    """Curves of Gamma(k+1, mu) + detection delay."""
    t = grid.points
    if k == 0 and isinstance(detection, Weibull2):
        return weibull_after_exponential(mu, detection.b, grid)
    if k == 0 and isinstance(detection, Gamma):
        return exponential_after_gamma(mu, detection.rate, detection.shape, grid)
    if isinstance(detection, Gamma) and detection.integer_shape:
        from .sequential import convolve_exact

        return convolve_exact(ExpPolyMix.gamma(k + 1, mu), detection.as_mix()).curves(grid)
    if isinstance(detection, Exponential):
        from .sequential import convolve_exact

        return convolve_exact(ExpPolyMix.gamma(k + 1, mu), detection.as_mix()).curves(grid)
    init = Gamma(k + 1, mu)
    if isinstance(detection, Gamma):
        norm = math.exp(detection.shape * math.log(detection.rate) - special.gammaln(detection.shape))
        f = _quad_convolution(init.pdf, None, t, singular_b=(lambda y: norm * np.exp(-detection.rate * y), detection.shape))
    else:
        f = _quad_convolution(init.pdf, detection.pdf, t)
    # P(X + Y <= t) = int f_Y(tau) F_X(t - tau) dtau
    F = _quad_convolution(detection.pdf, init.cdf, t) if not isinstance(detection, Gamma) else _quad_convolution(
        init.cdf, None, t, singular_b=(lambda y: norm * np.exp(-detection.rate * y), detection.shape)
    )
    return CurveSet.from_survival(grid, 1.0 - F, f, F=F, flags=("numeric",))


def detect_after_mixture(initiation, detection, grid):
    """Convolve an exponential-polynomial initiation density with a detection delay.

    Each term ``c t^k e^{-mu t}`` is a weighted Gamma(k+1, mu) density; the
    terms are convolved one at a time (in closed form where one exists) and
    recombined linearly.
    """
    if not isinstance(initiation, ExpPolyMix) or not initiation.proper:
        raise UnsupportedOperationError("initiation must be a proper exponential-polynomial density")
    if not isinstance(detection, StepDistribution) or not detection.proper:
        raise InvalidParameterError("detection must be a proper step distribution")
    f = np.zeros(len(grid))
    F = np.zeros(len(grid))
    S = np.zeros(len(grid))
    flags = set()
    for c, k, mu in initiation.terms:
        weight = c * math.factorial(k) / mu ** (k + 1)
        part = _gamma_term_curves(k, mu, detection, grid)
        f += weight * part.f
        F += weight * part.F
        S += weight * part.S
        flags |= part.flags - {"underflow"}
    return CurveSet.from_survival(grid, S, f, F=F, flags=flags)
