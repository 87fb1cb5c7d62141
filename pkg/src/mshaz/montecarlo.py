"""Seeded Monte Carlo simulation of failure times and goodness-of-fit statistics.

Samples are generated in fixed-size blocks.  Block ``b`` draws from its own
stream ``PCG64(SeedSequence([seed, b]))``, so results do not depend on how many
threads share the work.
"""
from __future__ import annotations

import dataclasses
import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cascade import CascadeSpec, enumerate_orderings, route_laws
from .curves import CurveSet
from .errors import InvalidParameterError, UnsupportedOperationError
from .routes import CascadeRoute, PowerLawRoute, SequentialRoute, SystemSpec, UnorderedRoute

BLOCK_SIZE = 8192
MAX_DRAWS = 50_000_000
KS_99 = 1.63


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Simulated failure times with the seed and a digest of the model that produced them."""

    times: np.ndarray
    seed: int
    model_hash: str
    labels: np.ndarray | None = None

    def __len__(self):
        return self.times.size


def _canonical(obj):
    """repr-like text that does not depend on set or dict iteration order."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        body = ",".join(f"{f.name}={_canonical(getattr(obj, f.name))}" for f in dataclasses.fields(obj))
        return f"{type(obj).__name__}({body})"
    if isinstance(obj, (set, frozenset)):
        return "{" + ",".join(sorted(_canonical(x) for x in obj)) + "}"
    if isinstance(obj, dict):
        return "{" + ",".join(sorted(f"{_canonical(k)}:{_canonical(v)}" for k, v in obj.items())) + "}"
    if isinstance(obj, (list, tuple)):
        return "(" + ",".join(_canonical(x) for x in obj) + ")"
    if isinstance(obj, np.ndarray):
        return hashlib.sha256(obj.tobytes()).hexdigest()
    return repr(obj)


def model_digest(model):
    return hashlib.sha256(_canonical(model).encode()).hexdigest()[:16]


def thread_count():
    """Worker threads, capped by the MSHAZ_THREADS environment variable."""
    raw = os.environ.get("MSHAZ_THREADS")
    cap = os.cpu_count() or 1
    if raw:
        try:
            cap = max(1, int(raw))
        except ValueError:
            raise InvalidParameterError(f"MSHAZ_THREADS must be an integer, got {raw!r}") from None
    return cap


def block_rng(seed, block):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & (2**64 - 1), int(block)])))


def run_blocks(draw, count, seed, threads=None):
    """Call ``draw(rng, size)`` per block and concatenate results in block order.

    ``draw`` may return an array or a tuple of arrays.
    """
    count = int(count)
    if count < 1:
        raise InvalidParameterError("count must be >= 1")
    sizes = [min(BLOCK_SIZE, count - start) for start in range(0, count, BLOCK_SIZE)]
    jobs = [(b, size) for b, size in enumerate(sizes)]
    work = lambda job: draw(block_rng(seed, job[0]), job[1])
    threads = min(threads or thread_count(), len(jobs))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, jobs))
    else:
        parts = [work(j) for j in jobs]
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(p) for p in zip(*parts))
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# route samplers


def _check_proper(dist):
    if not getattr(dist, "proper", True):
        raise UnsupportedOperationError(f"cannot simulate improper law {dist!r}")


def _powerlaw_times(terms, rng, size):
    """Invert H(t) = sum a t^p at unit-exponential levels."""
    e = rng.exponential(1.0, size)
    H = lambda t: sum(a * t**p for a, p in terms)
    lo = np.zeros(size)
    hi = np.max([(e / a) ** (1.0 / p) for a, p in terms], axis=0)
    # vectorised bisection; 200 halvings reach the floating-point limit
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = H(mid) < e
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def race_cascade(spec, rng, size):
    """Race process: each surviving component draws a fresh time from its conditional law; the earliest fails.

    Returns ``(times, route_index)`` with the route index into ``enumerate_orderings``.
    """
    orders = enumerate_orderings(spec)
    index = {o: i for i, o in enumerate(orders)}
    comps = spec.components
    times = np.zeros(size)
    prefixes = {(): np.arange(size)}
    for _ in range(spec.m):
        nxt = {}
        for prefix, idx in prefixes.items():
            alive = [c for c in comps if c not in prefix]
            draws = np.column_stack([spec.law(prefix, c).sample(rng, idx.size) for c in alive])
            win = np.argmin(draws, axis=1)
            times[idx] += draws[np.arange(idx.size), win]
            for k, c in enumerate(alive):
                sel = idx[win == k]
                if sel.size:
                    nxt[prefix + (c,)] = sel
        prefixes = nxt
    labels = np.empty(size, dtype=int)
    for prefix, idx in prefixes.items():
        labels[idx] = index[prefix]
    return times, labels


def route_product_cascade(spec, rng, size):
    """Every ordering's route time sampled independently; failure at the earliest."""
    orders = enumerate_orderings(spec)
    cols = []
    for o in orders:
        t = np.zeros(size)
        for law in route_laws(o, spec):
            t += law.sample(rng, size)
        cols.append(t)
    cols = np.column_stack(cols)
    labels = np.argmin(cols, axis=1)
    return cols[np.arange(size), labels], labels


def sample_route(route, rng, size):
    if isinstance(route, SequentialRoute):
        t = np.zeros(size)
        for s in route.steps:
            _check_proper(s)
            t += s.sample(rng, size)
        return t
    if isinstance(route, UnorderedRoute):
        t = np.zeros(size)
        for s in route.steps:
            _check_proper(s)
            t = np.maximum(t, s.sample(rng, size))
        return t
    if isinstance(route, CascadeRoute):
        if route.composition == "product":
            return route_product_cascade(route.spec, rng, size)[0]
        return race_cascade(route.spec, rng, size)[0]
    if isinstance(route, PowerLawRoute):
        return _powerlaw_times(route.terms, rng, size)
    _check_proper(route)
    return route.sample(rng, size)


def simulate_system(spec, count, seed, threads=None):
    """Failure times of a system: the minimum over routes and over the replicated units."""
    if not isinstance(spec, SystemSpec):
        raise InvalidParameterError("simulate_system needs a SystemSpec")
    n_s = spec.multiplicity
    if int(count) * n_s * len(spec.routes) > MAX_DRAWS:
        raise UnsupportedOperationError("count * multiplicity * routes exceeds the simulation budget")

    def draw(rng, size):
        best = np.full(size, np.inf)
        for route in spec.routes:
            t = sample_route(route, rng, size * n_s).reshape(size, n_s).min(axis=1)
            best = np.minimum(best, t)
        return best

    return SampleSet(run_blocks(draw, count, seed, threads), int(seed), model_digest(spec))


def simulate_cascade(spec, count, seed, process="race", threads=None):
    """Cascade failure times with the ordering label of each sample."""
    if not isinstance(spec, CascadeSpec):
        raise InvalidParameterError("simulate_cascade needs a CascadeSpec")
    sampler = {"race": race_cascade, "route-product": route_product_cascade}.get(process)
    if sampler is None:
        raise InvalidParameterError(f"unknown cascade process {process!r}")
    times, labels = run_blocks(lambda rng, size: sampler(spec, rng, size), count, seed, threads)
    return SampleSet(times, int(seed), model_digest((spec, process)), labels)


def simulate_steps(draw_one, count, seed, threads=None):
    """Generic helper: ``draw_one(rng, size)`` per block."""
    return SampleSet(run_blocks(draw_one, count, seed, threads), int(seed), "custom")


# ---------------------------------------------------------------------------
# statistics


def ks_statistic(samples, cdf):
    """Kolmogorov-Smirnov distance between samples and a model CDF.

    ``cdf`` is a CurveSet (F linearly interpolated between grid points) or a
    callable.  Samples beyond the grid use the last tabulated value.
    """
    x = samples.times if isinstance(samples, SampleSet) else np.asarray(samples, dtype=float)
    x = np.sort(x)
    n = x.size
    if n == 0:
        raise InvalidParameterError("empty sample set")
    if isinstance(cdf, CurveSet):
        F = np.interp(x, cdf.t, cdf.F)
    else:
        F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def ks_threshold(n, c=KS_99):
    return c / np.sqrt(n)
