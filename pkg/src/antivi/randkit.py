"""Seeded random streams and the special functions the samplers rely on.

Streams are backed by the Philox counter-based generator, keyed by
``(seed, stream_id)``; substreams are therefore independent of the order in
which they are created or consumed.

The distribution functions accept Python scalars or numpy arrays.  Scalar input
returns a ``float``; array input returns an array of the same shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import wraps
from statistics import NormalDist

import numpy as np

from .errors import DomainError

__all__ = [
    "RngStream",
    "standard_normal",
    "gaussian_cdf",
    "gaussian_pdf",
    "gaussian_inverse_cdf",
    "regularized_gamma_p",
    "regularized_gamma_q",
    "chi2_pdf",
    "chi2_cdf",
    "chi2_sf",
    "chi2_inverse_cdf",
    "chi2_inverse_sf",
    "wilson_hilferty_quantile",
]

_MASK64 = (1 << 64) - 1
_EPS = 1e-16
_FPMIN = 1e-300
_MAX_ITER = 1000


def _mix64(x: int) -> int:
    # splitmix64 finalizer
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass
class RngStream:
    """A reproducible random stream identified by ``(seed, stream_id)``.

    Two streams with the same pair produce the same sequence on every platform.
    The generator state advances as values are drawn, so a stream should be
    owned by a single task.
    """

    seed: int = 0
    stream_id: int = 0
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (0 <= self.seed <= _MASK64 and 0 <= self.stream_id <= _MASK64):
            raise DomainError("seed and stream_id must be unsigned 64-bit integers")
        key = (self.stream_id << 64) | self.seed
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def substream(self, index: int) -> RngStream:
        """Derive an independent child stream; deterministic in ``index``."""
        child = _mix64(_mix64(self.stream_id) ^ (index & _MASK64))
        return RngStream(self.seed, child)

    def standard_normal(self, shape=None) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def uniform(self, shape=None) -> np.ndarray:
        return self._gen.random(shape)

    def bernoulli(self, shape=None, p: float = 0.5) -> np.ndarray:
        return (self._gen.random(shape) < p).astype(np.int64)

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def chisquare(self, dof: int, shape=None) -> np.ndarray:
        return self._gen.chisquare(dof, shape)


def standard_normal(stream: RngStream, n: int) -> np.ndarray:
    """Draw ``n`` standard normal variates from ``stream``."""
    if n < 0:
        raise DomainError(f"n must be non-negative, got {n}")
    return stream.standard_normal(n)


def _elementwise(fn):
    """Lift a scalar function to numpy arrays; scalars stay Python floats."""
    vec = np.vectorize(fn, otypes=[float])

    @wraps(fn)
    def wrapper(*args):
        if all(np.ndim(a) == 0 for a in args):
            return fn(*(float(a) for a in args))
        return vec(*args)

    return wrapper


def _check_dof(dof) -> float:
    if dof < 1 or int(dof) != dof:
        raise DomainError(f"degrees of freedom must be an integer >= 1, got {dof}")
    return float(dof)


# ---------------------------------------------------------------------------
# Gaussian
# ---------------------------------------------------------------------------


@_elementwise
def _gaussian_cdf(x: float, mu: float, sigma2: float) -> float:
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be positive, got {sigma2}")
    return 0.5 * math.erfc(-(x - mu) / math.sqrt(2.0 * sigma2))


def gaussian_cdf(x, mu=0.0, sigma2=1.0):
    """CDF of N(mu, sigma2) evaluated through the complementary error function."""
    return _gaussian_cdf(x, mu, sigma2)


def gaussian_pdf(x, mu=0.0, sigma2=1.0):
    if np.any(np.asarray(sigma2) <= 0):
        raise DomainError("sigma2 must be positive")
    out = np.exp(-0.5 * (np.asarray(x, float) - mu) ** 2 / sigma2) / np.sqrt(2 * np.pi * sigma2)
    return float(out) if np.ndim(out) == 0 else out


@_elementwise
def _gaussian_inverse_cdf(p: float, mu: float, sigma2: float) -> float:
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    return NormalDist(mu, math.sqrt(sigma2)).inv_cdf(p)


def gaussian_inverse_cdf(p, mu=0.0, sigma2=1.0):
    return _gaussian_inverse_cdf(p, mu, sigma2)


# ---------------------------------------------------------------------------
# Incomplete gamma and chi-squared
# ---------------------------------------------------------------------------


def _gamma_series(a: float, x: float) -> float:
    """Lower regularized gamma P(a, x) by its power series (x < a + 1)."""
    ap = a
    term = total = 1.0 / a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cfrac(a: float, x: float) -> float:
    """Upper regularized gamma Q(a, x) by modified Lentz continued fraction (x >= a + 1)."""
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def _gamma_pq(a: float, x: float) -> tuple[float, float]:
    if x < 0:
        raise DomainError(f"x must be non-negative, got {x}")
    if x == 0:
        return 0.0, 1.0
    if math.isinf(x):
        return 1.0, 0.0
    if x < a + 1.0:
        p = _gamma_series(a, x)
        return p, 1.0 - p
    q = _gamma_cfrac(a, x)
    return 1.0 - q, q


def _gamma_pq_array(a: float, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`_gamma_pq` for a scalar shape ``a``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("x must be non-negative")
    if x.size <= 8:
        # per-op numpy overhead dominates for tiny inputs
        pairs = [_gamma_pq(a, float(t)) for t in x.reshape(-1)]
        p = np.array([pq[0] for pq in pairs]).reshape(x.shape)
        q = np.array([pq[1] for pq in pairs]).reshape(x.shape)
        return p, q
    p = np.zeros_like(x)
    q = np.ones_like(x)
    pos = (x > 0) & np.isfinite(x)
    p[np.isinf(x)], q[np.isinf(x)] = 1.0, 0.0
    lower = pos & (x < a + 1.0)
    upper = pos & ~lower
    lg = math.lgamma(a)
    if np.any(lower):
        xs = x[lower]
        ap = np.full_like(xs, a)
        term = np.full_like(xs, 1.0 / a)
        total = term.copy()
        active = np.ones(xs.shape, dtype=bool)
        for _ in range(_MAX_ITER):
            ap += 1.0
            term = term * xs / ap
            total = np.where(active, total + term, total)
            active &= ~(np.abs(term) < np.abs(total) * _EPS)
            if not active.any():
                break
        ps = total * np.exp(-xs + a * np.log(xs) - lg)
        p[lower], q[lower] = ps, 1.0 - ps
    if np.any(upper):
        xs = x[upper]
        b = xs + 1.0 - a
        c = np.full_like(xs, 1.0 / _FPMIN)
        d = 1.0 / b
        h = d.copy()
        active = np.ones(xs.shape, dtype=bool)
        for i in range(1, _MAX_ITER):
            an = -i * (i - a)
            b = b + 2.0
            d = an * d + b
            d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
            c = b + an / c
            c = np.where(np.abs(c) < _FPMIN, _FPMIN, c)
            d = 1.0 / d
            delta = d * c
            h = np.where(active, h * delta, h)
            active &= ~(np.abs(delta - 1.0) < _EPS)
            if not active.any():
                break
        qs = np.exp(-xs + a * np.log(xs) - lg) * h
        p[upper], q[upper] = 1.0 - qs, qs
    return p, q


def _scalar_or_array(array_fn):
    """Route scalar calls to the scalar kernel and arrays with a scalar dof to ``array_fn``."""

    def decorate(fn):
        vec = np.vectorize(fn, otypes=[float])

        @wraps(fn)
        def wrapper(x, dof):
            if np.ndim(x) == 0 and np.ndim(dof) == 0:
                return fn(float(x), float(dof))
            if np.ndim(dof) == 0:
                return array_fn(np.asarray(x, dtype=float), _check_dof(float(dof)))
            return vec(x, dof)

        return wrapper

    return decorate


@_elementwise
def regularized_gamma_p(a: float, x: float) -> float:
    return _gamma_pq(a, x)[0]


@_elementwise
def regularized_gamma_q(a: float, x: float) -> float:
    return _gamma_pq(a, x)[1]


def _chi2_logpdf_scalar(x: float, v: float) -> float:
    if x <= 0:
        if x == 0 and v == 2:
            return math.log(0.5)
        return -math.inf if (x == 0 and v > 2) or x < 0 else math.inf
    a = 0.5 * v
    return (a - 1.0) * math.log(x) - 0.5 * x - a * math.log(2.0) - math.lgamma(a)


def _chi2_logpdf_array(x: np.ndarray, v: float) -> np.ndarray:
    a = 0.5 * v
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (a - 1.0) * np.log(x) - 0.5 * x - a * math.log(2.0) - math.lgamma(a)
    out = np.where(x < 0, -np.inf, out)
    if v == 2:
        out = np.where(x == 0, math.log(0.5), out)
    return out


def _chi2_pdf_array(x, v):
    return np.exp(_chi2_logpdf_array(x, v))


def _chi2_cdf_array(x, v):
    if np.any(x < 0):
        raise DomainError("x must be non-negative")
    return _gamma_pq_array(0.5 * v, 0.5 * x)[0]


def _chi2_sf_array(x, v):
    if np.any(x < 0):
        raise DomainError("x must be non-negative")
    return _gamma_pq_array(0.5 * v, 0.5 * x)[1]


@_scalar_or_array(_chi2_pdf_array)
def chi2_pdf(x: float, dof: float) -> float:
    return math.exp(_chi2_logpdf_scalar(x, _check_dof(dof)))


@_scalar_or_array(_chi2_cdf_array)
def chi2_cdf(x: float, dof: float) -> float:
    """P(X <= x) for X ~ chi2(dof), i.e. P(dof/2, x/2)."""
    v = _check_dof(dof)
    if x < 0:
        raise DomainError(f"x must be non-negative, got {x}")
    return _gamma_pq(0.5 * v, 0.5 * x)[0]


@_scalar_or_array(_chi2_sf_array)
def chi2_sf(x: float, dof: float) -> float:
    v = _check_dof(dof)
    if x < 0:
        raise DomainError(f"x must be non-negative, got {x}")
    return _gamma_pq(0.5 * v, 0.5 * x)[1]


def wilson_hilferty_quantile(p: float, v: float) -> float:
    """Cube-root normal approximation to the chi-squared quantile (may be <= 0)."""
    z = NormalDist().inv_cdf(p)
    h = 2.0 / (9.0 * v)
    return v * (1.0 - h + z * math.sqrt(h)) ** 3


def _chi2_quantile(prob: float, v: float, upper: bool) -> float:
    """Solve F(x) = prob (or Q(x) = prob when ``upper``) for a single value."""
    return float(_chi2_quantile_array(np.array([prob], dtype=float), v, np.array([upper]))[0])


_LOG_TINY = math.log(1e-300)


def _chi2_quantile_array(prob: np.ndarray, v: float, upper: np.ndarray) -> np.ndarray:
    """Solve F(x) = prob (Q(x) = prob where ``upper``) elementwise, assuming prob <= 1/2.

    Newton steps are taken in log x on g = +-(log tail(x) - log prob), which is
    increasing in x and close to linear in log x in both tails; a bracket
    guards every step.
    """
    prob = np.asarray(prob, dtype=float)
    upper = np.broadcast_to(upper, prob.shape)
    a = 0.5 * v
    # Wilson-Hilferty start; z is taken from the tail probability directly
    z = _inverse_normal_array(np.clip(prob, 1e-300, 0.5))
    z = np.where(upper, -z, z)
    h = 2.0 / (9.0 * v)
    x = v * (1.0 - h + z * math.sqrt(h)) ** 3
    # lower tail F(x) ~ (x/2)^a / Gamma(a + 1)
    log_small = math.log(2.0) + (np.log(np.maximum(prob, 1e-300)) + math.lgamma(a + 1.0)) / a
    use_small = ~upper & ~(x > 0)
    with np.errstate(over="ignore", under="ignore"):
        x = np.where(use_small, np.exp(np.maximum(log_small, _LOG_TINY)), x)
    x = np.where((x > 0) & np.isfinite(x), x, float(v))
    underflow = ~upper & (log_small < _LOG_TINY) & use_small

    flat_x = np.array(x, dtype=float).reshape(-1)
    flat_up = upper.reshape(-1)
    flat_lp = np.log(prob).reshape(-1)
    flat_lo = np.zeros_like(flat_x)
    flat_hi = np.full_like(flat_x, np.inf)
    flat_x[underflow.reshape(-1)] = 0.0
    idx = np.flatnonzero(~underflow.reshape(-1))
    for _ in range(200):
        if idx.size == 0:
            break
        xa, up = flat_x[idx], flat_up[idx]
        p, q = _gamma_pq_array(a, 0.5 * xa)
        tail = np.where(up, q, p)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
            log_tail = np.log(tail)
            r = np.where(up, flat_lp[idx] - log_tail, log_tail - flat_lp[idx])
            dlog = xa * np.exp(_chi2_logpdf_array(xa, v)) / tail  # dg / dlog x
            step = np.clip(r / dlog, -700.0, 700.0)
            x_new = xa * np.exp(-step)
        lo_a = np.where(r < 0, xa, flat_lo[idx])
        hi_a = np.where(r > 0, xa, flat_hi[idx])
        bad = ~((lo_a < x_new) & (x_new < hi_a)) | ~np.isfinite(x_new)
        with np.errstate(invalid="ignore", over="ignore"):
            fallback = np.where(
                np.isfinite(hi_a),
                np.where(lo_a > 0, np.sqrt(lo_a * hi_a), hi_a * 1e-3),
                4.0 * xa + 1.0,
            )
        x_new = np.where(bad, fallback, x_new)
        done = r == 0.0
        converged = np.abs(x_new - xa) <= 1e-15 * xa
        flat_x[idx] = np.where(done, xa, x_new)
        flat_lo[idx], flat_hi[idx] = lo_a, hi_a
        idx = idx[~(done | converged)]
    return flat_x.reshape(prob.shape)


def _inverse_normal_array(p: np.ndarray) -> np.ndarray:
    inv = NormalDist().inv_cdf
    return np.array([inv(float(t)) for t in np.ravel(p)]).reshape(np.shape(p))


def _chi2_inverse_cdf_array(p, v):
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise DomainError("p must lie in (0, 1)")
    upper = p > 0.5
    return _chi2_quantile_array(np.where(upper, 1.0 - p, p), v, upper)


def _chi2_inverse_sf_array(q, v):
    if np.any(~((q > 0.0) & (q < 1.0))):
        raise DomainError("q must lie in (0, 1)")
    upper = q < 0.5
    return _chi2_quantile_array(np.where(upper, q, 1.0 - q), v, upper)


@_scalar_or_array(_chi2_inverse_cdf_array)
def chi2_inverse_cdf(p: float, dof: float) -> float:
    """Quantile function of chi2(dof): x with chi2_cdf(x, dof) = p."""
    v = _check_dof(dof)
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    if p > 0.5:
        return _chi2_quantile(1.0 - p, v, upper=True)
    return _chi2_quantile(p, v, upper=False)


@_scalar_or_array(_chi2_inverse_sf_array)
def chi2_inverse_sf(q: float, dof: float) -> float:
    """x with chi2_sf(x, dof) = q; accurate in the upper tail."""
    v = _check_dof(dof)
    if not 0.0 < q < 1.0:
        raise DomainError(f"q must lie in (0, 1), got {q}")
    if q < 0.5:
        return _chi2_quantile(q, v, upper=True)
    return _chi2_quantile(1.0 - q, v, upper=False)
