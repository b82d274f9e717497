"""Carry (antithetic) Gaussian samples into other families.

One-liners map Gaussian or uniform variates through a closed-form inverse CDF.
Uniforms are produced from the Gaussians via :func:`gauss_to_uniform`, so an
antithetic pair ``(z, 2 mu - z)`` becomes a ``(u, 1 - u)`` pair.

The Cauchy one-liner follows ``gamma * (tan(pi u) + x0)``.  For uniform ``u``
this is Cauchy with location ``gamma * x0`` and scale ``gamma`` (not the usual
``x0 + gamma * tan(pi (u - 1/2))`` parameterisation); :func:`cauchy_cdf` uses the
same convention.

Flows: planar ``z + u_hat * tanh(w.z + b)`` with the standard reparameterisation
of ``u`` that keeps it invertible, and the Householder reflection.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import autodiff as ad
from .antithetic import PopulationMoments
from .autodiff import value_of
from .errors import ConstraintError, DomainError

__all__ = [
    "Family",
    "OneLinerParams",
    "Transformed",
    "PoleWarning",
    "UNIFORM_CLAMP",
    "gauss_to_uniform",
    "gaussian_logpdf",
    "log_normal_fwd",
    "exponential_fwd",
    "cauchy_fwd",
    "one_liner",
    "log_normal_cdf",
    "exponential_cdf",
    "cauchy_cdf",
    "PlanarFlowParams",
    "HouseholderFlowParams",
    "planar_flow_fwd",
    "planar_flow_inverse",
    "householder_flow_fwd",
    "flow_chain",
]

UNIFORM_CLAMP = 1e-15
_POLE_EPS = 1e-12
_LOG_2PI = math.log(2.0 * math.pi)


class PoleWarning(RuntimeWarning):
    """A uniform sat on the tan pole at 1/2 and was nudged off it."""


class Family(str, enum.Enum):
    LOG_NORMAL = "log_normal"
    EXPONENTIAL = "exponential"
    CAUCHY = "cauchy"


@dataclass(frozen=True)
class OneLinerParams:
    family: Family = Family.LOG_NORMAL
    lam: object = 1.0  # exponential rate
    x0: object = 0.0  # Cauchy location (scaled by gamma)
    gamma: object = 1.0  # Cauchy scale

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if np.any(np.asarray(value_of(self.lam)) <= 0):
            raise DomainError("exponential rate must be positive")
        if np.any(np.asarray(value_of(self.gamma)) <= 0):
            raise DomainError("Cauchy scale must be positive")


class Transformed(NamedTuple):
    x: object
    log_density: object


def gaussian_logpdf(z, mu=0.0, sigma2=1.0):
    d = z - mu
    return -0.5 * (_LOG_2PI + ad.log(sigma2)) - 0.5 * d * d / sigma2


def gauss_to_uniform(z, pop: PopulationMoments):
    """Probability integral transform of N(mu, sigma2), kept off {0, 1}."""
    t = (z - pop.mu) / ad.sqrt(pop.sigma2)
    return ad.clip(ad.normal_cdf(t), UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP)


def log_normal_fwd(z, pop: PopulationMoments = PopulationMoments(0.0, 1.0)) -> Transformed:
    """``x = exp(z)``; density by change of variables, ``log q(x) = log N(z) - z``."""
    x = ad.exp(z)
    return Transformed(x, gaussian_logpdf(z, pop.mu, pop.sigma2) - z)


def exponential_fwd(u, lam=1.0) -> Transformed:
    """``x = -log(u) / lam``, Exponential(lam) for uniform ``u``."""
    if np.any(np.asarray(value_of(lam)) <= 0):
        raise DomainError("exponential rate must be positive")
    u = ad.clip(u, UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP)
    x = -ad.log(u) / lam
    return Transformed(x, ad.log(lam) - lam * x)


def cauchy_fwd(u, params: OneLinerParams = OneLinerParams(Family.CAUCHY)) -> Transformed:
    """``x = gamma * (tan(pi u) + x0)``."""
    uv = np.asarray(value_of(u), dtype=float)
    near = np.abs(uv - 0.5) < _POLE_EPS
    if np.any(near):
        warnings.warn("uniform at the tan pole; shifted by 1e-12", PoleWarning, stacklevel=2)
        shift = np.where(near, np.where(uv >= 0.5, _POLE_EPS, -_POLE_EPS), 0.0)
        u = u + shift
    g, x0 = params.gamma, params.x0
    x = g * (ad.tan(math.pi * u) + x0)
    t = (x - g * x0) / g
    return Transformed(x, -math.log(math.pi) - ad.log(g) - ad.log(1.0 + t * t))


def one_liner(z, pop: PopulationMoments, params: OneLinerParams) -> Transformed:
    """Apply a one-liner to Gaussian samples ``z ~ N(pop)``."""
    if params.family is Family.LOG_NORMAL:
        return log_normal_fwd(z, pop)
    u = gauss_to_uniform(z, pop)
    if params.family is Family.EXPONENTIAL:
        return exponential_fwd(u, params.lam)
    return cauchy_fwd(u, params)


_erfc = np.vectorize(math.erfc, otypes=[float])


def log_normal_cdf(x, mu=0.0, sigma2=1.0):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        t = (np.log(x) - mu) / math.sqrt(2.0 * sigma2)
    return 0.5 * _erfc(-t)


def exponential_cdf(x, lam=1.0):
    return -np.expm1(-lam * np.asarray(x, dtype=float))


def cauchy_cdf(x, x0=0.0, gamma=1.0):
    """CDF matching :func:`cauchy_fwd`: location ``gamma * x0``, scale ``gamma``."""
    return 0.5 + np.arctan((np.asarray(x, dtype=float) - gamma * x0) / gamma) / math.pi


# ---------------------------------------------------------------------------
# flows
# ---------------------------------------------------------------------------


def _expand_last(x):
    shape = np.shape(value_of(x))
    if not shape:
        return x
    return x.reshape(shape + (1,)) if isinstance(x, ad.Var) else np.asarray(x)[..., None]


@dataclass(frozen=True)
class PlanarFlowParams:
    """Planar flow parameters; ``u_hat`` is the invertible reparameterisation of ``u``."""

    w: object
    u: object
    b: object = 0.0
    reparameterize: bool = True

    def __post_init__(self):
        wv = np.asarray(value_of(self.w), dtype=float)
        uv = np.asarray(value_of(self.u), dtype=float)
        if wv.shape != uv.shape or wv.ndim != 1:
            raise ConstraintError("w and u must be vectors of equal length")
        if not self.reparameterize and float(wv @ uv) < -1.0:
            raise ConstraintError("planar flow not invertible: w.u < -1")
        if self.reparameterize and not np.any(wv != 0) and np.any(uv != 0):
            raise ConstraintError("w must be nonzero to reparameterise u")

    @property
    def u_hat(self):
        if not self.reparameterize:
            return self.u
        wu = ad.sum(self.w * self.u)
        wv = np.asarray(value_of(self.w), dtype=float)
        if not np.any(wv != 0):
            return self.u
        m = -1.0 + ad.softplus(wu)
        return self.u + (m - wu) * self.w / ad.sum(self.w * self.w)


def planar_flow_fwd(z, params: PlanarFlowParams):
    """Return ``(z', log|det J|)``; ``z`` has shape ``(..., d)``."""
    u = params.u_hat
    a = ad.sum(z * params.w, axis=-1) + params.b
    h = ad.tanh(a)
    z_new = z + _expand_last(h) * u
    dh = 1.0 - h * h
    wu = ad.sum(params.w * u)
    return z_new, ad.log(ad.absolute(1.0 + dh * wu))


def planar_flow_inverse(z_new, params: PlanarFlowParams, tol: float = 1e-14, max_iter: int = 100) -> np.ndarray:
    """Invert a planar flow numerically (Newton on the scalar ``w.z``)."""
    w = np.asarray(value_of(params.w), dtype=float)
    u = np.asarray(value_of(params.u_hat), dtype=float)
    b = float(value_of(params.b))
    zn = np.asarray(z_new, dtype=float)
    target = zn @ w
    wu = float(w @ u)
    # solve a + wu * tanh(a + b) = target for a = w.z
    a = np.array(target, dtype=float)
    for _ in range(max_iter):
        t = np.tanh(a + b)
        f = a + wu * t - target
        step = f / (1.0 + wu * (1.0 - t * t))
        a = a - step
        if np.all(np.abs(step) <= tol * np.maximum(1.0, np.abs(a))):
            break
    h = np.tanh(a + b)
    return zn - np.multiply.outer(h, u) if np.ndim(h) else zn - h * u


@dataclass(frozen=True)
class HouseholderFlowParams:
    v: object

    def __post_init__(self):
        if not np.linalg.norm(np.asarray(value_of(self.v), dtype=float)) > 0:
            raise ConstraintError("Householder vector must be nonzero")


def householder_flow_fwd(z, params: HouseholderFlowParams):
    """Reflect ``z`` (shape ``(..., d)``) through the hyperplane orthogonal to ``v``."""
    v = params.v
    proj = ad.sum(z * v, axis=-1) / ad.sum(v * v)
    return z - 2.0 * _expand_last(proj) * v


def flow_chain(z, flows: Sequence):
    """Apply planar/Householder flows in order; returns ``(z, total log|det J|)``."""
    total = 0.0
    for params in flows:
        if isinstance(params, PlanarFlowParams):
            z, ld = planar_flow_fwd(z, params)
            total = total + ld
        elif isinstance(params, HouseholderFlowParams):
            z = householder_flow_fwd(z, params)
        else:
            raise TypeError(f"unknown flow parameters {type(params).__name__}")
    return z, total
