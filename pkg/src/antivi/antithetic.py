"""Antithetic sample moments and antithetic Gaussian batches.

Given an i.i.d. batch from N(mu, sigma2), its sample mean is reflected about
``mu`` and its sample variance is pushed through the chi-squared inverse-CDF
reflection ``F^-1(1 - F(.))`` (exactly, or with the closed-form fourth-root
Hawkins-Wixley approximation).  A second batch with those moments is then drawn
on the constraint sphere, so the pooled 2k samples have mean exactly ``mu``.

Chi-squared scaling
-------------------
With the divide-by-k sample variance ``delta2`` used here, ``k * delta2 / sigma2``
is exactly chi-squared with ``k - 1`` degrees of freedom.  ``Chi2Scaling.CORRECTED``
(the default) uses that statistic.  ``Chi2Scaling.PAPER_FAITHFUL`` uses
``(k - 1) * delta2 / sigma2``, which is only chi-squared for the divide-by-(k-1)
variance; it is kept so the resulting marginal distortion can be measured.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from . import randkit
from .autodiff import value_of
from .constrained import Provenance, SampleBatch, marsaglia_transform
from .errors import DomainError, ShapeError

__all__ = [
    "Method",
    "Chi2Scaling",
    "AntitheticMode",
    "PopulationMoments",
    "SampleMoments",
    "ClampWarning",
    "CDF_CLAMP",
    "sample_moments",
    "antithetic_mean",
    "hawkins_wixley_constant",
    "antithetic_hawkins_wixley",
    "antithetic_wilson_hilferty",
    "antithetic_chi2_exact",
    "antithetic_variance_exact",
    "antithetic_variance_hw",
    "antithetic_variance",
    "antithetic_transform",
    "antithetic_sample",
]

CDF_CLAMP = 1e-15


class ClampWarning(RuntimeWarning):
    """A chi-squared CDF value hit 0 or 1 and was clamped before inversion."""


class Method(str, enum.Enum):
    EXACT = "exact"
    HAWKINS_WIXLEY = "hawkins_wixley"


class Chi2Scaling(str, enum.Enum):
    PAPER_FAITHFUL = "paper_faithful"
    CORRECTED = "corrected"


@dataclass(frozen=True)
class AntitheticMode:
    method: Method = Method.HAWKINS_WIXLEY
    scaling: Chi2Scaling = Chi2Scaling.CORRECTED

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "scaling", Chi2Scaling(self.scaling))


@dataclass(frozen=True)
class PopulationMoments:
    mu: object
    sigma2: object

    def __post_init__(self):
        if np.any(~(np.asarray(value_of(self.sigma2)) > 0)):
            raise DomainError("population variance must be positive")


@dataclass(frozen=True)
class SampleMoments:
    eta: object
    delta2: object
    k: int


def sample_moments(x) -> SampleMoments:
    """Sample mean and divide-by-k sample variance along the leading axis."""
    values = x.values if isinstance(x, SampleBatch) else x
    shape = np.shape(value_of(values))
    if len(shape) == 0 or shape[0] == 0:
        raise DomainError("sample moments of an empty batch")
    eta = ad.mean(values, axis=0)
    dev = values - eta
    delta2 = ad.mean(dev * dev, axis=0)
    return SampleMoments(eta, delta2, shape[0])


def antithetic_mean(mu, eta):
    """Reflection of the sample mean about the population mean."""
    return 2.0 * mu - eta


@lru_cache(maxsize=None)
def hawkins_wixley_constant(dof: int) -> float:
    """Mean of the fourth-root normal approximation to chi2(dof) / dof."""
    v = float(dof)
    return 1.0 - 3.0 / (16.0 * v) - 7.0 / (512.0 * v * v) + 231.0 / (8192.0 * v**3)


def _dof(dof) -> int:
    if int(dof) != dof or dof < 1:
        raise DomainError(f"degrees of freedom must be an integer >= 1, got {dof}")
    return int(dof)


def antithetic_hawkins_wixley(lam, dof: int):
    """Closed-form antithetic chi-squared variate, ``v (2c - (lam/v)^(1/4))^4``.

    Always non-negative.  It is an involution while ``(lam/v)^(1/4) <= 2c``.
    """
    v = _dof(dof)
    c = hawkins_wixley_constant(v)
    r = ad.fourth_root(lam / v)
    base = 2.0 * c - r
    sq = base * base
    return v * (sq * sq)


def antithetic_wilson_hilferty(lam, dof: int):
    """Cube-root analogue of :func:`antithetic_hawkins_wixley`; can go negative.

    Diagnostic only: it shows why an odd-power approximation is unusable.
    """
    v = _dof(dof)
    h = 1.0 - 2.0 / (9.0 * v)
    base = 2.0 * h - np.cbrt(np.asarray(lam, dtype=float) / v)
    out = v * base**3
    return float(out) if np.ndim(out) == 0 else out


def antithetic_chi2_exact(lam, dof: int):
    """``F^-1(1 - F(lam))`` for the chi2(dof) CDF F.

    Evaluated as ``F_sf^-1(F(lam))`` below the median and ``F^-1(F_sf(lam))``
    above it, so neither tail loses precision to ``1 - F``.
    """
    v = _dof(dof)
    lv = np.asarray(value_of(lam), dtype=float)
    p = np.asarray(randkit.chi2_cdf(lv, v))
    q = np.asarray(randkit.chi2_sf(lv, v))
    if np.any((p < CDF_CLAMP) | (q < CDF_CLAMP)):
        warnings.warn("chi-squared CDF clamped into (1e-15, 1 - 1e-15)", ClampWarning, stacklevel=3)
    return ad.chi2_reflect(lam, v, CDF_CLAMP)


def _scale(k: int, scaling: Chi2Scaling) -> float:
    return float(k) if Chi2Scaling(scaling) is Chi2Scaling.CORRECTED else float(k - 1)


def _check_k(k: int):
    if int(k) != k or k < 3:
        raise DomainError(f"antithetic moments need k >= 3, got {k}")


def antithetic_variance_exact(delta2, pop: PopulationMoments, k: int, scaling=Chi2Scaling.CORRECTED):
    """Antithetic sample variance through the exact chi-squared reflection."""
    _check_k(k)
    if np.any(np.asarray(value_of(delta2)) < 0):
        raise DomainError("delta2 must be non-negative")
    n = _scale(k, scaling)
    lam = n * delta2 / pop.sigma2
    return antithetic_chi2_exact(lam, k - 1) * pop.sigma2 / n


def antithetic_variance_hw(delta2, pop: PopulationMoments, k: int, scaling=Chi2Scaling.CORRECTED):
    """Antithetic sample variance through the Hawkins-Wixley closed form."""
    _check_k(k)
    if np.any(np.asarray(value_of(delta2)) < 0):
        raise DomainError("delta2 must be non-negative")
    n = _scale(k, scaling)
    lam = n * delta2 / pop.sigma2
    return antithetic_hawkins_wixley(lam, k - 1) * pop.sigma2 / n


def antithetic_variance(delta2, pop: PopulationMoments, k: int, mode: AntitheticMode):
    if mode.method is Method.EXACT:
        return antithetic_variance_exact(delta2, pop, k, mode.scaling)
    return antithetic_variance_hw(delta2, pop, k, mode.scaling)


def antithetic_transform(x, eps, mu, sigma2, mode: AntitheticMode = AntitheticMode()):
    """Vectorised antithetic batch: ``x`` has shape ``(k, ...)``, ``eps`` ``(k-1, ...)``."""
    xs = np.shape(value_of(x))
    es = np.shape(value_of(eps))
    if len(xs) == 0 or es[:1] != (xs[0] - 1,) or es[1:] != xs[1:]:
        raise ShapeError(f"eps shape {es} does not match batch shape {xs}")
    k = xs[0]
    pop = PopulationMoments(mu, sigma2)
    moments = sample_moments(x)
    eta_anti = antithetic_mean(mu, moments.eta)
    delta2_anti = antithetic_variance(moments.delta2, pop, k, mode)
    return marsaglia_transform(eps, eta_anti, delta2_anti)


def antithetic_sample(x, eps, pop: PopulationMoments, mode: AntitheticMode = AntitheticMode()) -> SampleBatch:
    """Antithetic counterpart of batch ``x`` with noise ``eps`` (length k-1)."""
    values = x.values if isinstance(x, SampleBatch) else x
    k = np.shape(value_of(values))[0]
    _check_k(k)
    out = antithetic_transform(values, eps, pop.mu, pop.sigma2, mode)
    return SampleBatch(out, Provenance.ANTITHETIC)
