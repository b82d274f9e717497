"""Statistical checks used to turn distributional claims into pass/fail verdicts."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from . import randkit
from .errors import DomainError, ShapeError

__all__ = [
    "TestVerdict",
    "kolmogorov_sf",
    "ks_test",
    "chi2_gof",
    "moment_test",
    "pearson",
    "spearman",
]


@dataclass
class TestVerdict:
    """Outcome of a single check; ``passed`` is decided against ``threshold``."""

    __test__ = False  # not a pytest class

    statistic: float
    p_value: float | None
    passed: bool
    n: int
    threshold: float
    name: str = ""
    detail: dict | None = None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["pass"] = out.pop("passed")
        return out


def kolmogorov_sf(lam: float) -> float:
    """P(K > lam) for the Kolmogorov distribution, via its alternating series."""
    if lam <= 0:
        return 1.0
    if lam < 0.2:
        # series converges slowly here; the tail probability is 1 to double precision
        return 1.0
    total = 0.0
    for j in range(1, 200):
        term = math.exp(-2.0 * j * j * lam * lam)
        total += term if j % 2 else -term
        if term < 1e-17:
            break
    return min(1.0, max(0.0, 2.0 * total))


def ks_test(samples, cdf: Callable, alpha: float = 0.01, name: str = "ks") -> TestVerdict:
    """One-sample Kolmogorov-Smirnov test against a vectorised ``cdf``."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n < 10:
        raise DomainError(f"KS test needs at least 10 samples, got {n}")
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - f)
    d_minus = np.max(f - (i - 1) / n)
    d = float(max(d_plus, d_minus))
    p = kolmogorov_sf(math.sqrt(n) * d)
    return TestVerdict(d, p, p > alpha, n, alpha, name)


def chi2_gof(samples, cdf: Callable, bins: int = 20, alpha: float = 0.01, name: str = "chi2_gof") -> TestVerdict:
    """Chi-squared goodness of fit on ``bins`` bins equiprobable under ``cdf``."""
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if bins < 2:
        raise DomainError("need at least two bins")
    if n < 20 * bins:
        raise DomainError(f"chi-squared GOF needs n >= {20 * bins}, got {n}")
    u = np.asarray(cdf(x), dtype=float)
    idx = np.clip(np.floor(u * bins).astype(int), 0, bins - 1)
    counts = np.bincount(idx, minlength=bins)
    return chi2_from_counts(counts, alpha=alpha, name=name)


def chi2_from_counts(counts, alpha: float = 0.01, name: str = "chi2_gof") -> TestVerdict:
    counts = np.asarray(counts, dtype=float)
    n = counts.sum()
    expected = n / counts.size
    stat = float(np.sum((counts - expected) ** 2) / expected)
    p = randkit.chi2_sf(stat, counts.size - 1)
    return TestVerdict(stat, p, p > alpha, int(n), alpha, name, {"counts": counts.astype(int).tolist()})


def moment_test(samples, target_mean: float, target_var: float, z_max: float = 4.0, name: str = "moments") -> TestVerdict:
    """z-scores of the sample mean and variance against targets.

    Standard errors are estimated from the sample (``s^2 / n`` for the mean,
    ``(m4 - s^4) / n`` for the variance).  A zero standard error passes only on
    an exact match.
    """
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if n < 30:
        raise DomainError(f"moment test needs at least 30 samples, got {n}")
    m = x.mean()
    dev = x - m
    s2 = np.mean(dev**2)
    m4 = np.mean(dev**4)
    se_mean = math.sqrt(s2 / n)
    se_var = math.sqrt(max(m4 - s2 * s2, 0.0) / n)

    def z(diff, se):
        if se == 0:
            return 0.0 if abs(diff) <= 1e-12 * max(1.0, abs(target_mean), abs(target_var)) else math.inf
        return abs(diff) / se

    z_mean = z(m - target_mean, se_mean)
    z_var = z(s2 - target_var, se_var)
    stat = max(z_mean, z_var)
    detail = {"mean": m, "var": s2, "z_mean": z_mean, "z_var": z_var, "se_mean": se_mean, "se_var": se_var}
    return TestVerdict(stat, None, stat <= z_max, n, z_max, name, detail)


def pearson(xs, ys) -> float:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape:
        raise ShapeError("pearson needs equal-length inputs")
    if x.size < 3:
        raise DomainError("pearson needs at least 3 points")
    dx = x - x.mean()
    dy = y - y.mean()
    return float(np.sum(dx * dy) / math.sqrt(np.sum(dx * dx) * np.sum(dy * dy)))


def _ranks(a: np.ndarray) -> np.ndarray:
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(a.size)
    ranks[order] = np.arange(1, a.size + 1)
    return ranks


def spearman(xs, ys) -> float:
    """Spearman rank correlation (no tie correction; meant for continuous data)."""
    x = np.asarray(xs, dtype=float).ravel()
    y = np.asarray(ys, dtype=float).ravel()
    if x.shape != y.shape:
        raise ShapeError("spearman needs equal-length inputs")
    if x.size < 3:
        raise DomainError("spearman needs at least 3 points")
    rx, ry = _ranks(x), _ranks(y)
    n = x.size
    d2 = np.sum((rx - ry) ** 2)
    return float(1.0 - 6.0 * d2 / (n * (n * n - 1.0)))
