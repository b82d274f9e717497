"""Gaussian variates with exactly prescribed sample mean and variance.

Two constructions are provided:

* Marsaglia's: the constraint set ``{x : mean(x) = eta, var(x) = delta2}`` is a
  (k-1)-sphere; a uniform point on the unit sphere in R^(k-1) is carried onto it
  by an orthonormal basis of the complement of the ones vector.
* Cheng/Pullin's: build Helmert coordinates with the right sum of squares from
  Gamma-normalised draws and random signs, then invert the Helmert map.

Sample variance uses the divide-by-k convention throughout.

All kernels treat the *leading* axis as the sample index; any trailing axes are
independent problems solved in one vectorised pass.  Inputs may be numpy arrays
or :class:`~antivi.autodiff.Var`, in which case the computation is recorded on
the tape.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import value_of
from .errors import DegenerateInputError, DomainError, ShapeError

__all__ = [
    "Provenance",
    "SampleBatch",
    "MomentSpec",
    "SphereBasis",
    "unit_sphere_sample",
    "marsaglia_basis",
    "marsaglia_transform",
    "marsaglia_sample",
    "helmert_transform",
    "helmert_inverse",
    "cheng_transform",
    "cheng_sample",
]

_TINY_NORM = 1e-300


class Provenance(str, enum.Enum):
    IID = "iid"
    ANTITHETIC = "antithetic"
    CONSTRAINED = "constrained"
    TRANSFORMED = "transformed"


@dataclass
class SampleBatch:
    """An ordered batch of k variates and where they came from."""

    values: object  # np.ndarray or Var, leading axis of length k
    provenance: Provenance = Provenance.IID

    def __post_init__(self):
        if not isinstance(self.values, ad.Var):
            self.values = np.asarray(self.values, dtype=float)
        if np.ndim(value_of(self.values)) == 0:
            raise ShapeError("a batch needs at least one axis")

    @property
    def k(self) -> int:
        return int(np.shape(value_of(self.values))[0])

    def __len__(self):
        return self.k

    def numpy(self) -> np.ndarray:
        return np.asarray(value_of(self.values))


@dataclass(frozen=True)
class MomentSpec:
    """Target sample mean ``eta`` and divide-by-k sample variance ``delta2``."""

    eta: object
    delta2: object
    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 3:
            raise DomainError(f"constrained sampling needs k >= 3, got {self.k}")
        if np.any(np.asarray(value_of(self.delta2)) < 0):
            raise DomainError("delta2 must be non-negative")


@dataclass(frozen=True)
class SphereBasis:
    k: int
    B: np.ndarray  # (k-1, k), orthonormal rows orthogonal to the ones vector


def _check_nonzero(eps_value: np.ndarray) -> None:
    norms = np.sqrt(np.sum(np.square(eps_value), axis=0))
    if np.any(~(norms >= _TINY_NORM)):
        raise DegenerateInputError("noise vector has (numerically) zero norm")


def unit_sphere_sample(eps) -> np.ndarray:
    """Project a nonzero vector onto the unit sphere."""
    eps = np.asarray(eps, dtype=float)
    norm = float(np.linalg.norm(eps))
    if not norm >= _TINY_NORM:
        raise DegenerateInputError("cannot normalise a zero vector")
    return eps / norm


def marsaglia_basis(k: int) -> SphereBasis:
    """Row-normalised Marsaglia matrix: row i has (i-k) on the diagonal and ones after it."""
    if int(k) != k or k < 2:
        raise DomainError(f"basis needs k >= 2, got {k}")
    A = np.zeros((k - 1, k))
    for r in range(k - 1):
        i = r + 1
        A[r, r] = i - k
        A[r, r + 1 :] = 1.0
    B = A / np.linalg.norm(A, axis=1, keepdims=True)
    B.setflags(write=False)
    return SphereBasis(k, B)


def _column(values: np.ndarray, ndim: int) -> np.ndarray:
    return values.reshape((-1,) + (1,) * (ndim - 1))


def marsaglia_transform(eps, eta, delta2):
    """Map noise of shape ``(k-1, ...)`` onto the sphere with the given sample moments.

    Evaluates ``x = sqrt(k) * delta * z B + eta`` through the O(k) recurrence
    ``x_i = gamma * (z_1 + ... + z_{i-1} + (i - k) z_i) + eta`` where ``z`` is
    the unit-sphere point already scaled by the row norms of the basis.
    """
    ev = np.asarray(value_of(eps), dtype=float)
    if ev.ndim == 0:
        raise ShapeError("eps must have a leading sample axis")
    km1 = ev.shape[0]
    k = km1 + 1
    _check_nonzero(ev)
    i = np.arange(1, k, dtype=float)
    w = _column(1.0 / np.sqrt((k - i) * (k - i + 1.0)), ev.ndim)
    s = ad.sum(eps * eps, axis=0)
    z = eps * w / ad.sqrt(s)
    zero = np.zeros((1,) + ev.shape[1:])
    prefix = ad.concatenate([zero, ad.cumsum(z, axis=0)], axis=0)
    zpad = ad.concatenate([z, zero], axis=0)
    coef = _column(np.arange(1, k + 1, dtype=float) - k, ev.ndim)
    gamma = ad.sqrt(k * delta2)
    return (prefix + coef * zpad) * gamma + eta


def marsaglia_sample(eps, spec: MomentSpec) -> SampleBatch:
    """k variates with sample mean ``spec.eta`` and sample variance ``spec.delta2``."""
    if np.shape(value_of(eps))[:1] != (spec.k - 1,):
        raise ShapeError(f"expected {spec.k - 1} noise values, got shape {np.shape(value_of(eps))}")
    x = marsaglia_transform(eps, spec.eta, spec.delta2)
    return SampleBatch(x, Provenance.CONSTRAINED)


def _batch_values(x):
    return x.values if isinstance(x, SampleBatch) else x


def helmert_transform(x):
    """Helmert coordinates ``y_2..y_k`` of a batch; they carry the centred sum of squares.

    ``y_j = (x_j + ... + x_k - (k+1-j) x_{j-1}) / sqrt((k+1-j)(k+2-j))``.
    """
    x = _batch_values(x)
    xv = np.asarray(value_of(x), dtype=float)
    if xv.ndim == 0 or xv.shape[0] < 2:
        raise DomainError("Helmert transform needs k >= 2")
    k = xv.shape[0]
    m = _column(np.arange(k - 1, 0, -1, dtype=float), xv.ndim)  # k+1-j for j = 2..k
    total = ad.sum(x, axis=0)
    prefix = ad.cumsum(x, axis=0)[: k - 1]
    tail = total - prefix
    return (tail - m * x[: k - 1]) / np.sqrt(m * (m + 1.0))


def helmert_inverse(y, eta, k: int) -> SampleBatch:
    """Invert :func:`helmert_transform` for a batch whose sample mean is ``eta``."""
    yv = np.asarray(value_of(y), dtype=float)
    if yv.ndim == 0 or yv.shape[0] != k - 1:
        raise ShapeError(f"expected {k - 1} Helmert coordinates, got shape {yv.shape}")
    if k < 2:
        raise DomainError("Helmert inverse needs k >= 2")
    j = np.arange(2, k + 1, dtype=float)
    a = _column(np.sqrt((k + 2.0 - j) / (k + 1.0 - j)), yv.ndim)
    b = _column(np.sqrt((k - j) / (k + 1.0 - j)), yv.ndim)
    zero = np.zeros((1,) + yv.shape[1:])
    y_next = ad.concatenate([y[1:], zero], axis=0) if k > 2 else zero
    steps = a * y - b * y_next
    first = eta - math.sqrt((k - 1.0) / k) * y[0:1]
    x = first + ad.concatenate([zero, ad.cumsum(steps, axis=0)], axis=0)
    return SampleBatch(x, Provenance.CONSTRAINED)


def cheng_transform(z, signs, mu, sigma2, eta, delta2):
    """Cheng/Pullin construction on arrays with leading axis ``k-1``.

    ``signs`` are Bernoulli(1/2) bits.  The Helmert coordinates are scaled so
    their squares sum to ``k * delta2`` (the divide-by-k variance), then the
    standard Helmert map is inverted by the backward partial-sum recurrence.
    """
    zv = np.asarray(value_of(z), dtype=float)
    if zv.ndim == 0:
        raise ShapeError("z must have a leading sample axis")
    k = zv.shape[0] + 1
    if np.any(np.asarray(value_of(sigma2)) <= 0):
        raise DomainError("sigma2 must be positive")
    _check_nonzero(zv)
    c = z * z * sigma2
    a = k * delta2 / ad.sum(c, axis=0)
    sign = 2.0 * np.asarray(signs, dtype=float) - 1.0
    u = sign * ad.sqrt(a * c)  # u_j for j = 1..k-1
    s = math.sqrt(k) * (math.sqrt(k) * (eta - mu))  # partial sum s_k = sqrt(k) * y_mean
    xs = [None] * k
    for j in range(k, 1, -1):
        r = math.sqrt((j - 1.0) * j) * u[j - 2]
        xs[j - 1] = (s - r) / j
        s = s - xs[j - 1]
    xs[0] = s
    return ad.stack(xs, axis=0) + mu


def cheng_sample(z, b, mu, sigma2, spec: MomentSpec) -> SampleBatch:
    """k variates with the moments in ``spec``, marginally N(mu, sigma2) when the moments are."""
    if np.shape(value_of(z))[:1] != (spec.k - 1,) or np.shape(b)[:1] != (spec.k - 1,):
        raise ShapeError(f"expected {spec.k - 1} normals and bits")
    x = cheng_transform(z, b, mu, sigma2, spec.eta, spec.delta2)
    return SampleBatch(x, Provenance.CONSTRAINED)
