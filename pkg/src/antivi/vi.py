"""Desk-scale stochastic variational inference with antithetic posterior samples.

Two generative models are provided:

``ConjugateModel``
    ``z ~ N(0, I_d)``, ``x | z ~ N(w * z + b, I_d)`` with a linear amortised
    Gaussian encoder.  At ``w = 1, b = 0`` the posterior is ``N(x/2, 1/2)`` and
    the evidence ``N(x; 0, 2)``, which gives exact oracles.

``MlpVAE``
    Two-layer MLP encoder/decoder with a Bernoulli likelihood (logits clamped
    to +-10), used on the synthetic 6x6 bars images.

Antithetic draws are made independently per latent dimension: ``k/2`` i.i.d.
reparameterised samples followed by ``k/2`` antithetic samples built from their
moments, so every dimension's pooled sample mean equals its posterior mean.
"""

from __future__ import annotations

import base64
import csv
import enum
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .antithetic import AntitheticMode, Chi2Scaling, Method, antithetic_transform, antithetic_variance, sample_moments
from .antithetic import PopulationMoments
from .autodiff import Tape, Var, value_of
from .constrained import cheng_transform
from .errors import ConfigError, DivergenceError, NonFiniteError
from .randkit import RngStream

__all__ = [
    "SamplingMode",
    "Objective",
    "TrainConfig",
    "Dataset",
    "GaussianPosterior",
    "ConjugateModel",
    "MlpVAE",
    "EstimatorReport",
    "TrainResult",
    "make_synthetic_dataset",
    "antivae_draw",
    "log_weights",
    "elbo_estimate",
    "iwae_estimate",
    "grad_estimators",
    "marginal_loglik",
    "train",
    "first_half_variance",
    "diversity_report",
    "variance_experiment",
    "write_trace_csv",
    "model_to_json",
    "model_from_json",
]

_LOG_2PI = math.log(2.0 * math.pi)
LOGIT_CLAMP = 10.0


class SamplingMode(str, enum.Enum):
    IID = "iid"
    ANTITHETIC_EXACT = "antithetic_exact"
    ANTITHETIC_HW = "antithetic_hw"
    CHENG = "cheng"

    @property
    def antithetic(self) -> bool:
        return self is not SamplingMode.IID


class Objective(str, enum.Enum):
    ELBO = "elbo"
    IWAE = "iwae"


@dataclass
class TrainConfig:
    k: int = 8
    d: int = 4
    mode: SamplingMode = SamplingMode.IID
    objective: Objective = Objective.ELBO
    differentiable_antithetics: bool = True
    scaling: Chi2Scaling = Chi2Scaling.CORRECTED
    epochs: int = 30
    lr: float = 0.01
    batch_size: int = 32
    seed: int = 0
    optimizer: str = "sgd"
    momentum: float = 0.9
    hidden: int = 32
    activation: str = "tanh"

    def __post_init__(self):
        self.mode = SamplingMode(self.mode)
        self.objective = Objective(self.objective)
        self.scaling = Chi2Scaling(self.scaling)
        self.validate()

    def validate(self) -> None:
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.mode.antithetic and (self.k % 2 or self.k < 6):
            raise ConfigError(f"antithetic sampling needs an even k >= 6, got {self.k}")
        if self.d < 1:
            raise ConfigError("latent dimension must be >= 1")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.lr < 0:
            raise ConfigError("learning rate must be non-negative")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.activation not in ("tanh", "relu"):
            raise ConfigError(f"unknown activation {self.activation!r}")

    @classmethod
    def reference_preset(cls, **overrides) -> TrainConfig:
        """Adam at 3e-4, minibatch 128, d=40, k=8, ReLU."""
        base = dict(optimizer="adam", lr=3e-4, batch_size=128, d=40, k=8, activation="relu", hidden=300)
        base.update(overrides)
        return cls(**base)

    def antithetic_mode(self) -> AntitheticMode:
        method = Method.EXACT if self.mode is SamplingMode.ANTITHETIC_EXACT else Method.HAWKINS_WIXLEY
        return AntitheticMode(method, self.scaling)

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("mode", "objective", "scaling"):
            out[key] = out[key].value
        return out


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------


@dataclass
class Dataset:
    kind: str
    x: np.ndarray
    seed: int
    latent: np.ndarray | None = None

    def __len__(self):
        return len(self.x)

    def split(self, fraction: float = 0.9) -> tuple[Dataset, Dataset]:
        n = max(1, int(round(len(self) * fraction)))
        lat = self.latent
        return (
            Dataset(self.kind, self.x[:n], self.seed, None if lat is None else lat[:n]),
            Dataset(self.kind, self.x[n:], self.seed, None if lat is None else lat[n:]),
        )

    def save(self, path) -> None:
        arrays = {"x": self.x}
        if self.latent is not None:
            arrays["latent"] = self.latent
        with open(path, "wb") as fh:
            np.savez(fh, kind=np.array(self.kind), seed=np.array(self.seed), **arrays)

    @classmethod
    def load(cls, path) -> Dataset:
        with np.load(path) as data:
            return cls(str(data["kind"]), data["x"], int(data["seed"]), data["latent"] if "latent" in data else None)


def make_synthetic_dataset(kind: str, n: int, seed: int = 0, d: int = 1) -> Dataset:
    """``bars6x6`` binary images or ``conjugate1d`` draws from the linear-Gaussian model."""
    if n < 1:
        raise ConfigError("dataset size must be >= 1")
    stream = RngStream(seed, 0xDA7A)
    if kind == "bars6x6":
        vertical = stream.integers(0, 2, n)
        pos = stream.integers(0, 6, n)
        imgs = np.zeros((n, 6, 6))
        for i in range(n):
            if vertical[i]:
                imgs[i, :, pos[i]] = 1.0
            else:
                imgs[i, pos[i], :] = 1.0
        flips = stream.uniform((n, 6, 6)) < 0.05
        imgs = np.where(flips, 1.0 - imgs, imgs)
        return Dataset(kind, imgs.reshape(n, 36), seed)
    if kind == "conjugate1d":
        z = stream.standard_normal((n, d))
        x = z + stream.standard_normal((n, d))
        return Dataset(kind, x, seed, z)
    raise ConfigError(f"unknown dataset kind {kind!r}")


# ---------------------------------------------------------------------------
# posterior and models
# ---------------------------------------------------------------------------


@dataclass
class GaussianPosterior:
    """Diagonal Gaussian with arrays of shape ``(B, d)``."""

    mu: object
    log_sigma: object

    @property
    def sigma(self):
        return ad.exp(self.log_sigma)

    @property
    def sigma2(self):
        return ad.exp(2.0 * self.log_sigma)

    def log_prob(self, z):
        """Log density of ``z`` with shape ``(k, B, d)``, summed over ``d``."""
        t = (z - self.mu) / self.sigma
        return ad.sum(-0.5 * _LOG_2PI - self.log_sigma - 0.5 * t * t, axis=-1)


def _standard_normal_logpdf(z):
    return ad.sum(-0.5 * _LOG_2PI - 0.5 * z * z, axis=-1)


class ConjugateModel:
    """Linear-Gaussian model with an amortised linear Gaussian encoder."""

    kind = "conjugate1d"

    def __init__(self, d: int = 1, params: dict | None = None):
        self.d = d
        if params is None:
            params = {
                "dec_w": np.full(d, 0.5),
                "dec_b": np.zeros(d),
                "enc_a": np.zeros(d),
                "enc_c": np.zeros(d),
                "enc_s": np.zeros(d),
            }
        self.params = {k: np.array(v, dtype=float) for k, v in params.items()}

    @classmethod
    def exact(cls, d: int = 1) -> ConjugateModel:
        """True generative model with the encoder at the analytic posterior."""
        return cls(d, {
            "dec_w": np.ones(d),
            "dec_b": np.zeros(d),
            "enc_a": np.full(d, 0.5),
            "enc_c": np.zeros(d),
            "enc_s": np.full(d, 0.5 * math.log(0.5)),
        })

    def encode(self, P, x) -> GaussianPosterior:
        mu = x * P["enc_a"] + P["enc_c"]
        log_sigma = P["enc_s"] + np.zeros_like(np.asarray(x, dtype=float))
        return GaussianPosterior(mu, log_sigma)

    def log_joint(self, P, x, z):
        r = x - (z * P["dec_w"] + P["dec_b"])
        return _standard_normal_logpdf(z) + ad.sum(-0.5 * _LOG_2PI - 0.5 * r * r, axis=-1)

    def log_evidence(self, x) -> np.ndarray:
        """``log p(x)`` under the current decoder, summed over dimensions."""
        w, b = self.params["dec_w"], self.params["dec_b"]
        var = w * w + 1.0
        x = np.asarray(x, dtype=float)
        return np.sum(-0.5 * (_LOG_2PI + np.log(var)) - 0.5 * (x - b) ** 2 / var, axis=-1)

    def analytic_posterior(self, x) -> tuple[np.ndarray, np.ndarray]:
        w, b = self.params["dec_w"], self.params["dec_b"]
        var = 1.0 / (1.0 + w * w)
        return var * w * (np.asarray(x, dtype=float) - b), np.broadcast_to(var, np.shape(x)).copy()


class MlpVAE:
    """MLP encoder/decoder with a Bernoulli likelihood."""

    kind = "bars6x6"

    def __init__(self, m: int, d: int, hidden: int = 32, activation: str = "tanh", seed: int = 0, params=None):
        self.m, self.d, self.hidden, self.activation = m, d, hidden, activation
        if params is None:
            stream = RngStream(seed, 0x1A17)
            params = {}
            for name, (fan_in, fan_out) in {
                "enc_W1": (m, hidden), "enc_W2": (hidden, 2 * d),
                "dec_W1": (d, hidden), "dec_W2": (hidden, m),
            }.items():
                limit = math.sqrt(6.0 / (fan_in + fan_out))  # Xavier uniform
                params[name] = (2.0 * stream.uniform((fan_in, fan_out)) - 1.0) * limit
                params[name.replace("W", "b")] = np.zeros(fan_out)
        self.params = {k: np.array(v, dtype=float) for k, v in params.items()}

    def _act(self, h):
        return ad.tanh(h) if self.activation == "tanh" else ad.relu(h)

    def encode(self, P, x) -> GaussianPosterior:
        h = self._act(ad.matmul(x, P["enc_W1"]) + P["enc_b1"])
        out = ad.matmul(h, P["enc_W2"]) + P["enc_b2"]
        return GaussianPosterior(out[..., : self.d], out[..., self.d :])

    def logits(self, P, z):
        h = self._act(ad.matmul(z, P["dec_W1"]) + P["dec_b1"])
        return ad.clip(ad.matmul(h, P["dec_W2"]) + P["dec_b2"], -LOGIT_CLAMP, LOGIT_CLAMP)

    def log_joint(self, P, x, z):
        logits = self.logits(P, z)
        log_lik = ad.sum(x * logits - ad.softplus(logits), axis=-1)
        return _standard_normal_logpdf(z) + log_lik


def build_model(kind: str, config: TrainConfig, data_dim: int):
    if kind == "conjugate1d":
        return ConjugateModel(data_dim)
    if kind == "bars6x6":
        return MlpVAE(data_dim, config.d, config.hidden, config.activation, seed=config.seed)
    raise ConfigError(f"unknown dataset kind {kind!r}")


# ---------------------------------------------------------------------------
# sampling and objectives
# ---------------------------------------------------------------------------


def antivae_draw(posterior: GaussianPosterior, k: int, mode, stream: RngStream,
                 differentiable: bool = True, scaling=Chi2Scaling.CORRECTED):
    """``k`` reparameterised posterior samples, shape ``(k, B, d)``.

    Antithetic modes draw ``k/2`` i.i.d. samples per latent dimension and
    complete them with ``k/2`` antithetic samples.  With ``differentiable=False``
    the antithetic half has identical values but is detached from the tape.
    All randomness is parameter-free N(0, 1) (and Bernoulli sign) noise.
    """
    mode = SamplingMode(mode)
    shape = np.shape(value_of(posterior.mu))
    sigma = posterior.sigma
    if not mode.antithetic:
        eps = stream.standard_normal((k,) + shape)
        return posterior.mu + sigma * eps
    if k % 2 or k < 6:
        raise ConfigError(f"antithetic sampling needs an even k >= 6, got {k}")
    half = k // 2
    eps = stream.standard_normal((half,) + shape)
    xi = stream.standard_normal((half - 1,) + shape)
    first = posterior.mu + sigma * eps
    sigma2 = posterior.sigma2
    if mode is SamplingMode.CHENG:
        bits = stream.bernoulli((half - 1,) + shape)
        moments = sample_moments(first)
        pop = PopulationMoments(posterior.mu, sigma2)
        delta2_anti = antithetic_variance(moments.delta2, pop, half, AntitheticMode(Method.HAWKINS_WIXLEY, scaling))
        second = cheng_transform(xi, bits, posterior.mu, sigma2, 2.0 * posterior.mu - moments.eta, delta2_anti)
    else:
        method = Method.EXACT if mode is SamplingMode.ANTITHETIC_EXACT else Method.HAWKINS_WIXLEY
        second = antithetic_transform(first, xi, posterior.mu, sigma2, AntitheticMode(method, scaling))
    if not differentiable:
        second = ad.detach(second)
    return ad.concatenate([first, second], axis=0)


def log_weights(model, P, x, z, posterior: GaussianPosterior):
    """``log p(x, z) - log q(z | x)`` with shape ``(k, B)``."""
    return model.log_joint(P, x, z) - posterior.log_prob(z)


def elbo_estimate(log_w):
    """Per-datum ELBO estimate: mean of the log weights over samples."""
    return ad.mean(log_w, axis=0)


def iwae_estimate(log_w):
    """Per-datum importance-weighted bound, ``log mean exp(log_w)``."""
    k = np.shape(value_of(log_w))[0]
    return ad.logsumexp(log_w, axis=0) - math.log(k)


def _objective(config: TrainConfig, log_w):
    return iwae_estimate(log_w) if config.objective is Objective.IWAE else elbo_estimate(log_w)


def _check_finite(value, what: str):
    v = np.asarray(value_of(value))
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"non-finite {what}")


def grad_estimators(x, model, config: TrainConfig, stream: RngStream) -> tuple[float, dict]:
    """Objective estimate and its gradient for every model parameter on batch ``x``.

    The pooled estimator averages over all ``k`` samples (both halves in
    antithetic modes); with i.i.d. sampling it is the plain reparameterisation
    estimator.
    """
    tape = Tape()
    P = {name: tape.var(value, name) for name, value in model.params.items()}
    posterior = model.encode(P, x)
    z = antivae_draw(posterior, config.k, config.mode, stream, config.differentiable_antithetics, config.scaling)
    log_w = log_weights(model, P, x, z, posterior)
    _check_finite(log_w, "log weights")
    obj = ad.mean(_objective(config, log_w))
    grads = tape.backward(obj)
    return float(obj.value), {name: grads[v] for name, v in P.items()}


def marginal_loglik(x, model, n_importance: int = 100, stream: RngStream | None = None) -> np.ndarray:
    """Importance-sampled ``log p(x)`` per datum using i.i.d. posterior samples."""
    stream = stream or RngStream(0, 0x11)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    posterior = model.encode(model.params, x)
    z = antivae_draw(posterior, n_importance, SamplingMode.IID, stream)
    log_w = log_weights(model, model.params, x, z, posterior)
    _check_finite(log_w, "importance weights")
    return np.asarray(iwae_estimate(log_w))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


class _Optimizer:
    def __init__(self, config: TrainConfig, params: dict):
        self.config = config
        self.state = {k: np.zeros_like(v) for k, v in params.items()}
        self.state2 = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def ascend(self, params: dict, grads: dict) -> None:
        """Gradient ascent step on the objective."""
        c = self.config
        self.t += 1
        for name, g in grads.items():
            if c.optimizer == "sgd":
                self.state[name] = c.momentum * self.state[name] + g
                params[name] = params[name] + c.lr * self.state[name]
            else:
                b1, b2 = 0.9, 0.999
                self.state[name] = b1 * self.state[name] + (1 - b1) * g
                self.state2[name] = b2 * self.state2[name] + (1 - b2) * g * g
                mhat = self.state[name] / (1 - b1**self.t)
                vhat = self.state2[name] / (1 - b2**self.t)
                params[name] = params[name] + c.lr * mhat / (np.sqrt(vhat) + 1e-8)


@dataclass
class TraceRow:
    epoch: int
    objective: float
    mode: str
    seed: int
    wallclock_ms: float
    val_objective: float | None = None


@dataclass
class TrainResult:
    model: object
    trace: list[TraceRow]
    config: TrainConfig
    checkpoints: dict = field(default_factory=dict)
    initial_objective: float = math.nan


def evaluate_objective(model, data: np.ndarray, config: TrainConfig, stream: RngStream) -> float:
    if len(data) == 0:
        return math.nan
    posterior = model.encode(model.params, data)
    z = antivae_draw(posterior, config.k, config.mode, stream, scaling=config.scaling)
    log_w = log_weights(model, model.params, data, z, posterior)
    return float(np.mean(_objective(config, log_w)))


def train(dataset: Dataset, config: TrainConfig, model=None, validation: Dataset | None = None,
          checkpoint_epochs: Sequence[int] = (), record_wallclock: bool = True) -> TrainResult:
    """Fit encoder and decoder by stochastic gradient ascent on the chosen bound.

    Deterministic for a fixed ``config.seed``.  The trace has one row per epoch
    holding the mean minibatch objective; the objective at initialisation is
    kept in ``initial_objective``.  ``checkpoint_epochs`` stores parameter copies
    after those epochs (0 = initial).
    """
    config.validate()
    x = np.asarray(dataset.x, dtype=float)
    model = model or build_model(dataset.kind, config, x.shape[1])
    opt = _Optimizer(config, model.params)
    root = RngStream(config.seed, 0x7A1)
    shuffle, noise, evals = root.substream(1), root.substream(2), root.substream(3)
    val_x = None if validation is None else np.asarray(validation.x, dtype=float)

    trace: list[TraceRow] = []
    checkpoints = {}
    start = time.perf_counter()

    def snapshot(epoch: int):
        if epoch in checkpoint_epochs:
            checkpoints[epoch] = {k: v.copy() for k, v in model.params.items()}

    def record(epoch: int, objective: float):
        ms = (time.perf_counter() - start) * 1000.0 if record_wallclock else 0.0
        val = None if val_x is None else evaluate_objective(model, val_x, config, evals)
        trace.append(TraceRow(epoch, objective, config.mode.value, config.seed, ms, val))
        snapshot(epoch)

    initial = evaluate_objective(model, x, config, evals)
    snapshot(0)
    for epoch in range(1, config.epochs + 1):
        order = shuffle.permutation(len(x))
        total = 0.0
        for lo in range(0, len(x), config.batch_size):
            batch = x[order[lo : lo + config.batch_size]]
            try:
                obj, grads = grad_estimators(batch, model, config, noise)
            except NonFiniteError as exc:
                raise DivergenceError(f"non-finite objective at epoch {epoch}: {exc}", trace) from exc
            if not math.isfinite(obj):
                raise DivergenceError(f"non-finite objective at epoch {epoch}", trace)
            total += obj * len(batch)
            opt.ascend(model.params, grads)
        record(epoch, total / len(x))
    return TrainResult(model, trace, config, checkpoints, initial)


def write_trace_csv(trace: Sequence[TraceRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "objective", "mode", "seed", "wallclock_ms"])
        for row in trace:
            writer.writerow([row.epoch, repr(float(row.objective)), row.mode, row.seed, f"{row.wallclock_ms:.3f}"])


def model_to_json(model, binary: bool = False) -> str:
    """Layer shapes plus flat weights; ``binary`` stores little-endian float64 as base64."""
    layers = []
    for name in sorted(model.params):
        arr = np.asarray(model.params[name], dtype="<f8")
        entry = {"name": name, "shape": list(arr.shape)}
        if binary:
            entry["data_b64"] = base64.b64encode(arr.tobytes()).decode("ascii")
        else:
            entry["data"] = [float(v) for v in arr.ravel()]
        layers.append(entry)
    meta = {"kind": model.kind, "d": model.d}
    if isinstance(model, MlpVAE):
        meta.update(m=model.m, hidden=model.hidden, activation=model.activation)
    return json.dumps({"model": meta, "layers": layers}, indent=1, sort_keys=True)


def model_from_json(text: str):
    doc = json.loads(text)
    params = {}
    for layer in doc["layers"]:
        if "data_b64" in layer:
            flat = np.frombuffer(base64.b64decode(layer["data_b64"]), dtype="<f8")
        else:
            flat = np.asarray(layer["data"], dtype=float)
        params[layer["name"]] = flat.reshape(layer["shape"]).astype(float)
    meta = doc["model"]
    if meta["kind"] == "conjugate1d":
        return ConjugateModel(meta["d"], params)
    return MlpVAE(meta["m"], meta["d"], meta["hidden"], meta["activation"], params=params)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


@dataclass
class EstimatorReport:
    name: str
    values: list
    mean: float
    variance: float
    bias: float | None = None
    labels: list | None = None

    @classmethod
    def from_values(cls, name: str, values, truth: float | None = None, labels=None) -> EstimatorReport:
        v = np.asarray(values, dtype=float)
        mean = float(v.mean()) if v.size else 0.0
        var = float(v.var()) if v.size else 0.0
        bias = None if truth is None else mean - truth
        return cls(name, [float(a) for a in v], mean, var, bias, labels)

    def to_dict(self) -> dict:
        return asdict(self)


def first_half_variance(model, data: np.ndarray, k: int, stream: RngStream) -> float:
    """Mean over data and dimensions of the sample variance of ``k/2`` i.i.d. posterior draws."""
    half = k // 2
    if half < 2:
        return 0.0
    posterior = model.encode(model.params, np.asarray(data, dtype=float))
    z = antivae_draw(posterior, half, SamplingMode.IID, stream)
    return float(np.mean(np.var(z, axis=0)))


REGIMES = {
    "iid": dict(mode=SamplingMode.IID),
    "antithetic_nodiff": dict(mode=SamplingMode.ANTITHETIC_HW, differentiable_antithetics=False),
    "antithetic_diff": dict(mode=SamplingMode.ANTITHETIC_HW, differentiable_antithetics=True),
}


def diversity_report(dataset: Dataset, config: TrainConfig, epochs: Sequence[int] = (1, 10),
                     regimes: Sequence[str] = tuple(REGIMES)) -> dict[str, EstimatorReport]:
    """First-half sample variance at the given epochs for each training regime.

    Each regime trains from the same initialisation and seed.  Returns one
    report per regime whose ``values`` line up with ``epochs``.
    """
    reports = {}
    epochs = list(epochs)
    for regime in regimes:
        cfg = replace(config, **REGIMES[regime], epochs=max(epochs) if epochs else 0)
        if config.k // 2 < 2:
            reports[regime] = EstimatorReport.from_values(regime, [0.0] * len(epochs), labels=epochs)
            continue
        result = train(dataset, cfg, checkpoint_epochs=epochs, record_wallclock=False)
        probe = RngStream(config.seed, 0xD1B)
        values = []
        for ep in epochs:
            model = result.model
            saved = model.params
            model.params = result.checkpoints[ep]
            values.append(first_half_variance(model, dataset.x, config.k, probe.substream(ep)))
            model.params = saved
        reports[regime] = EstimatorReport.from_values(regime, values, labels=epochs)
    return reports


ESTIMATORS = ("mean", "grad_mu", "grad_sigma", "elbo")
CHUNK_ELEMENTS = 400_000  # samples per tape in replication experiments


def variance_experiment(k: int, d: int, mode, replications: int, seed: int = 0, x_value: float = 1.0,
                        q_mu: float = 0.0, q_sigma: float = 1.0) -> dict[str, tuple[float, float]]:
    """Replication variance of estimators on the conjugate model.

    Every replication uses the same datum ``x = x_value * ones(d)`` and
    posterior ``N(q_mu, q_sigma^2)``; replications differ only in their noise.
    Vector-valued estimators report the trace of their covariance, i.e. the sum
    of per-dimension variances.  Returns ``{estimator: (variance, mean)}`` where
    ``mean`` is averaged over dimensions.
    """
    mode = SamplingMode(mode)
    model = ConjugateModel.exact(d)
    root = RngStream(seed, 0xBE9C).substream(k * 1000 + d)
    chunk = max(1, min(replications, CHUNK_ELEMENTS // (k * d)))
    parts = {"mean": [], "grad_mu": [], "grad_sigma": [], "elbo": []}
    for index, lo in enumerate(range(0, replications, chunk)):
        r = min(chunk, replications - lo)
        x = np.full((r, d), float(x_value))
        tape = Tape()
        mu = tape.var(np.full((r, d), q_mu), "mu")
        sigma = tape.var(np.full((r, d), q_sigma), "sigma")
        posterior = GaussianPosterior(mu, ad.log(sigma))
        z = antivae_draw(posterior, k, mode, root.substream(index))
        log_w = log_weights(model, model.params, x, z, posterior)
        elbo = elbo_estimate(log_w)  # (r,)
        grads = tape.backward(ad.sum(elbo))
        parts["mean"].append(np.mean(value_of(z), axis=0))
        parts["grad_mu"].append(grads[mu])
        parts["grad_sigma"].append(grads[sigma])
        parts["elbo"].append(value_of(elbo))

    def summarize(per_rep: np.ndarray):
        per_rep = np.asarray(per_rep, dtype=float)
        if per_rep.ndim == 1:
            per_rep = per_rep[:, None]
        return float(np.sum(np.var(per_rep, axis=0))), float(np.mean(per_rep))

    return {name: summarize(np.concatenate(values)) for name, values in parts.items()}
