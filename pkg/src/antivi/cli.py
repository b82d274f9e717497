"""Command-line entry point: ``antivi sample|diagnose|variance-bench|train``.

Every subcommand accepts ``--config file.json``; keys are the long option names
with dashes replaced by underscores, and explicit flags override the file.  The
default seed comes from the ``ANTI_SEED`` environment variable (else 0).

Exit codes: 0 ok, 1 a diagnostic check failed, 2 invalid configuration,
3 numerically degenerate input, 4 training diverged.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import antithetic as anti
from . import constrained, stats, transforms, vi
from .errors import ConfigError, DegenerateInputError, DivergenceError, NonFiniteError
from .randkit import RngStream, chi2_inverse_cdf, gaussian_cdf

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_DIVERGED = 0, 1, 2, 3, 4

SAMPLE_MODES = ("iid", "antithetic-exact", "antithetic-hw", "cheng")
CHECKS = (
    "marginal-ks",
    "chi2-gof",
    "pooled-mean",
    "spearman",
    "moments",
    "hw-involution",
    "hw-vs-exact",
    "wilson-hilferty-negativity",
)
HW_DOFS = (5, 7, 15, 39)


def _mode_key(name: str) -> str:
    name = name.replace("-", "_")
    return "antithetic_exact" if name == "antithetic" else name


def _scaling(name: str) -> anti.Chi2Scaling:
    return anti.Chi2Scaling(name.replace("-", "_"))


def _int_list(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def _str_list(text) -> list[str]:
    if isinstance(text, (list, tuple)):
        return [item for v in text for item in _str_list(v)]
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _plain(obj):
    """Convert numpy scalars inside a report to JSON-native types."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", newline=""), True


# ---------------------------------------------------------------------------
# sample
# ---------------------------------------------------------------------------


def _antithetic_method(mode: str) -> anti.Method:
    return anti.Method.EXACT if mode == "antithetic_exact" else anti.Method.HAWKINS_WIXLEY


def draw_batch(mode: str, k: int, mu: float, sigma2: float, stream: RngStream, scaling) -> tuple[np.ndarray, int]:
    """One pooled batch of ``k`` values; returns ``(values, size of first half)``."""
    if mode == "iid":
        return mu + math.sqrt(sigma2) * stream.standard_normal(k), k
    half = k // 2
    first = mu + math.sqrt(sigma2) * stream.standard_normal(half)
    xi = stream.standard_normal(half - 1)
    if mode == "cheng":
        bits = stream.bernoulli(half - 1)
        m = anti.sample_moments(first)
        pop = anti.PopulationMoments(mu, sigma2)
        d2 = anti.antithetic_variance(m.delta2, pop, half, anti.AntitheticMode(anti.Method.HAWKINS_WIXLEY, scaling))
        second = constrained.cheng_transform(xi, bits, mu, sigma2, 2.0 * mu - m.eta, d2)
    else:
        second = anti.antithetic_transform(first, xi, mu, sigma2, anti.AntitheticMode(_antithetic_method(mode), scaling))
    return np.concatenate([first, np.asarray(second)]), half


def cmd_sample(args) -> int:
    mode = _mode_key(args.mode)
    if mode not in vi.SamplingMode._value2member_map_:
        raise ConfigError(f"unknown mode {args.mode!r}")
    if args.k < 1:
        raise ConfigError(f"k must be >= 1, got {args.k}")
    if mode != "iid" and (args.k % 2 or args.k < 6):
        raise ConfigError(f"antithetic sampling needs an even k >= 6 (two halves of >= 3), got {args.k}")
    if not args.sigma2 > 0:
        raise ConfigError("sigma2 must be positive")
    if args.batches < 1:
        raise ConfigError("batches must be >= 1")
    scaling = _scaling(args.scaling)
    stream = RngStream(args.seed, 0x5A)
    fh, close = _open_out(args.output)
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "value", "half"])
        index = 0
        for b in range(args.batches):
            values, n_first = draw_batch(mode, args.k, args.mu, args.sigma2, stream.substream(b), scaling)
            if args.transform != "none":
                pop = anti.PopulationMoments(args.mu, args.sigma2)
                values = np.asarray(transforms.one_liner(values, pop, transforms.OneLinerParams(args.transform.replace("-", "_"))).x)
            for i, v in enumerate(values):
                writer.writerow([index, repr(float(v)), "first" if i < n_first else "antithetic"])
                index += 1
    finally:
        if close:
            fh.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# diagnose
# ---------------------------------------------------------------------------


def antithetic_batches(n: int, k: int, mu: float, sigma2: float, seed: int, mode="antithetic_exact", scaling=anti.Chi2Scaling.CORRECTED):
    """``n`` vectorised batches: returns ``(first, second)`` each of shape ``(k, n)``."""
    stream = RngStream(seed, 0xD1A6)
    first = mu + math.sqrt(sigma2) * stream.standard_normal((k, n))
    xi = stream.standard_normal((k - 1, n))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", anti.ClampWarning)
        second = anti.antithetic_transform(first, xi, mu, sigma2, anti.AntitheticMode(_antithetic_method(mode), scaling))
    return first, np.asarray(second)


def one_per_batch(batch: np.ndarray, stream: RngStream) -> np.ndarray:
    """Pick one random coordinate from each column so the picks are independent."""
    idx = stream.integers(0, batch.shape[0], batch.shape[1])
    return batch[idx, np.arange(batch.shape[1])]


def hw_fidelity(dofs=HW_DOFS, mass: float = 0.98, points: int = 401) -> tuple[float, dict]:
    """Worst relative error of the closed-form antithetic chi2 against the exact reflection."""
    tail = (1.0 - mass) / 2.0
    worst = 0.0
    per_dof = {}
    for v in dofs:
        lam = chi2_inverse_cdf(np.linspace(tail, 1.0 - tail, points), v)
        exact = anti.antithetic_chi2_exact(lam, v)
        approx = anti.antithetic_hawkins_wixley(lam, v)
        err = float(np.max(np.abs(approx - exact) / exact))
        per_dof[str(v)] = err
        worst = max(worst, err)
    return worst, per_dof


def hw_involution_error(dofs=HW_DOFS, points: int = 201) -> float:
    worst = 0.0
    for v in dofs:
        c = anti.hawkins_wixley_constant(v)
        # involution holds while (lam/v)^(1/4) <= 2c
        lam = np.linspace(0.0, v * (2.0 * c) ** 4, points)
        back = anti.antithetic_hawkins_wixley(anti.antithetic_hawkins_wixley(lam, v), v)
        worst = max(worst, float(np.max(np.abs(back - lam) / np.maximum(1.0, lam))))
    return worst


def wilson_hilferty_witness(max_dof: int = 50):
    """Smallest-dof (lam, v) whose cube-root antithetic value is negative, or None."""
    for v in range(1, max_dof + 1):
        h = 1.0 - 2.0 / (9.0 * v)
        for scale in (1.5, 2.0, 3.0, 4.0, 8.0):
            lam = v * (scale * h) ** 3
            out = anti.antithetic_wilson_hilferty(lam, v)
            if out < 0:
                return lam, v, float(out)
    return None


def run_checks(checks, k: int = 8, n: int = 50_000, mu: float = 0.0, sigma2: float = 1.0, seed: int = 0,
               mode: str = "antithetic_exact", scaling=anti.Chi2Scaling.CORRECTED, alpha: float = 0.01) -> list[dict]:
    scaling = anti.Chi2Scaling(scaling)
    results = []
    batches = None

    def get_batches():
        nonlocal batches
        if batches is None:
            batches = antithetic_batches(n, k, mu, sigma2, seed, mode, scaling)
        return batches

    def gauss_cdf(x):
        return gaussian_cdf(x, mu, sigma2)

    for check in checks:
        if check == "marginal-ks":
            first, second = get_batches()
            picks = one_per_batch(second, RngStream(seed, 0xC0))
            v = stats.ks_test(picks, gauss_cdf, alpha, check)
            results.append(dict(check=check, statistic=v.statistic, p_value=v.p_value, **{"pass": v.passed}, n=v.n, half="antithetic"))
        elif check == "chi2-gof":
            first, second = get_batches()
            picks = one_per_batch(second, RngStream(seed, 0xC1))
            v = stats.chi2_gof(picks, gauss_cdf, 20, alpha, check)
            results.append(dict(check=check, statistic=v.statistic, p_value=v.p_value, **{"pass": v.passed}, n=v.n))
        elif check == "pooled-mean":
            first, second = get_batches()
            pooled = (first.sum(axis=0) + second.sum(axis=0)) / (2 * k)
            err = float(np.max(np.abs(pooled - mu)))
            tol = 1e-12 * max(1.0, abs(mu))
            results.append(dict(check=check, statistic=err, p_value=None, **{"pass": err <= tol}, threshold=tol))
        elif check == "spearman":
            first, second = get_batches()
            rho = stats.spearman(np.var(first, axis=0), np.var(second, axis=0))
            results.append(dict(check=check, statistic=rho, p_value=None, **{"pass": rho == -1.0}, threshold=-1.0))
        elif check == "moments":
            stream = RngStream(seed, 0xC3)
            mean_err = var_err = 0.0
            for _ in range(200):
                kk = int(stream.integers(3, 65))
                eta = float(10.0 * stream.standard_normal(1)[0])
                d2 = float(stream.uniform(1)[0] * 10.0)
                x = constrained.marsaglia_sample(stream.standard_normal(kk - 1), constrained.MomentSpec(eta, d2, kk)).numpy()
                mean_err = max(mean_err, abs(x.mean() - eta) / max(1.0, abs(eta)))
                var_err = max(var_err, abs(np.mean((x - x.mean()) ** 2) - d2) / max(1.0, d2))
            ok = mean_err <= 1e-12 and var_err <= 1e-10
            results.append(dict(check=check, statistic=max(mean_err, var_err), p_value=None, **{"pass": ok},
                                mean_error=mean_err, variance_error=var_err))
        elif check == "hw-involution":
            err = hw_involution_error()
            results.append(dict(check=check, statistic=err, p_value=None, **{"pass": err <= 1e-12}, threshold=1e-12))
        elif check == "hw-vs-exact":
            worst, per_dof = hw_fidelity()
            results.append(dict(check=check, statistic=worst, p_value=None, **{"pass": worst <= 0.02}, threshold=0.02, per_dof=per_dof))
        elif check == "wilson-hilferty-negativity":
            found = wilson_hilferty_witness()
            entry = dict(check=check, statistic=None if found is None else found[2], p_value=None, **{"pass": found is not None})
            if found is not None:
                entry.update(lam=found[0], dof=found[1], value=found[2])
            results.append(entry)
        else:
            raise ConfigError(f"unknown check {check!r}")
    return results


def cmd_diagnose(args) -> int:
    checks = _str_list(args.check) if args.check else list(CHECKS)
    unknown = [c for c in checks if c not in CHECKS]
    if unknown:
        raise ConfigError(f"unknown check(s): {', '.join(unknown)}")
    if args.k < 3:
        raise ConfigError(f"k must be >= 3, got {args.k}")
    if not args.sigma2 > 0:
        raise ConfigError("sigma2 must be positive")
    if args.n < 400:
        raise ConfigError("n must be >= 400 batches")
    mode = _mode_key(args.mode)
    if mode not in ("antithetic_exact", "antithetic_hw"):
        raise ConfigError("diagnose mode must be antithetic-exact or antithetic-hw")
    scaling = _scaling(args.scaling)
    results = run_checks(checks, args.k, args.n, args.mu, args.sigma2, args.seed, mode, scaling, args.alpha)
    if scaling is anti.Chi2Scaling.PAPER_FAITHFUL and "marginal-ks" in checks:
        # comparative run under the corrected scaling
        ref = run_checks(["marginal-ks"], args.k, args.n, args.mu, args.sigma2, args.seed, mode, anti.Chi2Scaling.CORRECTED, args.alpha)[0]
        for r in results:
            if r["check"] == "marginal-ks":
                r["corrected_statistic"] = ref["statistic"]
                r["corrected_p_value"] = ref["p_value"]
                r["degradation"] = r["statistic"] - ref["statistic"]
    report = {
        "config": {"k": args.k, "n": args.n, "mu": args.mu, "sigma2": args.sigma2, "seed": args.seed,
                   "mode": mode, "scaling": scaling.value},
        "checks": results,
        "pass": all(r["pass"] for r in results),
    }
    report = _plain(report)
    fh, close = _open_out(args.output)
    try:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    finally:
        if close:
            fh.close()
    failed = [r["check"] for r in results if not r["pass"]]
    if failed:
        print(f"check failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


# ---------------------------------------------------------------------------
# variance-bench
# ---------------------------------------------------------------------------


def cmd_variance_bench(args) -> int:
    ks, ds = _int_list(args.k), _int_list(args.d)
    modes = [_mode_key(m) for m in _str_list(args.modes)]
    estimators = _str_list(args.estimators)
    for m in modes:
        if m not in vi.SamplingMode._value2member_map_:
            raise ConfigError(f"unknown mode {m!r}")
    for e in estimators:
        if e not in vi.ESTIMATORS:
            raise ConfigError(f"unknown estimator {e!r}")
    for kk in ks:
        if kk < 1 or any(m != "iid" for m in modes) and (kk % 2 or kk < 6):
            raise ConfigError(f"k={kk} invalid for antithetic modes (even, >= 6)")
    if any(dd < 1 for dd in ds) or args.replications < 2:
        raise ConfigError("d must be >= 1 and replications >= 2")
    fh, close = _open_out(args.output)
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "d", "mode", "estimator", "variance", "mean"])
        for kk in ks:
            for dd in ds:
                for m in modes:
                    res = vi.variance_experiment(kk, dd, m, args.replications, args.seed)
                    for e in estimators:
                        var, mean = res[e]
                        writer.writerow([kk, dd, m, e, repr(var), repr(mean)])
    finally:
        if close:
            fh.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def load_dataset(kind: str, n: int, seed: int, d: int, cache_dir) -> vi.Dataset:
    if cache_dir is None:
        return vi.make_synthetic_dataset(kind, n, seed, d)
    path = Path(cache_dir) / f"{kind}-n{n}-s{seed}-d{d}.npz"
    if path.exists():
        return vi.Dataset.load(path)
    ds = vi.make_synthetic_dataset(kind, n, seed, d)
    path.parent.mkdir(parents=True, exist_ok=True)
    ds.save(path)
    return ds


def cmd_train(args) -> int:
    config = vi.TrainConfig(
        k=args.k, d=args.d, mode=_mode_key(args.mode), objective=args.objective,
        differentiable_antithetics=not args.no_differentiable, scaling=_scaling(args.scaling),
        epochs=args.epochs, lr=args.lr, batch_size=args.batch_size, seed=args.seed,
        optimizer=args.optimizer, hidden=args.hidden, activation=args.activation,
    )
    if args.n < 2:
        raise ConfigError("dataset size must be >= 2")
    data_dim = args.d if args.dataset == "conjugate1d" else 36
    dataset = load_dataset(args.dataset, args.n, args.data_seed, args.d if args.dataset == "conjugate1d" else 1, args.cache_dir)
    train_set, val_set = dataset.split(0.9)
    model = vi.build_model(args.dataset, config, data_dim)
    try:
        result = vi.train(train_set, config, model=model, validation=val_set, record_wallclock=not args.no_wallclock)
    except DivergenceError as exc:
        vi.write_trace_csv(exc.trace, args.trace)
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    vi.write_trace_csv(result.trace, args.trace)
    Path(args.model_out).write_text(vi.model_to_json(result.model, binary=args.binary) + "\n")
    final = result.trace[-1].objective if result.trace else result.initial_objective
    summary = {"dataset": args.dataset, "mode": config.mode.value, "seed": config.seed, "epochs": config.epochs,
               "initial_objective": result.initial_objective, "final_objective": final}
    if val_set is not None and len(val_set) and result.trace:
        summary["final_val_objective"] = result.trace[-1].val_objective
    print(json.dumps(summary))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _default_seed() -> int:
    raw = os.environ.get("ANTI_SEED")
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"ANTI_SEED must be an integer, got {raw!r}") from None


def build_parser(default_seed: int = 0) -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(prog="antivi", description="Antithetic Gaussian sampling and VI experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    def common(p):
        p.add_argument("--config", help="JSON file of option defaults")
        p.add_argument("--seed", type=int, default=default_seed)
        p.add_argument("--output", "-o", default="-", help="output path (default stdout)")
        p.add_argument("--scaling", choices=["corrected", "paper-faithful", "paper_faithful"], default="corrected")

    p = sub.add_parser("sample", help="draw a (pooled) Gaussian batch as CSV")
    common(p)
    p.add_argument("--mode", default="antithetic-hw", help=f"one of {', '.join(SAMPLE_MODES)}")
    p.add_argument("--k", type=int, default=8, help="rows per batch (both halves for antithetic modes)")
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--batches", type=int, default=1)
    p.add_argument("--transform", choices=["none", "log-normal", "exponential", "cauchy"], default="none")
    p.set_defaults(handler=cmd_sample)
    subs["sample"] = p

    p = sub.add_parser("diagnose", help="run statistical checks, JSON report")
    common(p)
    p.add_argument("--check", action="append", help=f"check to run (repeatable or comma list); default all of {', '.join(CHECKS)}")
    p.add_argument("--mode", default="antithetic-exact")
    p.add_argument("--k", type=int, default=8, help="size of each half")
    p.add_argument("--n", type=int, default=50_000, help="number of batches")
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.01)
    p.set_defaults(handler=cmd_diagnose)
    subs["diagnose"] = p

    p = sub.add_parser("variance-bench", help="estimator variance vs k and d on the conjugate model")
    common(p)
    p.add_argument("--k", default="8,64", help="comma list")
    p.add_argument("--d", default="2,40", help="comma list")
    p.add_argument("--modes", default="iid,antithetic-exact", help="comma list")
    p.add_argument("--estimators", default=",".join(vi.ESTIMATORS), help="comma list")
    p.add_argument("--replications", type=int, default=10_000)
    p.set_defaults(handler=cmd_variance_bench)
    subs["variance-bench"] = p

    p = sub.add_parser("train", help="train a toy VAE, write trace CSV and model JSON")
    common(p)
    p.add_argument("--dataset", choices=["conjugate1d", "bars6x6"], default="conjugate1d")
    p.add_argument("--n", type=int, default=500, help="dataset size")
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--mode", default="iid")
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--objective", choices=["elbo", "iwae"], default="elbo")
    p.add_argument("--no-differentiable", action="store_true", help="detach the antithetic half")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--optimizer", choices=["sgd", "adam"], default="sgd")
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--activation", choices=["tanh", "relu"], default="tanh")
    p.add_argument("--trace", default="trace.csv")
    p.add_argument("--model-out", default="model.json")
    p.add_argument("--binary", action="store_true", help="store weights as base64 little-endian float64")
    p.add_argument("--no-wallclock", action="store_true", help="write 0 for wallclock_ms (byte-reproducible traces)")
    p.set_defaults(handler=cmd_train)
    subs["train"] = p
    return parser, subs


def parse_args(argv=None):
    parser, subs = build_parser(_default_seed())
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        file_cfg = {key.replace("-", "_"): value for key, value in file_cfg.items()}
        known = {a.dest for a in subs[args.command]._actions}
        unknown = sorted(set(file_cfg) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        subs[args.command].set_defaults(**file_cfg)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        return args.handler(args)
    except (DegenerateInputError, NonFiniteError) as exc:
        print(f"numeric degeneracy: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
