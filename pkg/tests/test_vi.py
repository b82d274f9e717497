"""Variational inference harness: bounds, antithetic draws, training and diagnostics."""

from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest
from scipy import stats as sps

from antivi import autodiff as ad
from antivi import vi
from antivi.errors import ConfigError, DivergenceError
from antivi.randkit import RngStream

LOG_2PI = math.log(2 * math.pi)


class ConstantLikelihood:
    """p(z) = N(0, 1), p(x | z) = c and q = p, so every log weight is log c."""

    kind = "constant"
    d = 2

    def __init__(self, c):
        self.log_c = math.log(c)
        self.params = {"unused": np.zeros(1)}

    def encode(self, P, x):
        zeros = np.zeros((len(x), self.d))
        return vi.GaussianPosterior(zeros + 0.0 * P["unused"], zeros)

    def log_joint(self, P, x, z):
        return ad.sum(-0.5 * LOG_2PI - 0.5 * z * z, axis=-1) + self.log_c


def posterior_at(mu, sigma, d=1, batch=1):
    return vi.GaussianPosterior(np.full((batch, d), mu), np.full((batch, d), math.log(sigma)))


def log_w_for(model, x, k, mode, stream, posterior=None):
    posterior = posterior or model.encode(model.params, x)
    z = vi.antivae_draw(posterior, k, mode, stream)
    return np.asarray(vi.log_weights(model, model.params, x, z, posterior))


class TestConfig:
    def test_antithetic_needs_even_k(self):
        for k in (5, 7, 4):
            with pytest.raises(ConfigError):
                vi.TrainConfig(k=k, mode="antithetic_hw")
        vi.TrainConfig(k=6, mode="cheng")
        vi.TrainConfig(k=3, mode="iid")

    def test_bad_values(self):
        with pytest.raises(ConfigError):
            vi.TrainConfig(optimizer="rmsprop")
        with pytest.raises(ValueError):
            vi.TrainConfig(mode="bogus")
        with pytest.raises(ConfigError):
            vi.TrainConfig(lr=-1.0)

    def test_reference_preset(self):
        cfg = vi.TrainConfig.reference_preset()
        assert (cfg.optimizer, cfg.lr, cfg.batch_size, cfg.d, cfg.k, cfg.activation) == ("adam", 3e-4, 128, 40, 8, "relu")
        assert cfg.to_dict()["mode"] == "iid"


class TestDatasets:
    def test_bars_deterministic(self):
        a = vi.make_synthetic_dataset("bars6x6", 50, seed=3)
        b = vi.make_synthetic_dataset("bars6x6", 50, seed=3)
        assert a.x.tobytes() == b.x.tobytes()
        assert a.x.shape == (50, 36)
        assert set(np.unique(a.x)) <= {0.0, 1.0}
        assert not np.array_equal(a.x, vi.make_synthetic_dataset("bars6x6", 50, seed=4).x)

    def test_bars_noise_rate(self):
        imgs = vi.make_synthetic_dataset("bars6x6", 2000, seed=0).x.reshape(-1, 6, 6)
        # a clean image has exactly one full row or column; count pixels off the best bar
        off = []
        for img in imgs:
            best = max(np.max(img.sum(0)), np.max(img.sum(1)))
            off.append(img.sum() - best)
        assert 0.02 < np.mean(off) / 30 < 0.08

    def test_conjugate_moments(self):
        ds = vi.make_synthetic_dataset("conjugate1d", 50_000, seed=1)
        assert ds.latent.shape == ds.x.shape == (50_000, 1)
        assert abs(ds.x.var() - 2.0) < 0.05
        assert abs(np.corrcoef(ds.x[:, 0], ds.latent[:, 0])[0, 1] - 1 / math.sqrt(2)) < 0.01

    def test_save_load(self, tmp_path):
        ds = vi.make_synthetic_dataset("conjugate1d", 20, seed=2, d=3)
        ds.save(tmp_path / "c.npz")
        back = vi.Dataset.load(tmp_path / "c.npz")
        assert back.kind == "conjugate1d" and back.seed == 2
        np.testing.assert_array_equal(back.x, ds.x)
        np.testing.assert_array_equal(back.latent, ds.latent)

    def test_split(self):
        train, val = vi.make_synthetic_dataset("bars6x6", 100).split(0.9)
        assert (len(train), len(val)) == (90, 10)

    def test_unknown(self):
        with pytest.raises(ConfigError):
            vi.make_synthetic_dataset("mnist", 10)


class TestConjugateModel:
    def test_analytic_posterior_at_zero(self):
        mean, var = vi.ConjugateModel.exact().analytic_posterior(np.zeros((1, 1)))
        assert mean[0, 0] == 0.0 and var[0, 0] == 0.5

    def test_evidence(self):
        x = np.linspace(-3, 3, 7)[:, None]
        np.testing.assert_allclose(vi.ConjugateModel.exact().log_evidence(x), sps.norm.logpdf(x[:, 0], 0, math.sqrt(2)))

    def test_exact_encoder_matches_posterior(self):
        m = vi.ConjugateModel.exact(2)
        x = np.array([[0.4, -1.0]])
        q = m.encode(m.params, x)
        mean, var = m.analytic_posterior(x)
        np.testing.assert_allclose(q.mu, mean)
        np.testing.assert_allclose(q.sigma2, var)

    def test_exact_q_log_weights_are_constant(self):
        m = vi.ConjugateModel.exact()
        x = np.array([[1.3]])
        lw = log_w_for(m, x, 16, "iid", RngStream(1, 0))
        np.testing.assert_allclose(lw, m.log_evidence(x)[0], atol=1e-12)


class TestBounds:
    def test_constant_likelihood_elbo(self):
        model = ConstantLikelihood(0.37)
        x = np.zeros((3, 1))
        lw = log_w_for(model, x, 8, "iid", RngStream(0, 0))
        np.testing.assert_allclose(vi.elbo_estimate(lw), math.log(0.37), atol=1e-14)
        np.testing.assert_allclose(vi.iwae_estimate(lw), math.log(0.37), atol=1e-14)

    def test_elbo_at_exact_q(self):
        m = vi.ConjugateModel.exact()
        m.params["enc_s"] = m.params["enc_s"] + 1e-9  # break the constant weights slightly
        x = np.array([[0.8]])
        lw = log_w_for(m, x, 100_000, "iid", RngStream(2, 0))
        se = lw.std() / math.sqrt(lw.size)
        assert abs(lw.mean() - m.log_evidence(x)[0]) <= 4 * se + 1e-12

    def test_elbo_bound_for_arbitrary_q(self):
        m = vi.ConjugateModel.exact()
        x = np.array([[0.8]])
        for mu, sigma in [(0.0, 1.0), (1.5, 0.2), (-1.0, 3.0)]:
            lw = log_w_for(m, x, 100_000, "iid", RngStream(3, 0), posterior_at(mu, sigma))
            se = lw.std() / math.sqrt(lw.size)
            assert lw.mean() <= m.log_evidence(x)[0] + 4 * se

    def test_iwae_k1_is_elbo(self):
        m = vi.ConjugateModel()
        lw = log_w_for(m, np.array([[0.5], [1.0]]), 1, "iid", RngStream(4, 0))
        np.testing.assert_allclose(vi.iwae_estimate(lw), vi.elbo_estimate(lw), rtol=1e-15)

    def test_iwae_monotone_in_k(self):
        m = vi.ConjugateModel()
        x = np.full((4000, 1), 1.0)
        q = m.encode(m.params, x)
        stream = RngStream(5, 0)
        est = {}
        for k in (1, 8):
            z = vi.antivae_draw(q, k, "iid", stream)
            est[k] = np.asarray(vi.iwae_estimate(vi.log_weights(m, m.params, x, z, q)))
        se = math.sqrt(est[1].var() / est[1].size + est[8].var() / est[8].size)
        assert est[8].mean() >= est[1].mean() - 2 * se
        assert est[8].mean() > est[1].mean()


class TestAntivaeDraw:
    @pytest.mark.parametrize("mode", ["antithetic_exact", "antithetic_hw", "cheng"])
    def test_pooled_mean_per_dimension(self, mode):
        q = vi.GaussianPosterior(np.array([[0.3, -2.0, 5.0]]), np.log(np.array([[0.5, 1.0, 2.0]])))
        z = vi.antivae_draw(q, 8, mode, RngStream(6, 0))
        assert z.shape == (8, 1, 3)
        np.testing.assert_allclose(z.mean(axis=0), q.mu, rtol=0, atol=1e-12 * 5)

    def test_iid_gradient_flows(self):
        tape = ad.Tape()
        mu, ls = tape.var(np.zeros((1, 2))), tape.var(np.zeros((1, 2)))
        z = vi.antivae_draw(vi.GaussianPosterior(mu, ls), 8, "iid", RngStream(7, 0))
        assert z.shape == (8, 1, 2)
        g = tape.backward(ad.sum(z))
        np.testing.assert_allclose(g[mu], 8.0)
        np.testing.assert_allclose(g[ls], np.sum(z.value, axis=0))

    def test_odd_k_rejected(self):
        with pytest.raises(ConfigError):
            vi.antivae_draw(posterior_at(0.0, 1.0), 7, "antithetic_hw", RngStream(0, 0))

    def test_detach_keeps_values_changes_gradients(self):
        def run(differentiable):
            tape = ad.Tape()
            mu, ls = tape.var(np.full((1, 2), 0.4)), tape.var(np.full((1, 2), -0.3))
            z = vi.antivae_draw(vi.GaussianPosterior(mu, ls), 8, "antithetic_hw", RngStream(8, 0), differentiable)
            g = tape.backward(ad.sum(ad.tanh(z[4:])))
            return z.value, g[mu], g[ls]

        za, gmu_a, gls_a = run(True)
        zb, gmu_b, gls_b = run(False)
        np.testing.assert_array_equal(za, zb)
        assert np.all(gmu_b == 0) and np.all(gls_b == 0)
        assert np.all(gmu_a != 0)

    def test_zero_variance_linear_estimator(self):
        stream = RngStream(9, 0)
        q = posterior_at(1.7, 0.6, d=1, batch=10_000)
        means = vi.antivae_draw(q, 8, "antithetic_hw", stream).mean(axis=0)
        assert np.var(means) <= 1e-24


class TestGradEstimators:
    def test_matches_finite_differences(self):
        m = vi.ConjugateModel(2)
        m.params["enc_a"] = np.array([0.3, 0.6])
        x = np.array([[0.5, -0.2], [1.0, 0.3]])
        cfg = vi.TrainConfig(k=8, d=2, mode="antithetic_exact")
        _, grads = vi.grad_estimators(x, m, cfg, RngStream(10, 0))

        def objective(name, value):
            saved = m.params[name]
            m.params = dict(m.params, **{name: value})
            out, _ = vi.grad_estimators(x, m, cfg, RngStream(10, 0))
            m.params = dict(m.params, **{name: saved})
            return out

        for name in ("enc_a", "enc_s", "dec_w"):
            fd = ad.finite_diff(lambda v: objective(name, v), m.params[name], h=1e-5)
            np.testing.assert_allclose(grads[name], fd, rtol=1e-4, atol=1e-8)

    def test_variance_reduction_and_unbiasedness(self):
        R = 10_000
        iid = vi.variance_experiment(8, 1, "iid", R, seed=0)
        anti = vi.variance_experiment(8, 1, "antithetic_exact", R, seed=0)
        assert anti["grad_sigma"][0] < iid["grad_sigma"][0]
        assert anti["mean"][0] < 1e-24
        for name in ("grad_mu", "grad_sigma", "elbo"):
            se = math.sqrt((iid[name][0] + anti[name][0]) / R)
            assert abs(iid[name][1] - anti[name][1]) < 4 * se, name

    def test_iid_grad_sigma_variance_oracle(self):
        # q = N(0, 1), x = 1: d ELBO / d sigma = mean_i (1 - 2 eps_i^2 + eps_i) + 1 / sigma, variance 9 / k
        out = vi.variance_experiment(8, 1, "iid", 20_000, seed=1)
        assert out["grad_sigma"][0] == pytest.approx(9 / 8, rel=0.05)


class TestMarginalLoglik:
    def test_exact_q(self):
        m = vi.ConjugateModel.exact()
        x = np.array([[0.0], [1.0], [-2.5]])
        np.testing.assert_allclose(vi.marginal_loglik(x, m, 100), m.log_evidence(x), atol=1e-12)

    def test_single_sample(self):
        m = vi.ConjugateModel()
        x = np.array([[0.7]])
        stream_a, stream_b = RngStream(11, 0), RngStream(11, 0)
        single = vi.marginal_loglik(x, m, 1, stream_a)
        np.testing.assert_allclose(single, log_w_for(m, x, 1, "iid", stream_b)[0])

    def test_nondecreasing_in_n(self):
        m = vi.ConjugateModel()
        x = np.full((3000, 1), 1.2)
        small = vi.marginal_loglik(x, m, 2, RngStream(12, 0))
        large = vi.marginal_loglik(x, m, 100, RngStream(12, 1))
        se = math.sqrt(small.var() / small.size + large.var() / large.size)
        assert large.mean() >= small.mean() - 2 * se
        assert large.mean() <= m.log_evidence(x[:1])[0] + 1e-3


class TestTraining:
    def test_lr_zero(self):
        ds = vi.make_synthetic_dataset("conjugate1d", 64)
        cfg = vi.TrainConfig(k=8, d=1, lr=0.0, epochs=3)
        model = vi.build_model(ds.kind, cfg, 1)
        before = {k: v.copy() for k, v in model.params.items()}
        result = vi.train(ds, cfg, model=model)
        for k, v in result.model.params.items():
            np.testing.assert_array_equal(v, before[k])
        assert len(result.trace) == 3

    @pytest.mark.parametrize("mode", ["iid", "antithetic_hw", "antithetic_exact", "cheng"])
    def test_deterministic(self, mode):
        ds = vi.make_synthetic_dataset("bars6x6", 80)
        cfg = vi.TrainConfig(k=6, d=2, mode=mode, epochs=2, hidden=8, seed=3)
        a = vi.train(ds, cfg, record_wallclock=False)
        b = vi.train(ds, dataclasses.replace(cfg), record_wallclock=False)
        assert [r.objective for r in a.trace] == [r.objective for r in b.trace]
        for k in a.model.params:
            np.testing.assert_array_equal(a.model.params[k], b.model.params[k])

    def test_bars_elbo_improves(self):
        ds = vi.make_synthetic_dataset("bars6x6", 500, seed=0)
        result = vi.train(ds, vi.TrainConfig(k=8, d=4, epochs=30, seed=0), record_wallclock=False)
        assert result.trace[-1].objective > result.initial_objective + 5.0

    def test_conjugate_moves_toward_posterior(self):
        ds = vi.make_synthetic_dataset("conjugate1d", 400, seed=0)
        cfg = vi.TrainConfig(k=8, d=1, mode="antithetic_hw", epochs=40, lr=0.005)
        result = vi.train(ds, cfg, record_wallclock=False)
        assert result.trace[-1].objective > result.initial_objective
        # the encoder slope heads for w / (1 + w^2) of the decoder
        w = result.model.params["dec_w"][0]
        assert abs(result.model.params["enc_a"][0] - w / (1 + w * w)) < 0.15

    def test_checkpoints_and_validation(self):
        ds = vi.make_synthetic_dataset("conjugate1d", 100)
        train_set, val = ds.split()
        result = vi.train(train_set, vi.TrainConfig(k=8, d=1, epochs=3), validation=val, checkpoint_epochs=(0, 2))
        assert sorted(result.checkpoints) == [0, 2]
        assert all(r.val_objective is not None for r in result.trace)
        assert [r.epoch for r in result.trace] == [1, 2, 3]

    def test_divergence(self):
        ds = vi.make_synthetic_dataset("conjugate1d", 64)
        with pytest.raises(DivergenceError) as info:
            vi.train(ds, vi.TrainConfig(k=8, d=1, lr=1e6, epochs=50))
        assert isinstance(info.value.trace, list)

    def test_trace_csv(self, tmp_path):
        ds = vi.make_synthetic_dataset("conjugate1d", 32)
        result = vi.train(ds, vi.TrainConfig(k=8, d=1, epochs=2))
        vi.write_trace_csv(result.trace, tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "epoch,objective,mode,seed,wallclock_ms"
        assert len(lines) == 3


class TestModelJson:
    @pytest.mark.parametrize("binary", [False, True])
    def test_round_trip(self, binary):
        model = vi.MlpVAE(36, 3, hidden=5, seed=1)
        back = vi.model_from_json(vi.model_to_json(model, binary))
        assert isinstance(back, vi.MlpVAE) and back.hidden == 5
        for k, v in model.params.items():
            np.testing.assert_array_equal(back.params[k], v)

    def test_conjugate(self):
        back = vi.model_from_json(vi.model_to_json(vi.ConjugateModel.exact(2)))
        np.testing.assert_array_equal(back.params["enc_a"], [0.5, 0.5])


class TestDiversity:
    def test_degenerate_config(self):
        ds = vi.make_synthetic_dataset("bars6x6", 20)
        reports = vi.diversity_report(ds, vi.TrainConfig(k=2, d=2, epochs=1), epochs=(1,), regimes=["iid"])
        assert reports["iid"].values == [0.0] and reports["iid"].variance == 0.0

    def test_report_shape(self):
        ds = vi.make_synthetic_dataset("bars6x6", 60)
        cfg = vi.TrainConfig(k=8, d=2, hidden=8)
        reports = vi.diversity_report(ds, cfg, epochs=(1, 2))
        assert set(reports) == set(vi.REGIMES)
        for rep in reports.values():
            assert len(rep.values) == 2 and all(v > 0 for v in rep.values)
            assert rep.to_dict()["labels"] == [1, 2]

    def test_first_half_variance_matches_posterior(self):
        m = vi.ConjugateModel.exact()
        x = np.zeros((20_000, 1))
        # divide-by-n variance of k/2 = 4 draws has mean (3/4) sigma^2 = 3/8
        v = vi.first_half_variance(m, x, 8, RngStream(13, 0))
        assert v == pytest.approx(3 / 8, rel=0.03)
