"""Objectives: pinned example values, exact DMD properties, gradient checks."""

import numpy as np
import pytest

from streamvsr import tensor as T
from streamvsr.errors import ConfigError, DataError
from streamvsr.losses import (
    AnalyticGaussianScore,
    LossWeights,
    PerceptualBank,
    ScoreNet,
    ScorePair,
    dmd_generator_gradient,
    dmd_surrogate,
    fidelity_loss,
    perceptual_distance,
    sample_patch_window,
    temporal_loss,
    update_fake_score,
)
from streamvsr.dit import noise_schedule
from streamvsr.nn import AdamW
from streamvsr.rng import make_rng
from streamvsr.tensor import GradTape, Tensor, grad_check


class TestTemporalLoss:
    def test_static_pair_with_one_shifted_frame(self):
        # both sequences static; one output frame offset by +0.1 creates two
        # disturbed frame-to-frame differences of squared magnitude 0.01 each
        rng = make_rng(0, "tl")
        gt = np.broadcast_to(rng.random((1, 3, 1, 4, 4)), (1, 3, 5, 4, 4)).copy()
        sr = gt.copy()
        sr[:, :, 2] += 0.1
        assert temporal_loss(Tensor(sr), Tensor(gt)).item() == pytest.approx(0.02, rel=1e-9)

    def test_identical_sequences_zero(self):
        x = make_rng(1, "tl").random((1, 3, 4, 4, 4))
        assert temporal_loss(Tensor(x), Tensor(x.copy())).item() == 0.0

    def test_matching_motion_zero_even_with_offset(self):
        # constant brightness offset has identical frame deltas: loss is zero
        rng = make_rng(2, "tl")
        gt = rng.random((1, 3, 4, 4, 4))
        sr = gt + 0.25
        assert temporal_loss(Tensor(sr), Tensor(gt)).item() == pytest.approx(0.0, abs=1e-15)

    def test_single_frame_is_zero(self):
        x = make_rng(3, "tl").random((1, 3, 1, 4, 4))
        assert temporal_loss(Tensor(x), Tensor(x)).item() == 0.0

    def test_gradient(self):
        rng = make_rng(4, "tl")
        gt = Tensor(rng.random((1, 3, 3, 4, 4)))
        x = Tensor(rng.random((1, 3, 3, 4, 4)), requires_grad=True)
        assert grad_check(lambda v: temporal_loss(v, gt), x) <= 1e-4

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DataError):
            temporal_loss(Tensor(np.zeros((1, 3, 4, 4, 4))), Tensor(np.zeros((1, 3, 5, 4, 4))))


class TestPerceptualDistance:
    def test_zero_iff_identical(self):
        bank = PerceptualBank(dtype=np.float64)
        a = Tensor(make_rng(0, "pd").random((1, 3, 2, 16, 16)))
        assert perceptual_distance(a, a, bank).item() == 0.0

    def test_positive_for_different_inputs(self):
        bank = PerceptualBank(dtype=np.float64)
        rng = make_rng(1, "pd")
        a = Tensor(rng.random((1, 3, 2, 16, 16)))
        b = Tensor(np.clip(a.data + 0.2 * rng.standard_normal(a.shape), 0, 1))
        assert perceptual_distance(a, b, bank).item() > 1e-4

    def test_symmetric(self):
        bank = PerceptualBank(dtype=np.float64)
        rng = make_rng(2, "pd")
        a = Tensor(rng.random((1, 3, 2, 8, 8)))
        b = Tensor(rng.random((1, 3, 2, 8, 8)))
        d_ab = perceptual_distance(a, b, bank).item()
        d_ba = perceptual_distance(b, a, bank).item()
        assert d_ab == pytest.approx(d_ba, rel=1e-12)

    def test_bank_is_frozen_and_deterministic(self):
        bank1 = PerceptualBank()
        bank2 = PerceptualBank()
        assert all(not p.requires_grad for p in bank1.params())
        for (n1, p1), (n2, p2) in zip(bank1.named_params(), bank2.named_params()):
            assert n1 == n2 and np.array_equal(p1.data, p2.data)

    def test_gradient(self):
        bank = PerceptualBank(dtype=np.float64)
        rng = make_rng(3, "pd")
        gt = Tensor(rng.random((1, 3, 2, 8, 8)))
        x = Tensor(rng.random((1, 3, 2, 8, 8)), requires_grad=True)
        assert grad_check(lambda v: perceptual_distance(v, gt, bank), x) <= 1e-4


class TestFidelityLoss:
    def test_parts_and_weighting(self):
        bank = PerceptualBank(dtype=np.float64)
        rng = make_rng(0, "fid")
        gt = Tensor(rng.random((1, 3, 2, 8, 8)))
        sr = Tensor(rng.random((1, 3, 2, 8, 8)))
        w = LossWeights(mse=2.0, dists=0.25)
        loss, parts = fidelity_loss(sr, gt, w, bank)
        assert set(parts) == {"l_mse", "l_dists"}
        assert loss.item() == pytest.approx(2.0 * parts["l_mse"] + 0.25 * parts["l_dists"], rel=1e-12)

    def test_zero_for_identical(self):
        bank = PerceptualBank(dtype=np.float64)
        x = Tensor(make_rng(1, "fid").random((1, 3, 2, 8, 8)))
        loss, parts = fidelity_loss(x, Tensor(x.data.copy()), LossWeights(), bank)
        assert loss.item() == 0.0

    def test_negative_weight_rejected(self):
        with pytest.raises(ConfigError):
            LossWeights(mse=-1.0).validate()


class TestPatchWindows:
    def test_sampler_keeps_crop_in_bounds(self):
        for trial in range(300):
            w = sample_patch_window(16, 20, 4, 6, 2, make_rng(0, "w", trial))
            assert 0 <= w.i <= 16 - 4
            assert 0 <= w.j <= 20 - 6
            assert (w.h_c, w.w_c, w.halo) == (4, 6, 2)

    def test_sampler_covers_all_valid_positions(self):
        seen = set()
        for trial in range(400):
            w = sample_patch_window(6, 6, 3, 3, 2, make_rng(1, "w", trial))
            seen.add((w.i, w.j))
        assert seen == {(i, j) for i in range(4) for j in range(4)}

    def test_impossible_window_rejected(self):
        with pytest.raises(ConfigError):
            sample_patch_window(8, 8, 9, 9, 2, make_rng(2, "w"))


class TestScoreNets:
    def test_timestep_conditioning_matters(self):
        sn = ScoreNet(channels=2, width=8, init_seed=0, dtype=np.float64)
        x = make_rng(0, "sn").standard_normal((1, 2, 3, 4, 4))
        a = sn.predict_x0(x, 0.2)
        b = sn.predict_x0(x, 0.8)
        assert not np.allclose(a, b)

    def test_predict_x0_does_not_record_on_tape(self):
        sn = ScoreNet(channels=1, width=4, init_seed=1, dtype=np.float64)
        x = make_rng(1, "sn").standard_normal((1, 1, 3, 4, 4))
        lead = Tensor(np.ones(()), requires_grad=True)
        with GradTape() as tape:
            out = lead * Tensor(np.asarray(2.0))
            sn.predict_x0(x, 0.5)  # must not add nodes
            tape.backward(out)
        assert lead.grad == pytest.approx(2.0)

    def test_gradient_through_scorenet(self):
        sn = ScoreNet(channels=2, width=8, init_seed=2, dtype=np.float64)
        x = Tensor(make_rng(2, "sn").standard_normal((1, 2, 3, 4, 4)), requires_grad=True)
        assert grad_check(lambda v: T.mean(T.square(sn(v, 0.3))), x) <= 1e-4

    def test_timestep_sampler_range(self):
        pair = ScorePair(real=None, fake=None).validate()
        ts = [pair.sample_t(make_rng(0, "ts", i)) for i in range(500)]
        assert all(0.1 <= t <= 0.9 for t in ts)
        assert min(ts) < 0.2 and max(ts) > 0.8

    def test_bad_timestep_range_rejected(self):
        with pytest.raises(ConfigError):
            ScorePair(real=None, fake=None, t_lo=0.5, t_hi=0.4).validate()


class TestDistributionMatching:
    def chunks(self, rng, b=2, c=2, n=1, hw=4):
        return [rng.standard_normal((b, c, n, hw, hw)) for _ in range(3)]

    def test_identical_scores_give_exactly_zero(self):
        sn = ScoreNet(channels=2, width=8, init_seed=3, dtype=np.float64)
        pair = ScorePair(real=sn, fake=sn)
        g, info = dmd_generator_gradient(self.chunks(make_rng(0, "dm")), pair, make_rng(1, "dm"))
        assert np.all(g == 0.0)
        assert info["mean_abs_g"] == 0.0

    def test_matches_manual_oracle_with_analytic_scores(self):
        # replicate the documented procedure: draw t, then eps, then normalize
        # per sample by mean |x - real_x0| + 1e-8
        real = AnalyticGaussianScore(1.0, 0.5)
        fake = AnalyticGaussianScore(-0.2, 0.5)
        pair = ScorePair(real=real, fake=fake)
        chunks = self.chunks(make_rng(2, "dm"), b=3, c=1, n=1, hw=2)
        g, info = dmd_generator_gradient(chunks, pair, make_rng(3, "dm"))

        x = np.concatenate(chunks, axis=2)
        rng = make_rng(3, "dm")
        t = pair.sample_t(rng)
        alpha, sigma = noise_schedule(t)
        eps = rng.standard_normal(x.shape)
        x_t = alpha * x + sigma * eps
        mu_r = real.predict_x0(x_t, t)
        mu_f = fake.predict_x0(x_t, t)
        norm = np.mean(np.abs(x - mu_r), axis=(1, 2, 3, 4), keepdims=True) + 1e-8
        np.testing.assert_allclose(g, (mu_f - mu_r) / norm, rtol=1e-13)
        assert info["t"] == pytest.approx(t)

    def test_normalizer_is_per_sample(self):
        real = AnalyticGaussianScore(0.0, 1.0)
        fake = AnalyticGaussianScore(1.0, 1.0)
        pair = ScorePair(real=real, fake=fake)
        base = self.chunks(make_rng(4, "dm"), b=2)
        scaled = [c.copy() for c in base]
        for c in scaled:
            c[1] *= 40.0  # second sample becomes much larger in magnitude
        g_base, _ = dmd_generator_gradient(base, pair, make_rng(5, "dm"))
        g_scaled, _ = dmd_generator_gradient(scaled, pair, make_rng(5, "dm"))
        # sample 0 saw unchanged inputs and an unchanged normalizer
        np.testing.assert_allclose(g_scaled[0], g_base[0], rtol=1e-12)
        assert not np.allclose(g_scaled[1], g_base[1])

    def test_surrogate_gradient_is_exact(self):
        rng = make_rng(6, "dm")
        g = rng.standard_normal((1, 2, 3, 4, 4))
        trip = Tensor(rng.standard_normal((1, 2, 3, 4, 4)), requires_grad=True)
        with GradTape() as tape:
            tape.backward(dmd_surrogate(trip, g, weight=0.7))
        assert np.array_equal(trip.grad, 0.7 * g)

    def test_triplet_validation(self):
        sn = ScoreNet(channels=2, width=8, init_seed=4)
        pair = ScorePair(real=sn, fake=sn)
        two = self.chunks(make_rng(7, "dm"))[:2]
        with pytest.raises(DataError):
            dmd_generator_gradient(two, pair, make_rng(8, "dm"))
        ragged = self.chunks(make_rng(9, "dm"))
        ragged[1] = ragged[1][:, :, :, :2]
        with pytest.raises(DataError):
            dmd_generator_gradient(ragged, pair, make_rng(10, "dm"))

    def test_fake_score_update_trains_and_real_stays_frozen(self):
        real = ScoreNet(channels=2, width=8, init_seed=5, dtype=np.float64)
        fake = ScoreNet(channels=2, width=8, init_seed=6, dtype=np.float64)
        real.freeze()
        real_before = {n: p.data.copy() for n, p in real.named_params()}
        pair = ScorePair(real=real, fake=fake)
        chunks = self.chunks(make_rng(11, "dm"))
        x = np.concatenate(chunks, axis=2)
        alpha, sigma = noise_schedule(0.5)
        x_t = alpha * x + sigma * make_rng(14, "dm").standard_normal(x.shape)

        def eval_loss():  # fixed (t, eps) probe, independent of training draws
            return float(np.mean((fake.predict_x0(x_t, 0.5) - x) ** 2))

        before = eval_loss()
        opt = AdamW(fake.named_params(), lr=1e-3)
        for i in range(60):
            update_fake_score(chunks, pair, make_rng(12, "dm", i), opt)
        assert eval_loss() < before
        for n, p in real.named_params():
            assert np.array_equal(p.data, real_before[n])

    def test_gaussian_toy_mean_recovery(self):
        # one-parameter generator against an analytic target: theta -> 1.5
        target_mean, std = 1.5, 0.4
        real = AnalyticGaussianScore(target_mean, std)
        theta = -0.5
        for step in range(500):
            rng = make_rng(13, "toy", step)
            sample = theta + std * rng.standard_normal((64, 1, 1, 1, 1))
            pair = ScorePair(real=real, fake=AnalyticGaussianScore(theta, std))
            g, _ = dmd_generator_gradient([sample, sample, sample], pair, rng)
            theta -= 0.05 * float(np.mean(g))
        assert abs(theta - target_mean) / abs(target_mean) <= 0.01
