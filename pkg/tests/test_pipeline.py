"""Streaming pipeline: quotas, modes, memory ledger, and mode reductions."""

import numpy as np
import pytest

from streamvsr.clips import LatentClip, VideoClip, bilinear_upscale
from streamvsr.degrade import synthesize_hr
from streamvsr.dit import ChunkContext, DiTConfig, GeneratorModel, LayerCache, chunk_noise_rng
from streamvsr.errors import ConfigError, DataError, ShapeMismatchError
from streamvsr.guidance import PromptEncoder, PromptEncoderConfig, extract_prompt
from streamvsr.pipeline import (
    MODES,
    PipelineConfig,
    StreamPipeline,
    bench,
    default_prompt_policy,
    first_chunk_pixels,
    linear_fit,
    seam_grid,
)
from streamvsr.vae import CausalVae, VaeConfig


def tiny_model(cache_len=3, chunk_len=3):
    return GeneratorModel(
        DiTConfig(
            layers=2,
            heads=2,
            model_dim=32,
            chunk_len=chunk_len,
            cache_len=cache_len,
            patch_size=2,
            latent_channels=8,
            max_grid=8,
            init_seed=7,
        )
    )


@pytest.fixture(scope="module")
def vae():
    return CausalVae(
        VaeConfig(latent_channels=8, enc_widths=(8, 12, 16, 24), dec_widths=(24, 16, 12, 8))
    )


@pytest.fixture(scope="module")
def encoder():
    return PromptEncoder(PromptEncoderConfig(widths=(8, 12, 16, 24), grid=2, model_dim=32))


@pytest.fixture(scope="module")
def pipe(vae, encoder):
    return StreamPipeline(tiny_model(), vae, encoder, PipelineConfig(), seed=11)


@pytest.fixture(scope="module")
def lr33():
    return synthesize_hr("moving-patterns", 33, 8, 8, seed=5).data


class TestQuotas:
    def test_first_chunk_pixel_quota(self):
        assert first_chunk_pixels(3) == 9
        assert first_chunk_pixels(1) == 1
        assert first_chunk_pixels(5) == 17

    def test_frame_by_frame_emission_points(self, pipe, lr33):
        state = pipe.start()
        emitted_at = []
        for t in range(33):
            out = pipe.push_frames(state, lr33[:, t])
            if out.shape[1]:
                emitted_at.append((t + 1, out.shape[1]))
        assert emitted_at == [(9, 9), (21, 12), (33, 12)]
        assert pipe.flush(state).shape[1] == 0

    def _consumed_when_emitted(self, pipe, lr, mode):
        state = pipe.start(mode=mode)
        consumed = []
        for t in range(lr.shape[1]):
            out = pipe.push_frames(state, lr[:, t])
            consumed.extend([t + 1] * out.shape[1])
        tail = pipe.flush(state)
        consumed.extend([lr.shape[1]] * tail.shape[1])
        assert len(consumed) == lr.shape[1]
        return consumed

    def test_latency_bound_holds_per_emitted_frame(self, pipe, lr33):
        # the i-th HR frame (1-based) must not wait past LR frame 12*ceil(i/12)+9
        for mode in ("ar", "chunking"):
            for i, consumed in enumerate(
                self._consumed_when_emitted(pipe, lr33, mode), start=1
            ):
                assert consumed <= 12 * ((i + 11) // 12) + 9

    def test_aggregation_lookahead_is_constant(self, pipe, lr33):
        # overlapped windows may hold a frame back one extra stride, but never
        # more: lookahead stays bounded by 4*(chunk_len + stride) frames
        stride = 3 - pipe.config.overlap
        for i, consumed in enumerate(
            self._consumed_when_emitted(pipe, lr33, "aggregation"), start=1
        ):
            assert consumed - i <= 4 * (3 + stride)

    def test_thirty_three_frames_yield_thirty_three_hr(self, pipe, lr33):
        for mode in MODES:
            hr, report = pipe.run_mode(lr33, mode=mode)
            assert hr.shape == (3, 33, 32, 32)
            assert report.frames_in == report.frames_out == 33

    def test_partial_tail_padded_but_not_emitted(self, pipe):
        for frames, chunks in ((1, 1), (5, 1), (9, 1), (10, 2), (35, 4)):
            lr = synthesize_hr("moving-patterns", frames, 8, 8, seed=2).data
            hr, report = pipe.run_mode(lr, mode="ar")
            assert hr.shape[1] == frames
            assert report.chunk_count == chunks

    def test_seam_grid_arithmetic(self):
        assert seam_grid(33, 3) == [8, 20]
        assert seam_grid(34, 3) == [8, 20, 32]
        assert seam_grid(9, 3) == []
        assert seam_grid(10, 3) == [8]
        assert seam_grid(33, 1) == list(range(0, 32, 4))


class TestStreamingConsistency:
    def test_incremental_pushes_match_single_run(self, pipe, lr33):
        for mode in MODES:
            full, _ = pipe.run_mode(lr33, mode=mode)
            state = pipe.start(mode=mode)
            parts = []
            for lo in range(0, 33, 5):
                parts.append(pipe.push_frames(state, lr33[:, lo : lo + 5]))
            parts.append(pipe.flush(state))
            got = np.concatenate([p for p in parts if p.shape[1]], axis=1)
            assert np.array_equal(got, full), mode

    def test_emitted_frames_are_prefix_of_full_output(self, pipe, lr33):
        full, _ = pipe.run_mode(lr33, mode="ar")
        state = pipe.start(mode="ar")
        seen = 0
        for t in range(33):
            out = pipe.push_frames(state, lr33[:, t])
            if out.shape[1]:
                assert np.array_equal(out, full[:, seen : seen + out.shape[1]])
                seen += out.shape[1]

    def test_same_seed_is_bitwise_reproducible(self, pipe, lr33):
        a, _ = pipe.run_mode(lr33, mode="ar")
        b, _ = pipe.run_mode(lr33, mode="ar")
        assert np.array_equal(a, b)

    def test_seed_changes_output(self, pipe, lr33):
        a, _ = pipe.run_mode(lr33, mode="ar", seed=11)
        b, _ = pipe.run_mode(lr33, mode="ar", seed=12)
        assert not np.array_equal(a, b)

    def test_per_chunk_encoding_matches_whole_clip_encoding(self, vae, lr33):
        up = bilinear_upscale(lr33, 4)
        full = vae.encode(VideoClip(up)).data
        parts = [vae.encode(VideoClip(up[:, :9]), first=True).data]
        for lo in (9, 21):
            parts.append(vae.encode(VideoClip(up[:, lo : lo + 12]), first=False).data)
        assert np.array_equal(np.concatenate(parts, axis=1), full)


class TestMemoryLedger:
    def test_post_warmup_peak_is_length_invariant(self, pipe):
        peaks = set()
        for frames in (33, 129, 257):
            lr = synthesize_hr("moving-patterns", frames, 8, 8, seed=5).data
            _, report = pipe.run_mode(lr, mode="ar")
            peaks.add(report.ledger.post_warmup_peak)
        assert len(peaks) == 1

    def test_unbounded_cache_grows_with_length(self, vae, encoder):
        unbounded = StreamPipeline(tiny_model(cache_len=None), vae, encoder, seed=11)
        peaks = []
        for frames in (33, 129):
            lr = synthesize_hr("moving-patterns", frames, 8, 8, seed=5).data
            _, report = unbounded.run_mode(lr, mode="ar")
            peaks.append(report.ledger.post_warmup_peak)
        assert peaks[1] > peaks[0]

    def test_cache_peak_matches_token_arithmetic(self, pipe, lr33):
        # 3 cached latent frames x (4x4 latent / 2x2 patches = 4 tokens) x
        # 32 dims x 2 (keys+values) x 2 layers
        _, report = pipe.run_mode(lr33, mode="ar")
        assert report.ledger.peak_cache == 3 * 4 * 32 * 2 * 2

    def test_chunking_retains_no_cache(self, pipe, lr33):
        _, report = pipe.run_mode(lr33, mode="chunking")
        assert report.ledger.peak_cache == 0

    def test_prompt_ledger_matches_token_count(self, pipe, encoder, lr33):
        _, report = pipe.run_mode(lr33, mode="ar")
        assert report.ledger.peak_prompt == encoder.config.grid**2 * 32

    def test_one_generator_forward_per_chunk(self, pipe, lr33):
        for mode in MODES:
            _, report = pipe.run_mode(lr33, mode=mode)
            assert report.forward_count == report.chunk_count


class TestModeReductions:
    def test_chunking_is_bitwise_ar_with_zero_cache_and_separate_prompts(
        self, pipe, vae, encoder, lr33
    ):
        zero_cache = StreamPipeline(tiny_model(cache_len=0), vae, encoder, seed=11)
        got, _ = pipe.run_mode(lr33, mode="chunking")
        want, _ = zero_cache.run_mode(lr33, mode="ar", prompt_policy="separate")
        assert np.array_equal(got, want)

    def test_chunking_differs_from_cached_ar(self, pipe, lr33):
        a, _ = pipe.run_mode(lr33, mode="ar")
        b, _ = pipe.run_mode(lr33, mode="chunking")
        assert not np.array_equal(a, b)

    def test_cache_limit_restored_after_chunking_run(self, pipe, lr33):
        pipe.run_mode(lr33, mode="chunking")
        assert pipe.model.config.cache_len == 3

    def test_default_prompt_policies(self):
        assert default_prompt_policy("ar") == "joint"
        assert default_prompt_policy("chunking") == "separate"
        assert default_prompt_policy("aggregation") == "separate"


class TestAggregation:
    def test_blend_weights_partition_unity_exactly(self, pipe, lr33):
        _, report = pipe.run_mode(lr33, mode="aggregation")
        assert len(report.blend_records) == 12  # 3 overlaps x 4 pixel frames
        for _, w_prev, w_new in report.blend_records:
            assert 0.0 < w_prev < 1.0
            assert 0.0 < w_new < 1.0
            assert w_prev + w_new == 1.0

    def test_zero_overlap_has_no_blends(self, vae, encoder, lr33):
        p = StreamPipeline(
            tiny_model(), vae, encoder, PipelineConfig(mode="aggregation", overlap=0), seed=11
        )
        hr, report = p.run_mode(lr33)
        assert hr.shape[1] == 33
        assert report.blend_records == []

    def test_two_latent_overlap_covers_stream(self, vae, encoder, lr33):
        p = StreamPipeline(
            tiny_model(), vae, encoder, PipelineConfig(mode="aggregation", overlap=2), seed=11
        )
        hr, report = p.run_mode(lr33)
        assert hr.shape[1] == 33
        assert report.chunk_count == 7  # starts 0..6 at stride 1

    def test_final_window_clamps_to_cover_tail(self, pipe):
        lr = synthesize_hr("moving-patterns", 37, 8, 8, seed=3).data
        hr, report = pipe.run_mode(lr, mode="aggregation")
        assert hr.shape[1] == 37
        # scheduled starts 0,2,4,6 plus the clamped final window at latent 7
        assert report.chunk_count == 5

    def test_streaming_output_matches_offline_window_oracle(self, pipe, vae, encoder, lr33):
        got, report = pipe.run_mode(lr33, mode="aggregation")

        model = pipe.model
        up = bilinear_upscale(lr33, 4)
        latents = vae.encode(VideoClip(up)).data  # (C, 9, h, w)
        n_lat, n = latents.shape[1], 3
        starts = list(range(0, n_lat - n + 1, 2))
        if starts[-1] != n_lat - n:
            starts.append(n_lat - n)
        out = None
        out_start = 0
        for k, start in enumerate(starts):
            middle = (9 // 2) if start == 0 else (4 * start - 3 + 12 // 2)
            frame_up = bilinear_upscale(lr33[:, middle][:, None], 4)
            prompt = extract_prompt(frame_up, encoder, selector="middle").detached()
            ctx = ChunkContext(
                layers=[LayerCache() for _ in range(model.config.layers)],
                prompt=prompt,
                frames_seen=start,
            )
            hr_lat, _ = model.generate_chunk(
                np.ascontiguousarray(latents[None, :, start : start + n]),
                ctx,
                chunk_noise_rng(11, k),
            )
            dec = vae.decode(LatentClip(hr_lat.data[0]), first=(start == 0)).data
            dec = np.clip(dec, 0.0, 1.0)
            p0 = 0 if start == 0 else 4 * start - 3
            if out is None:
                out = dec
            else:
                n_ov = out_start + out.shape[1] - p0
                for j in range(n_ov):
                    w_new = (j + 1) / (n_ov + 1)
                    out[:, p0 + j - out_start] = (1.0 - w_new) * out[:, p0 + j - out_start] + (
                        w_new * dec[:, j]
                    )
                out = np.concatenate([out, dec[:, n_ov:]], axis=1)
        assert np.array_equal(got, out[:, :33])
        assert report.chunk_count == len(starts)


class TestPrompting:
    def test_policies_are_identical_while_gates_are_zero(self, pipe, lr33):
        # cross-attention opens through zero-initialized gates, so at init the
        # prompt path must not alter the output at all
        outs = [pipe.run_mode(lr33, mode="ar", prompt_policy=p)[0] for p in ("joint", "none")]
        assert np.array_equal(outs[0], outs[1])

    def test_policies_diverge_once_gates_open(self, vae, encoder, lr33):
        model = tiny_model()
        for block in model.blocks:
            block.cross_gate.data[:] = 0.3
        p = StreamPipeline(model, vae, encoder, seed=11)
        joint, _ = p.run_mode(lr33, mode="ar", prompt_policy="joint")
        none, _ = p.run_mode(lr33, mode="ar", prompt_policy="none")
        separate, _ = p.run_mode(lr33, mode="ar", prompt_policy="separate")
        assert not np.array_equal(joint, none)
        assert not np.array_equal(joint, separate)


class TestValidation:
    def test_unknown_mode_rejected(self, pipe, lr33):
        with pytest.raises(ConfigError):
            pipe.run_mode(lr33, mode="overlap-free")

    def test_unknown_prompt_policy_rejected(self, pipe, lr33):
        with pytest.raises(ConfigError):
            pipe.run_mode(lr33, mode="ar", prompt_policy="global")

    def test_push_after_flush_rejected(self, pipe, lr33):
        state = pipe.start()
        pipe.push_frames(state, lr33[:, :9])
        pipe.flush(state)
        with pytest.raises(DataError):
            pipe.push_frames(state, lr33[:, 9:10])

    def test_double_flush_rejected(self, pipe, lr33):
        state = pipe.start()
        pipe.push_frames(state, lr33[:, :3])
        pipe.flush(state)
        with pytest.raises(DataError):
            pipe.flush(state)

    def test_frame_size_change_rejected(self, pipe, lr33):
        state = pipe.start()
        pipe.push_frames(state, lr33[:, :2])
        with pytest.raises(ShapeMismatchError):
            pipe.push_frames(state, np.zeros((3, 1, 8, 10)))

    def test_out_of_range_pixels_rejected(self, pipe):
        state = pipe.start()
        with pytest.raises(DataError):
            pipe.push_frames(state, np.full((3, 1, 8, 8), 1.5))

    def test_odd_lr_extent_rejected(self, pipe):
        state = pipe.start()
        with pytest.raises(DataError):
            pipe.push_frames(state, np.zeros((3, 1, 7, 8)))

    def test_empty_video_rejected(self, pipe):
        with pytest.raises(DataError):
            pipe.run_mode(np.zeros((3, 0, 8, 8)))

    def test_overlap_must_stay_below_chunk_len(self, vae, encoder, lr33):
        p = StreamPipeline(
            tiny_model(), vae, encoder, PipelineConfig(mode="aggregation", overlap=3), seed=11
        )
        with pytest.raises(ConfigError):
            p.run_mode(lr33)

    def test_dimension_mismatch_rejected_at_construction(self, vae):
        wide = PromptEncoder(PromptEncoderConfig(widths=(8, 12, 16, 24), grid=2, model_dim=64))
        with pytest.raises(ConfigError):
            StreamPipeline(tiny_model(), vae, wide)

    def test_latent_grid_must_fit_positional_table(self, vae, encoder):
        p = StreamPipeline(tiny_model(), vae, encoder, seed=11)
        state = p.start()
        with pytest.raises(ConfigError):
            # 64x64 LR -> 32x32 latent -> 16x16 patches > max_grid 8
            p.push_frames(state, np.zeros((3, 1, 64, 64)))


class TestBench:
    def test_bench_rows_and_fit(self, pipe):
        def make(frames):
            return synthesize_hr("moving-patterns", frames, 8, 8, seed=5).data

        result = bench(pipe, [33, 65, 129], make, mode="ar")
        assert [row.frames for row in result.rows] == [33, 65, 129]
        assert result.constant_memory()
        assert result.slope > 0
        assert 0.0 <= result.r_squared <= 1.0
        assert result.reference_points[0]["memory_gb"] == result.reference_points[1]["memory_gb"]

    def test_linear_fit_recovers_exact_line(self):
        slope, intercept, r2 = linear_fit([1, 2, 3, 4], [3.0, 5.0, 7.0, 9.0])
        assert abs(slope - 2.0) <= 1e-12
        assert abs(intercept - 1.0) <= 1e-12
        assert r2 == 1.0

    def test_bench_requires_counts(self, pipe):
        with pytest.raises(ConfigError):
            bench(pipe, [], lambda f: None, mode="ar")
