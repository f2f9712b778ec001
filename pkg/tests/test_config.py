"""Configuration loading, strict merging, overrides, hashing, and builders."""

import json

import numpy as np
import pytest

from streamvsr.config import (
    SEED_ENV_VAR,
    apply_overrides,
    build_degradation,
    build_pipeline,
    build_stage_configs,
    build_trainer,
    build_weights,
    config_hash,
    default_config,
    load_config,
    resolve_seed,
    write_snapshot,
)
from streamvsr.errors import ConfigError


def small_overrides():
    """Shrink the default model tree enough for fast builder smoke tests."""
    return [
        "model.layers=1",
        "model.heads=2",
        "model.model_dim=16",
        "model.max_grid=8",
        "prompt_encoder.model_dim=16",
        "prompt_encoder.widths=[4,6,8,12]",
        "prompt_encoder.grid=2",
        "vae.enc_widths=[4,6,8,12]",
        "vae.dec_widths=[12,8,6,4]",
    ]


def small_config():
    return apply_overrides(default_config(), small_overrides())


class TestDefaults:
    def test_top_level_sections(self):
        cfg = default_config()
        assert set(cfg) == {
            "seed", "precision", "model", "vae", "prompt_encoder",
            "pipeline", "degradation", "data", "train",
        }
        assert cfg["seed"] is None
        assert cfg["precision"] == "float32"

    def test_defaults_are_mutually_consistent(self):
        cfg = default_config()
        assert cfg["model"]["model_dim"] == cfg["prompt_encoder"]["model_dim"]
        assert cfg["model"]["latent_channels"] == cfg["vae"]["latent_channels"]
        s1, s2 = build_stage_configs(cfg)
        assert (s1.stage, s2.stage) == ("I", "II")

    def test_each_call_returns_a_fresh_copy(self):
        a = default_config()
        a["model"]["layers"] = 99
        assert default_config()["model"]["layers"] != 99

    def test_stage_defaults_follow_training_recipe(self):
        cfg = default_config()
        assert cfg["train"]["stage1"]["clip_frames"] == 9
        assert cfg["train"]["stage2"]["clip_frames"] == 33
        assert cfg["train"]["weights"] == {"mse": 1.0, "dists": 1.0,
                                           "temp": 1.0, "dmd": 1.0}


class TestLoadConfig:
    def test_none_path_gives_defaults(self):
        assert load_config(None) == default_config()

    def test_file_merges_partially(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"precision": "float64",
                                 "model": {"layers": 2}}))
        cfg = load_config(p)
        assert cfg["precision"] == "float64"
        assert cfg["model"]["layers"] == 2
        assert cfg["model"]["heads"] == default_config()["model"]["heads"]

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"model": {"nope": 1}}))
        with pytest.raises(ConfigError, match="unknown config key: model.nope"):
            load_config(p)

    def test_value_for_section_rejected(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"model": 3}))
        with pytest.raises(ConfigError, match="section"):
            load_config(p)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "absent.json")

    def test_malformed_json_rejected(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(p)

    def test_non_object_json_rejected(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text("[1, 2]")
        with pytest.raises(ConfigError, match="JSON object"):
            load_config(p)


class TestOverrides:
    def test_json_coercion(self):
        cfg = apply_overrides(default_config(), [
            "model.layers=2",
            "data.motion=0.5",
            "data.kinds=[\"shapes\"]",
            "model.cache_rotated_keys=false",
            "pipeline.mode=chunking",
        ])
        assert cfg["model"]["layers"] == 2
        assert cfg["data"]["motion"] == 0.5
        assert cfg["data"]["kinds"] == ["shapes"]
        assert cfg["model"]["cache_rotated_keys"] is False
        assert cfg["pipeline"]["mode"] == "chunking"

    def test_null_clears_but_none_stays_text(self):
        cfg = apply_overrides(default_config(), ["model.cache_len=null"])
        assert cfg["model"]["cache_len"] is None
        # "none" must survive as a string: it names the no-guidance policy.
        cfg = apply_overrides(default_config(), ["pipeline.prompt_policy=none"])
        assert cfg["pipeline"]["prompt_policy"] == "none"

    def test_bare_string_passes_through(self):
        cfg = apply_overrides(default_config(), ["pipeline.prompt_policy=joint"])
        assert cfg["pipeline"]["prompt_policy"] == "joint"

    @pytest.mark.parametrize("item", [
        "model.nope=1",
        "nope.layers=1",
        "model=3",            # a section, not a value
        "model.layers",       # missing '='
    ])
    def test_malformed_overrides_rejected(self, item):
        with pytest.raises(ConfigError):
            apply_overrides(default_config(), [item])

    def test_empty_override_list_is_noop(self):
        assert apply_overrides(default_config(), []) == default_config()
        assert apply_overrides(default_config(), None) == default_config()


class TestHash:
    def test_stable_across_calls_and_key_order(self):
        h1 = config_hash({"b": 1, "a": {"y": 2, "x": 3}})
        h2 = config_hash({"a": {"x": 3, "y": 2}, "b": 1})
        assert h1 == h2
        assert len(h1) == 64

    def test_any_value_change_moves_the_hash(self):
        base = default_config()
        seen = {config_hash(base)}
        for override in ("model.layers=5", "train.weights.dmd=0.0",
                         "pipeline.mode=aggregation", "data.motion=2.0"):
            h = config_hash(apply_overrides(default_config(), [override]))
            assert h not in seen, f"hash collision for {override}"
            seen.add(h)

    def test_default_hash_reproducible_in_one_session(self):
        assert config_hash(default_config()) == config_hash(default_config())


class TestSeedResolution:
    def test_fallback_is_zero(self, monkeypatch):
        monkeypatch.delenv(SEED_ENV_VAR, raising=False)
        assert resolve_seed(None, default_config()) == 0

    def test_env_var_beats_fallback(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV_VAR, "77")
        assert resolve_seed(None, default_config()) == 77

    def test_config_beats_env(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV_VAR, "77")
        cfg = apply_overrides(default_config(), ["seed=5"])
        assert resolve_seed(None, cfg) == 5

    def test_cli_beats_everything(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV_VAR, "77")
        cfg = apply_overrides(default_config(), ["seed=5"])
        assert resolve_seed(9, cfg) == 9

    def test_non_integer_env_rejected(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV_VAR, "pi")
        with pytest.raises(ConfigError, match=SEED_ENV_VAR):
            resolve_seed(None, default_config())


class TestSnapshot:
    def test_snapshot_contents(self, tmp_path):
        cfg = small_config()
        path = write_snapshot(cfg, 13, tmp_path, extra={"command": "infer"})
        assert path.name == "run_config.json"
        snap = json.loads(path.read_text())
        assert snap["seed"] == 13
        assert snap["command"] == "infer"
        assert snap["config_hash"] == config_hash(cfg)
        assert snap["config"] == cfg

    def test_snapshot_config_reloads_identically(self, tmp_path):
        cfg = small_config()
        write_snapshot(cfg, 3, tmp_path)
        snap = json.loads((tmp_path / "run_config.json").read_text())
        rebuilt = json.loads(json.dumps(snap["config"]))
        assert config_hash(rebuilt) == config_hash(cfg)


class TestBuilders:
    def test_pipeline_runs_a_short_clip(self):
        pipe = build_pipeline(small_config(), seed=3)
        lr = np.random.default_rng(0).random((3, 9, 8, 8), dtype=np.float32)
        hr, rep = pipe.run_mode(lr)
        assert hr.shape == (3, 9, 32, 32)
        assert rep.mode == "ar"
        assert rep.forward_count == rep.chunk_count

    def test_precision_selects_dtype(self):
        cfg = apply_overrides(small_config(), ["precision=float64"])
        assert build_pipeline(cfg, seed=0).model.dtype == np.float64
        assert build_pipeline(small_config(), seed=0).model.dtype == np.float32

    def test_bad_precision_rejected(self):
        cfg = apply_overrides(small_config(), ["precision=float16"])
        with pytest.raises(ConfigError, match="precision"):
            build_pipeline(cfg, seed=0)

    def test_trainer_carries_config_weights_and_seed(self):
        cfg = apply_overrides(small_config(), ["train.weights.dmd=0.25"])
        tr = build_trainer(cfg, seed=11)
        assert tr.seed == 11
        assert tr.weights.dmd == 0.25
        assert tr.model.dtype == np.float32

    def test_weights_reject_negatives(self):
        cfg = apply_overrides(default_config(), ["train.weights.temp=-1.0"])
        with pytest.raises(ConfigError):
            build_weights(cfg)

    def test_stage_labels_must_match_slots(self):
        cfg = apply_overrides(default_config(), ["train.stage1.stage=II"])
        with pytest.raises(ConfigError, match="stage"):
            build_stage_configs(cfg)

    def test_degradation_round_trips_ranges(self):
        dc = build_degradation(default_config())
        assert dc.blur_sigma == tuple(default_config()["degradation"]["blur_sigma"])
