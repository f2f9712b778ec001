"""Run configuration: defaults, JSON merge, dotted overrides, hashing, builders.

A run is reproducible from (resolved config snapshot, seed).  The defaults
tree mirrors the component dataclass defaults; user JSON files and
``section.key=value`` overrides are merged strictly — unknown keys are
errors, not silent no-ops.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .degrade import HR_KINDS, DegradationConfig
from .dit import DiTConfig, GeneratorModel
from .errors import ConfigError
from .guidance import PromptEncoder, PromptEncoderConfig
from .losses import LossWeights
from .pipeline import PipelineConfig, StreamPipeline
from .trainer import StageConfig, Trainer, stage1_defaults, stage2_defaults
from .vae import CausalVae, VaeConfig

SEED_ENV_VAR = "INFVSR_SEED"
_PRECISIONS = ("float32", "float64")


def _jsonify(node):
    """Normalize to JSON-native types so configs round-trip through files."""
    if isinstance(node, dict):
        return {k: _jsonify(v) for k, v in node.items()}
    if isinstance(node, (list, tuple)):
        return [_jsonify(v) for v in node]
    return node


def default_config() -> dict:
    """The full defaults tree (a fresh copy; mutate freely)."""
    return _jsonify(
        {
            "seed": None,
            "precision": "float32",
            "model": asdict(DiTConfig()),
            "vae": asdict(VaeConfig()),
            "prompt_encoder": asdict(PromptEncoderConfig()),
            "pipeline": {"mode": "ar", "overlap": 1, "prompt_policy": "auto"},
            "degradation": asdict(DegradationConfig()),
            "data": {
                "count": 4,
                "frames": 33,
                "height": 64,
                "width": 64,
                "kinds": list(HR_KINDS),
                "motion": 1.0,
            },
            "train": {
                "stage1": asdict(stage1_defaults()),
                "stage2": asdict(stage2_defaults()),
                "weights": {"mse": 1.0, "dists": 1.0, "temp": 1.0, "dmd": 1.0},
                "score_width": 32,
            },
        }
    )


# --------------------------------------------------------------------------
# merging and overrides
# --------------------------------------------------------------------------

def _merge(base: dict, user: dict, path: str = "") -> None:
    for key, val in user.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{where} is a section, got a value: {val!r}")
            _merge(base[key], val, where + ".")
        else:
            if isinstance(val, dict):
                raise ConfigError(f"{where} is a value, got a section")
            base[key] = val


def load_config(path: str | os.PathLike | None = None) -> dict:
    """Defaults, deep-merged with an optional JSON file (strict keys)."""
    cfg = default_config()
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            with open(p) as fh:
                user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {p} is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"config file {p} must hold a JSON object")
        _merge(cfg, user)
    return cfg


def _coerce(raw: str):
    """JSON value, else the bare string (so ``null`` clears, ``none`` is text)."""
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply ``section.key=value`` strings in place; values parse as JSON."""
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        dotted, raw = item.split("=", 1)
        keys = dotted.strip().split(".")
        node = cfg
        for k in keys[:-1]:
            if not isinstance(node, dict) or k not in node:
                raise ConfigError(f"unknown config key: {dotted}")
            node = node[k]
        leaf = keys[-1]
        if not isinstance(node, dict) or leaf not in node:
            raise ConfigError(f"unknown config key: {dotted}")
        if isinstance(node[leaf], dict):
            raise ConfigError(f"{dotted} is a section, not a value")
        node[leaf] = _coerce(raw.strip())
    return cfg


def config_hash(cfg: dict) -> str:
    """sha256 of the canonical JSON encoding."""
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def resolve_seed(cli_seed: int | None, cfg: dict) -> int:
    """Priority: CLI flag, then config, then the seed env var, then 0."""
    if cli_seed is not None:
        return int(cli_seed)
    if cfg.get("seed") is not None:
        return int(cfg["seed"])
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV_VAR}={env!r} is not an integer") from exc
    return 0


def write_snapshot(cfg: dict, seed: int, out_dir, extra: dict | None = None) -> Path:
    """Persist the resolved config + seed + hash a run actually used."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    snapshot = {"seed": seed, "config_hash": config_hash(cfg), "config": cfg}
    if extra:
        snapshot.update(extra)
    path = out / "run_config.json"
    with open(path, "w") as fh:
        json.dump(snapshot, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# --------------------------------------------------------------------------
# builders
# --------------------------------------------------------------------------

def _dtype(cfg: dict):
    precision = cfg.get("precision", "float32")
    if precision not in _PRECISIONS:
        raise ConfigError(f"precision must be one of {_PRECISIONS}, got {precision!r}")
    return np.dtype(precision)


def build_model(cfg: dict) -> GeneratorModel:
    section = dict(cfg["model"])
    return GeneratorModel(DiTConfig(**section).validate(), dtype=_dtype(cfg))


def build_vae(cfg: dict) -> CausalVae:
    section = dict(cfg["vae"])
    for key in ("enc_widths", "dec_widths"):
        section[key] = tuple(section[key])
    return CausalVae(VaeConfig(**section), dtype=_dtype(cfg))


def build_prompt_encoder(cfg: dict) -> PromptEncoder:
    section = dict(cfg["prompt_encoder"])
    section["widths"] = tuple(section["widths"])
    return PromptEncoder(PromptEncoderConfig(**section).validate(), dtype=_dtype(cfg))


def build_pipeline(cfg: dict, seed: int) -> StreamPipeline:
    pipe_cfg = PipelineConfig(**cfg["pipeline"]).validate()
    return StreamPipeline(build_model(cfg), build_vae(cfg), build_prompt_encoder(cfg),
                          pipe_cfg, seed=seed)


def build_degradation(cfg: dict) -> DegradationConfig:
    section = dict(cfg["degradation"])
    for key in section:
        section[key] = tuple(section[key])
    return DegradationConfig(**section).validate()


def build_weights(cfg: dict) -> LossWeights:
    return LossWeights(**cfg["train"]["weights"]).validate()


def build_stage_configs(cfg: dict) -> tuple[StageConfig, StageConfig]:
    s1 = StageConfig(**cfg["train"]["stage1"]).validate()
    s2 = StageConfig(**cfg["train"]["stage2"]).validate()
    if s1.stage != "I" or s2.stage != "II":
        raise ConfigError("train.stage1/stage2 must keep stages 'I' and 'II'")
    return s1, s2


def build_trainer(cfg: dict, seed: int) -> Trainer:
    return Trainer(build_model(cfg), build_vae(cfg), build_prompt_encoder(cfg),
                   weights=build_weights(cfg), seed=seed,
                   score_width=int(cfg["train"]["score_width"]))
