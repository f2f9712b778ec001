"""Command-line entry point: data synthesis, training, inference, benchmarks, ablations.

Every subcommand resolves one configuration (defaults < JSON file < ``--set``
overrides), resolves one seed (``--seed`` < config < ``INFVSR_SEED`` < 0),
and writes the pair into ``run_config.json`` inside its output directory, so
any run can be reproduced from its artifacts alone.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure (non-finite values).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import report as report_mod
from . import tnsr
from .config import (
    SEED_ENV_VAR,
    _dtype,
    _merge,
    apply_overrides,
    build_degradation,
    build_pipeline,
    build_stage_configs,
    build_trainer,
    config_hash,
    load_config,
    resolve_seed,
    write_snapshot,
)
from .degrade import degrade_clip, load_dataset, make_dataset, synthesize_hr
from .dit import GeneratorModel
from .errors import ConfigError, DataError, NonFiniteError, NumericalError
from .metrics import aggregate_reports, evaluate_clip, temporal_profile
from .pipeline import (
    MODES,
    REFERENCE_POINTS_720P,
    STATE_HEADER,
    TIMING_HEADER,
    PipelineConfig,
    RunReport,
    StreamPipeline,
)
from .pipeline import bench as bench_pipeline
from .trainer import LOSS_HEADER, ClipSampler, run_curriculum
from .video_io import read_png_sequence, read_raw_video, write_raw_video

EVAL_SEED_OFFSET = 9000  # held-out clips never share a seed with training clips

METRIC_HEADER = ("arm", "psnr", "ssim", "e_warp", "boundary_drift", "config_hash")


# --------------------------------------------------------------------------
# shared plumbing
# --------------------------------------------------------------------------

def _resolved_config(args) -> dict:
    cfg = load_config(args.config)
    return apply_overrides(cfg, args.overrides)


def _copy(cfg: dict) -> dict:
    return json.loads(json.dumps(cfg))


def _parse_shape(text: str) -> tuple[int, int, int]:
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise ConfigError(f"--shape wants TxHxW (e.g. 33x64x64), got {text!r}")
    try:
        frames, height, width = (int(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"--shape wants integers TxHxW, got {text!r}") from exc
    return frames, height, width


def _parse_frames(text: str) -> list[int]:
    try:
        counts = [int(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise ConfigError(f"--frames wants a comma list of integers, got {text!r}") from exc
    if not counts or any(c < 1 for c in counts):
        raise ConfigError(f"--frames wants positive frame counts, got {text!r}")
    return counts


def _clip_specs(cfg: dict) -> list[tuple[str, int, int, int]]:
    d = cfg["data"]
    kinds = list(d["kinds"])
    if not kinds:
        raise ConfigError("data.kinds must list at least one clip kind")
    return [
        (kinds[i % len(kinds)], int(d["frames"]), int(d["height"]), int(d["width"]))
        for i in range(int(d["count"]))
    ]


def _synth_pairs(cfg: dict, seed: int, dtype) -> list[tuple[np.ndarray, np.ndarray]]:
    """Synthesize (HQ, LQ) pairs exactly as a written dataset would hold them."""
    degradation = build_degradation(cfg)
    motion = float(cfg["data"]["motion"])
    pairs = []
    for idx, (kind, frames, height, width) in enumerate(_clip_specs(cfg)):
        hr = synthesize_hr(kind, frames, height, width, seed + idx, motion=motion)
        lr, _ = degrade_clip(hr, degradation, seed, clip_tag=idx)
        pairs.append((hr.data.astype(dtype), lr.data.astype(dtype)))
    return pairs


def _eval_pairs(cfg: dict, seed: int, dtype) -> list[tuple[np.ndarray, np.ndarray]]:
    held_out = _copy(cfg)
    return _synth_pairs(held_out, seed + EVAL_SEED_OFFSET, dtype)


def _manifest_pairs(path, dtype) -> list[tuple[np.ndarray, np.ndarray]]:
    manifest = load_dataset(str(path))
    base = Path(path).parent
    pairs = [
        (
            read_raw_video(str(base / clip["hr"])).astype(dtype),
            read_raw_video(str(base / clip["lr"])).astype(dtype),
        )
        for clip in manifest["clips"]
    ]
    if not pairs:
        raise DataError(f"dataset manifest {path} lists no clips")
    return pairs


def _load_generator(model: GeneratorModel, ckpt_dir) -> dict:
    tensors, meta = tnsr.load_manifest(ckpt_dir)
    state = {k[len("model."):]: v for k, v in tensors.items() if k.startswith("model.")}
    if not state:
        raise DataError(f"checkpoint {ckpt_dir} holds no generator weights")
    model.load_state_dict(state)
    return meta


def _read_video(path) -> np.ndarray:
    p = Path(path)
    if p.is_dir():
        return read_png_sequence(str(p))
    return read_raw_video(str(p))


def _memory_summary(report: RunReport) -> dict:
    ledger = report.ledger
    peaks = ledger.category_peaks()
    return {
        "peak_cache": peaks["cache"],
        "peak_buffer": peaks["buffer"],
        "peak_prompt": peaks["prompt"],
        "peak_total": ledger.peak_total,
        "post_warmup_peak": ledger.post_warmup_peak,
    }


def _write_json(path: Path, payload: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _eval_metrics(pipeline: StreamPipeline, pairs, mode=None, prompt_policy=None) -> dict:
    reports = []
    for idx, (hr, lr) in enumerate(pairs):
        sr, run = pipeline.run_mode(lr, mode=mode, prompt_policy=prompt_policy)
        reports.append(
            evaluate_clip(f"eval{idx:02d}", sr, hr, seam_indices=run.seam_transitions)
        )
    return aggregate_reports(reports)


# --------------------------------------------------------------------------
# synth-data
# --------------------------------------------------------------------------

def cmd_synth_data(args) -> int:
    cfg = _resolved_config(args)
    if args.count is not None:
        if args.count < 1:
            raise ConfigError(f"--count must be positive, got {args.count}")
        cfg["data"]["count"] = int(args.count)
    if args.shape is not None:
        frames, height, width = _parse_shape(args.shape)
        cfg["data"].update(frames=frames, height=height, width=width)
    if args.degradation_config is not None:
        p = Path(args.degradation_config)
        if not p.exists():
            raise ConfigError(f"degradation config not found: {p}")
        with open(p) as fh:
            try:
                user = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"degradation config {p} is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"degradation config {p} must hold a JSON object")
        _merge(cfg["degradation"], user, "degradation.")
    seed = resolve_seed(args.seed, cfg)
    out = Path(args.out)
    write_snapshot(cfg, seed, out, extra={"command": "synth-data"})
    manifest = make_dataset(
        str(out), _clip_specs(cfg), build_degradation(cfg), seed,
        motion=float(cfg["data"]["motion"]),
    )
    print(f"wrote {cfg['data']['count']} clip pairs -> {manifest}")
    return 0


# --------------------------------------------------------------------------
# train
# --------------------------------------------------------------------------

def _run_single_stage(trainer, stage_cfg, sampler, out: Path):
    try:
        return trainer.run_stage(stage_cfg, sampler)
    except NonFiniteError:
        trainer.save_checkpoint(out / "diagnostic.ckpt")
        raise


def cmd_train(args) -> int:
    cfg = _resolved_config(args)
    seed = resolve_seed(args.seed, cfg)
    out = Path(args.out)
    write_snapshot(cfg, seed, out, extra={"command": "train", "stage": args.stage})

    dtype = _dtype(cfg)
    pairs = _manifest_pairs(args.data, dtype) if args.data else _synth_pairs(cfg, seed, dtype)
    sampler = ClipSampler(pairs)
    trainer = build_trainer(cfg, seed)
    stage1, stage2 = build_stage_configs(cfg)

    if args.stage == "all":
        summary = run_curriculum(trainer, sampler, stage1, stage2, out, resume=args.resume)
        for entry in summary["stages"]:
            print(f"stage {entry['stage']}: {entry['steps']} steps, final {entry['final']}")
        print(f"checkpoints -> {summary['checkpoints']['stage1']}, "
              f"{summary['checkpoints']['stage2']}")
        return 0

    ck1, ck2 = out / "stage1.ckpt", out / "stage2.ckpt"
    csv_path = out / "train_losses.csv"
    if args.stage == "I":
        if args.resume and (ck1 / "manifest.json").exists():
            print(f"stage I checkpoint already present at {ck1}; nothing to do")
            return 0
        rows: list[list] = []
        report = _run_single_stage(trainer, stage1, sampler, out)
        trainer.save_checkpoint(ck1)
        checkpoint = ck1
    else:  # stage II
        if args.resume and (ck2 / "manifest.json").exists():
            print(f"stage II checkpoint already present at {ck2}; nothing to do")
            return 0
        if not (ck1 / "manifest.json").exists():
            raise DataError(f"stage II needs a stage I checkpoint at {ck1}; "
                            f"run --stage I (or all) first")
        trainer.load_checkpoint(ck1)
        rows = []
        if csv_path.exists():
            _, old = report_mod.read_csv(csv_path)
            rows = [list(r) for r in old]
        report = _run_single_stage(trainer, stage2, sampler, out)
        trainer.save_checkpoint(ck2)
        checkpoint = ck2

    rows.extend(r.row() for r in report.records)
    report_mod.write_csv(csv_path, LOSS_HEADER, rows)
    if rows:
        report_mod.save_loss_curves(out / "train_losses.png", LOSS_HEADER, rows)
    report.checkpoint = str(checkpoint)
    _write_json(out / "train_summary.json", {
        "seed": seed,
        "stages": [report.summary()],
        "checkpoints": {"stage1": str(ck1), "stage2": str(ck2)},
    })
    print(f"stage {report.stage}: {len(report.records)} steps, "
          f"final {report.summary().get('final')}")
    print(f"checkpoint -> {checkpoint}")
    return 0


# --------------------------------------------------------------------------
# infer
# --------------------------------------------------------------------------

def _emit_png_frames(directory: Path, video: np.ndarray, start: int) -> int:
    from PIL import Image

    directory.mkdir(parents=True, exist_ok=True)
    u8 = np.clip(np.rint(video * 255.0), 0, 255).astype(np.uint8)
    for t in range(video.shape[1]):
        img = Image.fromarray(np.transpose(u8[:, t], (1, 2, 0)), mode="RGB")
        img.save(directory / f"sr_{start + t:05d}.png")
    return int(video.shape[1])


def _read_png_frame(path: Path) -> np.ndarray:
    from PIL import Image

    img = Image.open(path).convert("RGB")
    return np.transpose(np.asarray(img, dtype=np.float32) / 255.0, (2, 0, 1))


def _infer_stream(pipeline: StreamPipeline, in_dir: Path, out: Path, dtype) -> dict:
    """Consume ``frame_#####.png`` files in order, emitting SR frames as they land."""
    state = pipeline.start()
    frames_dir = out / "frames"
    forwards_before = pipeline.model.forward_count
    emitted = 0
    pushed = 0
    log_rows: list[list] = []
    while True:
        frame_path = in_dir / f"frame_{pushed:05d}.png"
        if not frame_path.exists():
            break
        ready = pipeline.push_frames(state, _read_png_frame(frame_path).astype(dtype))
        emitted += _emit_png_frames(frames_dir, ready, start=emitted)
        log_rows.append([pushed, int(ready.shape[1]), emitted])
        pushed += 1
    if pushed == 0:
        raise DataError(f"no frame_#####.png files found in {in_dir}")
    tail = pipeline.flush(state)
    emitted += _emit_png_frames(frames_dir, tail, start=emitted)
    log_rows.append(["flush", int(tail.shape[1]), emitted])
    report_mod.write_csv(out / "emission.csv",
                         ["pushed", "frames_ready", "total_emitted"], log_rows)
    return {
        "mode": state.mode,
        "prompt_policy": state.prompt_policy,
        "overlap": state.overlap,
        "frames_in": pushed,
        "frames_out": emitted,
        "chunk_count": state.chunk_index,
        "forward_count": pipeline.model.forward_count - forwards_before,
        "memory": {
            "peak_cache": state.ledger.peak_cache,
            "peak_buffer": state.ledger.peak_buffer,
            "peak_prompt": state.ledger.peak_prompt,
            "peak_total": state.ledger.peak_total,
            "post_warmup_peak": state.ledger.post_warmup_peak,
        },
    }


def cmd_infer(args) -> int:
    cfg = _resolved_config(args)
    if args.mode is not None:
        cfg["pipeline"]["mode"] = args.mode
    seed = resolve_seed(args.seed, cfg)
    out = Path(args.out)
    write_snapshot(cfg, seed, out, extra={
        "command": "infer",
        "input": str(args.input),
        "model": str(args.model) if args.model else None,
        "stream": bool(args.stream),
    })
    pipeline = build_pipeline(cfg, seed)
    if args.model:
        _load_generator(pipeline.model, args.model)
    dtype = pipeline.model.dtype

    if args.stream:
        in_dir = Path(args.input)
        if not in_dir.is_dir():
            raise DataError(f"--stream wants a directory of frame_#####.png files, "
                            f"got {in_dir}")
        summary = _infer_stream(pipeline, in_dir, out, dtype)
        _write_json(out / "report.json", summary)
        print(f"streamed {summary['frames_in']} LR frames -> "
              f"{summary['frames_out']} HR frames ({summary['chunk_count']} chunks) "
              f"under {out / 'frames'}")
        return 0

    video = _read_video(args.input).astype(dtype)
    import time

    t0 = time.perf_counter()
    hr, run = pipeline.run_mode(video)
    wall = time.perf_counter() - t0
    sr_path = write_raw_video(str(out / "sr"), hr)
    report_mod.save_profile_image(out / "profile.png",
                                  temporal_profile(hr, hr.shape[2] // 2),
                                  title=f"{run.mode} temporal profile")
    _write_json(out / "report.json", {
        "mode": run.mode,
        "prompt_policy": run.prompt_policy,
        "overlap": run.overlap,
        "frames_in": run.frames_in,
        "frames_out": run.frames_out,
        "chunk_count": run.chunk_count,
        "forward_count": run.forward_count,
        "seam_transitions": list(run.seam_transitions),
        "memory": _memory_summary(run),
    })
    _write_json(out / "timing.json", {"wall_time_s": wall})
    print(f"{run.mode}: {run.frames_in} LR frames -> {run.frames_out} HR frames "
          f"in {run.chunk_count} chunks ({run.forward_count} generator passes)")
    print(f"output -> {sr_path}")
    return 0


# --------------------------------------------------------------------------
# bench
# --------------------------------------------------------------------------

def cmd_bench(args) -> int:
    cfg = _resolved_config(args)
    if args.mode is not None:
        cfg["pipeline"]["mode"] = args.mode
    counts = _parse_frames(args.frames)
    seed = resolve_seed(args.seed, cfg)
    out = Path(args.report)
    write_snapshot(cfg, seed, out, extra={"command": "bench", "frames": counts})
    pipeline = build_pipeline(cfg, seed)
    if args.model:
        _load_generator(pipeline.model, args.model)
    dtype = pipeline.model.dtype

    data = cfg["data"]
    kind = list(data["kinds"])[0] if data["kinds"] else "moving-patterns"
    lr_h, lr_w = int(data["height"]) // 4, int(data["width"]) // 4

    def make_video(frames: int) -> np.ndarray:
        clip = synthesize_hr(kind, frames, lr_h, lr_w, seed, motion=float(data["motion"]))
        return clip.data.astype(dtype)

    result = bench_pipeline(pipeline, counts, make_video)
    report_mod.write_csv(out / "bench_state.csv", STATE_HEADER,
                         [row.state_cells() for row in result.rows])
    report_mod.write_csv(out / "bench_timing.csv", TIMING_HEADER,
                         [[row.frames, f"{row.wall_time:.6f}"] for row in result.rows])
    _write_json(out / "bench_summary.json", {
        "mode": result.mode,
        "frames": counts,
        "slope_s_per_frame": result.slope,
        "intercept_s": result.intercept,
        "r_squared": result.r_squared,
        "constant_memory": result.constant_memory(),
        "reference_720p": list(REFERENCE_POINTS_720P),
    })
    frames = [row.frames for row in result.rows]
    report_mod.save_line_plot(
        out / "bench_runtime.png", frames,
        {"wall_time_s": [row.wall_time for row in result.rows]},
        xlabel="LR frames", ylabel="seconds",
        title=(f"{result.mode} runtime, R^2={result.r_squared:.4f} "
               f"(720p reference: 6.82 s / 33 fr at 20.39 GB)"),
        fit=(result.slope, result.intercept),
    )
    report_mod.save_line_plot(
        out / "bench_memory.png", frames,
        {
            "post_warmup_peak": [row.post_warmup_peak for row in result.rows],
            "cache": [row.peak_cache for row in result.rows],
            "buffer": [row.peak_buffer for row in result.rows],
            "prompt": [row.peak_prompt for row in result.rows],
        },
        xlabel="LR frames", ylabel="retained elements",
        title=f"{result.mode} peak retained state vs stream length",
    )

    widths = (8, 8, 12, 12, 12, 18, 12)
    header = (*STATE_HEADER, "wall_time_s")
    print("  ".join(h.rjust(w) for h, w in zip(header, widths)))
    for row in result.rows:
        cells = (*row.state_cells(), f"{row.wall_time:.3f}")
        print("  ".join(str(c).rjust(w) for c, w in zip(cells, widths)))
    print(f"linear fit: time = {result.slope:.4f}*frames + {result.intercept:.4f} "
          f"(R^2 = {result.r_squared:.4f})")
    print(f"post-warm-up peak constant across lengths: {result.constant_memory()}")
    for ref in REFERENCE_POINTS_720P:
        print(f"reference {ref['resolution']}: {ref['frames']} frames, "
              f"{ref['runtime_s']} s, {ref['memory_gb']} GB")
    return 0


# --------------------------------------------------------------------------
# ablate
# --------------------------------------------------------------------------

def _inference_arms(which: str) -> list[tuple[str, list[str]]]:
    if which == "a":
        return [
            ("chunking", ["pipeline.mode=chunking"]),
            ("aggregation", ["pipeline.mode=aggregation"]),
            ("ar", ["pipeline.mode=ar"]),
        ]
    if which == "b":
        return [
            ("no-guidance", ["pipeline.mode=ar", "pipeline.prompt_policy=none"]),
            ("separate", ["pipeline.mode=ar", "pipeline.prompt_policy=separate"]),
            ("joint", ["pipeline.mode=ar", "pipeline.prompt_policy=joint"]),
        ]
    # which == "c": (cache M, chunk N) grid
    return [
        ("M1-N1", ["pipeline.mode=ar", "model.cache_len=1", "model.chunk_len=1"]),
        ("M3-N3", ["pipeline.mode=ar", "model.cache_len=3", "model.chunk_len=3"]),
        ("M5-N5", ["pipeline.mode=ar", "model.cache_len=5", "model.chunk_len=5"]),
        ("Minf-N3", ["pipeline.mode=ar", "model.cache_len=null", "model.chunk_len=3"]),
    ]


def _training_arms(which: str, cfg: dict) -> list[tuple[str, list[str]]]:
    if which == "d":
        s1, s2 = cfg["train"]["stage1"], cfg["train"]["stage2"]
        return [
            ("full", []),
            ("no-patch", [
                f"train.stage1.window_h={s1['clip_height']}",
                f"train.stage1.window_w={s1['clip_width']}",
                f"train.stage2.window_h={s2['clip_height']}",
                f"train.stage2.window_w={s2['clip_width']}",
            ]),
            ("no-stage1", ["train.stage1.learning_rate=0.0"]),
        ]
    # which == "e": distribution-matching loss on/off
    return [
        ("with-dmd", []),
        ("no-dmd", ["train.weights.dmd=0.0"]),
    ]


def _train_and_eval(cfg_arm: dict, seed: int, eval_pairs) -> dict:
    dtype = _dtype(cfg_arm)
    sampler = ClipSampler(_synth_pairs(cfg_arm, seed, dtype))
    trainer = build_trainer(cfg_arm, seed)
    stage1, stage2 = build_stage_configs(cfg_arm)
    trainer.run_stage(stage1, sampler)
    trainer.run_stage(stage2, sampler)
    pipeline = StreamPipeline(
        trainer.model, trainer.vae, trainer.prompt_encoder,
        PipelineConfig(**cfg_arm["pipeline"]).validate(), seed=seed,
    )
    return _eval_metrics(pipeline, eval_pairs)


def cmd_ablate(args) -> int:
    cfg = _resolved_config(args)
    which = args.which
    seed = resolve_seed(args.seed, cfg)
    out = Path(args.out)
    write_snapshot(cfg, seed, out, extra={"command": "ablate", "which": which})
    eval_pairs = _eval_pairs(cfg, seed, _dtype(cfg))

    rows: list[list] = []
    if which in ("a", "b", "c"):
        for label, overrides in _inference_arms(which):
            cfg_arm = apply_overrides(_copy(cfg), overrides)
            pipeline = build_pipeline(cfg_arm, seed)
            if args.model:
                _load_generator(pipeline.model, args.model)
            metrics = _eval_metrics(pipeline, eval_pairs)
            rows.append([label,
                         f"{metrics['psnr']:.6f}", f"{metrics['ssim']:.6f}",
                         f"{metrics['e_warp']:.6f}", f"{metrics['boundary_drift']:.6f}",
                         config_hash(cfg_arm)])
    else:
        if args.model:
            raise ConfigError(f"ablation {which!r} trains each arm from scratch; "
                              f"--model does not apply")
        for label, overrides in _training_arms(which, cfg):
            cfg_arm = apply_overrides(_copy(cfg), overrides)
            metrics = _train_and_eval(cfg_arm, seed, eval_pairs)
            rows.append([label,
                         f"{metrics['psnr']:.6f}", f"{metrics['ssim']:.6f}",
                         f"{metrics['e_warp']:.6f}", f"{metrics['boundary_drift']:.6f}",
                         config_hash(cfg_arm)])

    csv_path = report_mod.write_csv(out / f"ablate_{which}.csv", METRIC_HEADER, rows)
    report_mod.save_bar_chart(
        out / f"ablate_{which}.png",
        labels=[row[0] for row in rows],
        groups={
            "e_warp": [float(row[3]) for row in rows],
            "boundary_drift": [float(row[4]) for row in rows],
        },
        ylabel="temporal error",
        title=f"ablation {which}: temporal consistency by arm",
    )
    widths = (12, 10, 8, 10, 16)
    print("  ".join(h.rjust(w) for h, w in zip(METRIC_HEADER, widths)))
    for row in rows:
        print("  ".join(str(c).rjust(w) for c, w in zip(row, widths)))
    print(f"table -> {csv_path}")
    return 0


# --------------------------------------------------------------------------
# parser and entry point
# --------------------------------------------------------------------------

def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", default=None, metavar="FILE",
                    help="JSON config merged over the built-in defaults")
    sp.add_argument("--set", dest="overrides", action="append", default=[],
                    metavar="KEY=VALUE",
                    help="dotted config override, e.g. model.layers=2 (repeatable)")
    sp.add_argument("--seed", type=int, default=None,
                    help=f"run seed (falls back to config, then ${SEED_ENV_VAR}, then 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streamvsr",
        description="Streaming one-step video super-resolution: synthesize data, "
                    "train the two-stage curriculum, upscale streams, benchmark, "
                    "and reproduce the ablation grids.",
        epilog="exit codes: 0 success, 2 config error, 3 data error, "
               "4 numerical failure",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth-data", help="write a synthetic HR/LR clip dataset")
    sp.add_argument("--count", type=int, default=None, help="number of clip pairs")
    sp.add_argument("--shape", default=None, metavar="TxHxW",
                    help="HR clip shape, e.g. 33x64x64")
    sp.add_argument("--degradation-config", default=None, metavar="FILE",
                    help="JSON overriding the degradation section only")
    sp.add_argument("--out", default="runs/data", help="dataset directory")
    _add_common(sp)
    sp.set_defaults(func=cmd_synth_data)

    sp = sub.add_parser("train", help="run the training curriculum or one stage")
    sp.add_argument("--stage", choices=("I", "II", "all"), default="all")
    sp.add_argument("--data", default=None, metavar="MANIFEST",
                    help="dataset manifest from synth-data (default: synthesize in memory)")
    sp.add_argument("--resume", action="store_true",
                    help="skip stages whose checkpoints already exist")
    sp.add_argument("--out", default="runs/train", help="checkpoint/report directory")
    _add_common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("infer", help="upscale a clip or a growing frame directory")
    sp.add_argument("--in", dest="input", required=True, metavar="PATH",
                    help="raw video (.rgb32 + .json) or a directory of frame_#####.png")
    sp.add_argument("--out", default="runs/infer", help="output directory")
    sp.add_argument("--mode", choices=MODES, default=None,
                    help="inference mode (default: config pipeline.mode)")
    sp.add_argument("--model", default=None, metavar="CKPT",
                    help="checkpoint directory holding generator weights")
    sp.add_argument("--stream", action="store_true",
                    help="consume --in as a frame directory, emitting PNGs incrementally")
    _add_common(sp)
    sp.set_defaults(func=cmd_infer)

    sp = sub.add_parser("bench", help="runtime/memory scaling over stream lengths")
    sp.add_argument("--frames", default="33,65,129,257",
                    help="comma list of LR frame counts")
    sp.add_argument("--mode", choices=MODES, default=None)
    sp.add_argument("--model", default=None, metavar="CKPT")
    sp.add_argument("--report", default="runs/bench", help="report directory")
    _add_common(sp)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("ablate", help="reproduce one ablation grid at toy scale")
    sp.add_argument("--which", choices=("a", "b", "c", "d", "e"), required=True,
                    help="a: inference modes, b: guidance, c: (M,N) grid, "
                         "d: training settings, e: distribution matching on/off")
    sp.add_argument("--model", default=None, metavar="CKPT",
                    help="generator checkpoint for inference-time ablations (a-c)")
    sp.add_argument("--out", default="runs/ablate", help="report directory")
    _add_common(sp)
    sp.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return int(args.func(args))
    except ConfigError as exc:
        return _fail(2, "config error", exc)
    except NumericalError as exc:
        return _fail(4, "numerical failure", exc)
    except DataError as exc:
        return _fail(3, "data error", exc)
    except OSError as exc:
        return _fail(3, "i/o error", exc)


def _fail(code: int, label: str, exc: Exception) -> int:
    print(f"streamvsr: {label}: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
