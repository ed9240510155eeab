"""Flat key=value run configuration with section prefixes.

The format is diff-friendly text: one ``section.key = value`` per line,
``#`` comments, blank lines allowed. Unknown keys are rejected, defaults are
applied for missing ones, and every load validates values. Paper-scale
settings ship as checked-in config files under ``configs/``.
"""

import os
from dataclasses import dataclass, fields
from pathlib import Path

from ..asr.conformer import BASELINE, CROSS, ConformerConfig
from ..env_encoder import EnvEncoderConfig
from ..masking import MaskSchedule

STAGES = ("pretrain", "train_asr", "eval", "tokenize")


@dataclass
class RunConfig:
    stage: str = "pretrain"
    seed: int = 0
    batch_size: int = 1
    max_steps: int = 1000
    checkpoint_every: int = 1000
    eval_every: int = 500
    patience: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.99
    adam_eps: float = 1e-8
    data_dir: str = ""
    out_dir: str = "runs"
    codebook_dir: str = ""
    pretrain_checkpoint: str = ""
    asr_checkpoint: str = ""
    train_manifest: str = ""
    eval_manifest: str = ""
    k_audio: int = 64
    k_video: int = 128
    kmeans_iters: int = 25
    sample_cap: int = 200000
    env_model_dim: int = 32
    env_blocks: int = 2
    env_heads: int = 4
    env_dtype: str = "f32"
    sched_p_init: float = 0.15
    sched_p_final: float = 0.45
    sched_width_init: int = 1
    sched_width_final: int = 11
    sched_width_step: int = 2
    sched_stage_steps: int = 10000
    asr_model_dim: int = 64
    asr_blocks: int = 2
    asr_heads: int = 4
    asr_conv_kernel: int = 7
    asr_fusion_mode: str = CROSS
    asr_dtype: str = "f32"
    asr_early_stop_wer: float = -1.0
    freq_masks: int = 2
    freq_width: int = 12
    time_masks: int = 2
    time_width: int = 10

    # resolved paths -------------------------------------------------------

    def out_path(self) -> Path:
        return Path(self.out_dir)

    def codebook_path(self) -> Path:
        return Path(self.codebook_dir) if self.codebook_dir else self.out_path() / "codebooks"

    def pretrain_ckpt_path(self) -> Path:
        return Path(self.pretrain_checkpoint) if self.pretrain_checkpoint \
            else self.out_path() / "pretrain.ckpt"

    def asr_ckpt_path(self) -> Path:
        return Path(self.asr_checkpoint) if self.asr_checkpoint \
            else self.out_path() / "asr.ckpt"

    def train_manifest_path(self) -> Path:
        return Path(self.train_manifest) if self.train_manifest \
            else Path(self.data_dir) / "manifest.tsv"

    def eval_manifest_path(self) -> Path:
        return Path(self.eval_manifest) if self.eval_manifest \
            else self.train_manifest_path()


# config-file key -> dataclass field
KEYS = {
    "stage": "stage",
    "seed": "seed",
    "batch_size": "batch_size",
    "max_steps": "max_steps",
    "checkpoint_every": "checkpoint_every",
    "eval_every": "eval_every",
    "patience": "patience",
    "optimizer.lr": "lr",
    "optimizer.beta1": "beta1",
    "optimizer.beta2": "beta2",
    "optimizer.eps": "adam_eps",
    "paths.data_dir": "data_dir",
    "paths.out_dir": "out_dir",
    "paths.codebook_dir": "codebook_dir",
    "paths.pretrain_checkpoint": "pretrain_checkpoint",
    "paths.asr_checkpoint": "asr_checkpoint",
    "paths.train_manifest": "train_manifest",
    "paths.eval_manifest": "eval_manifest",
    "tokenize.k_audio": "k_audio",
    "tokenize.k_video": "k_video",
    "tokenize.max_iters": "kmeans_iters",
    "tokenize.sample_cap": "sample_cap",
    "pretrain.model_dim": "env_model_dim",
    "pretrain.num_blocks": "env_blocks",
    "pretrain.heads": "env_heads",
    "pretrain.dtype": "env_dtype",
    "schedule.p_init": "sched_p_init",
    "schedule.p_final": "sched_p_final",
    "schedule.width_init": "sched_width_init",
    "schedule.width_final": "sched_width_final",
    "schedule.width_step": "sched_width_step",
    "schedule.stage_steps": "sched_stage_steps",
    "asr.model_dim": "asr_model_dim",
    "asr.num_blocks": "asr_blocks",
    "asr.heads": "asr_heads",
    "asr.conv_kernel": "asr_conv_kernel",
    "asr.fusion_mode": "asr_fusion_mode",
    "asr.dtype": "asr_dtype",
    "asr.early_stop_wer": "asr_early_stop_wer",
    "augment.freq_masks": "freq_masks",
    "augment.freq_width": "freq_width",
    "augment.time_masks": "time_masks",
    "augment.time_width": "time_width",
}

_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(key: str, attr: str, raw: str):
    kind = _FIELD_TYPES[attr]
    try:
        if kind == "int" or kind is int:
            return int(raw)
        if kind == "float" or kind is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ValueError(f"bad value for {key}: {raw!r}") from exc


def validate_config(cfg: RunConfig, check_paths: bool = True) -> None:
    if cfg.stage not in STAGES:
        raise ValueError(f"stage must be one of {STAGES}, got {cfg.stage!r}")
    positive = ["batch_size", "max_steps", "checkpoint_every", "eval_every",
                "k_audio", "k_video", "kmeans_iters", "sample_cap",
                "env_model_dim", "env_blocks", "env_heads",
                "asr_model_dim", "asr_blocks", "asr_heads", "asr_conv_kernel",
                "sched_stage_steps"]
    for name in positive:
        if getattr(cfg, name) <= 0:
            raise ValueError(f"{name} must be positive, got {getattr(cfg, name)}")
    if cfg.seed < 0 or cfg.patience < 0:
        raise ValueError("seed and patience must be non-negative")
    if cfg.lr <= 0:
        raise ValueError("optimizer.lr must be positive")
    if not (0.0 <= cfg.beta1 < 1.0 and 0.0 <= cfg.beta2 < 1.0):
        raise ValueError("Adam betas must lie in [0, 1)")
    if cfg.asr_fusion_mode not in (CROSS, BASELINE):
        raise ValueError(f"unknown asr.fusion_mode {cfg.asr_fusion_mode!r}")
    if cfg.env_dtype not in ("f32", "f64") or cfg.asr_dtype not in ("f32", "f64"):
        raise ValueError("dtype fields must be f32 or f64")
    if min(cfg.freq_masks, cfg.time_masks, cfg.freq_width, cfg.time_width) < 0:
        raise ValueError("augment settings must be non-negative")
    # exercises the schedule invariants (odd widths, probability ordering)
    mask_schedule(cfg)
    if check_paths:
        if not cfg.data_dir:
            raise ValueError("paths.data_dir is required")
        if not os.path.isdir(cfg.data_dir):
            raise ValueError(f"paths.data_dir does not exist: {cfg.data_dir}")


def parse_config_lines(lines, check_paths: bool = True) -> RunConfig:
    cfg = RunConfig()
    for lineno, line in enumerate(lines, 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in text.split("=", 1))
        if key not in KEYS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        attr = KEYS[key]
        setattr(cfg, attr, _parse_value(key, attr, raw))
    validate_config(cfg, check_paths=check_paths)
    return cfg


def load_config(path, check_paths: bool = True) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_lines(fh.read().splitlines(), check_paths=check_paths)


def config_lines(cfg: RunConfig) -> list:
    """Canonical serialization (sorted keys, repr-formatted values)."""
    out = []
    for key in sorted(KEYS):
        value = getattr(cfg, KEYS[key])
        out.append(f"{key} = {value}")
    return out


def save_config(path, cfg: RunConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(config_lines(cfg)) + "\n")


# model-config adapters ------------------------------------------------------


def mask_schedule(cfg: RunConfig) -> MaskSchedule:
    return MaskSchedule(p_init=cfg.sched_p_init, p_final=cfg.sched_p_final,
                        width_init=cfg.sched_width_init,
                        width_final=cfg.sched_width_final,
                        width_step=cfg.sched_width_step,
                        stage_steps=cfg.sched_stage_steps)


def env_encoder_config(cfg: RunConfig) -> EnvEncoderConfig:
    return EnvEncoderConfig(model_dim=cfg.env_model_dim, num_blocks=cfg.env_blocks,
                            heads=cfg.env_heads, vocab_size=cfg.k_audio + cfg.k_video,
                            dtype=cfg.env_dtype, schedule=mask_schedule(cfg))


def conformer_config(cfg: RunConfig, vocab_size: int) -> ConformerConfig:
    return ConformerConfig(model_dim=cfg.asr_model_dim, num_blocks=cfg.asr_blocks,
                           heads=cfg.asr_heads, conv_kernel=cfg.asr_conv_kernel,
                           fusion_mode=cfg.asr_fusion_mode, env_dim=cfg.env_model_dim,
                           vocab_size=vocab_size, dtype=cfg.asr_dtype)
