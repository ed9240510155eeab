"""Stage drivers: tokenize, pretrain, ASR training, evaluation.

Every run is a deterministic function of (config, seed, input files): model
init, masking, SpecAugment, and codebook training all draw from named
substreams of the run seed, and logs are written line by line as
``step=<n> loss=<f> [ppl=<f>] [mask_w=<n> mask_p=<f>]``.
"""

import math
from pathlib import Path

from ..asr.augment import SpecAugmentPolicy, specaugment
from ..asr.conformer import CROSS, AsrModel, Utterance
from ..asr.metrics import corpus_wer, format_wer_report
from ..asr.transducer import greedy_decode
from ..env_encoder import (EnvEncoder, masked_accuracy, parameter_hash,
                           pretrain_step)
from ..features import whiten_clip
from ..masking import mask_params_at
from ..optim import AdamHyper, adam_step
from ..quantize import assign_tokens, unified_vocab_size
from ..rng import substream
from .. import autodiff as ad
from .checkpoint import load_checkpoint, restore_params, save_checkpoint
from .config import (RunConfig, config_lines, conformer_config,
                     env_encoder_config, parse_config_lines)
from .corpus import SYMBOLS
from .data import (cached_env_embeddings, ensure_codebooks, ensure_whitener,
                   load_corpus, make_pretrain_batch)


class RunLog:
    """Mirrors every line to stdout and a log file."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", encoding="utf-8")

    def line(self, text: str) -> None:
        print(text)
        self._fh.write(text + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def _hyper(cfg: RunConfig) -> AdamHyper:
    return AdamHyper(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)


def run_tokenize(cfg: RunConfig) -> dict:
    """Train both codebooks offline and write per-utterance token manifests."""
    utts = load_corpus(cfg.train_manifest_path())
    cb_dir = cfg.codebook_path()
    whitener = ensure_whitener(cb_dir, utts)
    cb_audio, cb_video = ensure_codebooks(cfg, utts, whitener)
    vocab = unified_vocab_size(cb_audio, cb_video)
    audio_lines = []
    video_lines = []
    for utt in utts:
        patches = whiten_clip(utt.raw_patches, whitener).patches
        ids = assign_tokens(cb_audio, patches).ids
        audio_lines.append(utt.name + "\t" + " ".join(map(str, ids)))
        if utt.video_patches is not None:
            vids = assign_tokens(cb_video, utt.video_patches).ids
            video_lines.append(utt.name + "\t" + " ".join(map(str, vids)))
    (cb_dir / "tokens_audio.tsv").write_text("\n".join(audio_lines) + "\n")
    if video_lines:
        (cb_dir / "tokens_video.tsv").write_text("\n".join(video_lines) + "\n")
    return {"vocab_size": vocab, "codebook_dir": str(cb_dir),
            "audio_codebook": str(cb_dir / "audio.cb"),
            "video_codebook": str(cb_dir / "video.cb"), "utterances": len(utts)}


def run_pretraining(cfg: RunConfig, resume=None) -> dict:
    """Masked multimodal pretraining on the corpus; returns a summary dict."""
    utts = load_corpus(cfg.train_manifest_path())
    whitener = ensure_whitener(cfg.codebook_path(), utts)
    cb_audio, cb_video = ensure_codebooks(cfg, utts, whitener)
    batches = [make_pretrain_batch(u, whitener, cb_audio, cb_video) for u in utts]

    env_cfg = env_encoder_config(cfg)
    model = EnvEncoder(env_cfg, seed=cfg.seed)
    start = 0
    if resume is not None:
        ckpt = load_checkpoint(resume)
        restore_params(model.params, ckpt)
        start = ckpt.schedule_step
    hyper = _hyper(cfg)
    out_dir = cfg.out_path()
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = cfg.pretrain_ckpt_path()
    log = RunLog(out_dir / "pretrain.log")
    best = math.inf
    misses = 0
    steps_run = 0
    loss = None
    try:
        for step in range(start, cfg.max_steps):
            group = [batches[(step * cfg.batch_size + j) % len(batches)]
                     for j in range(cfg.batch_size)]
            loss, ppl = pretrain_step(model, group, hyper, step, seed=cfg.seed)
            width, prob = mask_params_at(env_cfg.schedule, step)
            log.line(f"step={step} loss={loss:.6f} ppl={ppl:.6f} "
                     f"mask_w={width} mask_p={prob:.6f}")
            steps_run += 1
            done = step + 1
            if done % cfg.checkpoint_every == 0 or done == cfg.max_steps:
                save_checkpoint(ckpt_path, model.params, done, done, config_lines(cfg))
            if cfg.patience and done % cfg.eval_every == 0:
                if loss < best - 1e-6:
                    best, misses = loss, 0
                else:
                    misses += 1
                    if misses >= cfg.patience:
                        log.line(f"# early stop: no improvement in {misses} evals")
                        save_checkpoint(ckpt_path, model.params, done, done,
                                        config_lines(cfg))
                        break
    finally:
        log.close()
    accuracy = masked_accuracy(model, batches, seed=cfg.seed)
    return {"steps_run": steps_run, "final_loss": loss,
            "masked_accuracy": accuracy, "checkpoint": str(ckpt_path),
            "log": str(log.path), "model": model}


def _load_env_model(ckpt_path) -> EnvEncoder:
    ckpt = load_checkpoint(ckpt_path)
    snap = parse_config_lines(ckpt.config_lines, check_paths=False)
    model = EnvEncoder(env_encoder_config(snap), seed=snap.seed)
    restore_params(model.params, ckpt)
    return model


def _decode_corpus(model, utts, examples):
    pairs = []
    hyps = []
    for utt, example in zip(utts, examples):
        hyp = [SYMBOLS[k] for k in greedy_decode(model, example)]
        pairs.append((utt.label_names, hyp))
        hyps.append(" ".join(hyp))
    return pairs, hyps


def run_asr_training(cfg: RunConfig) -> dict:
    """Transducer training over frozen environment embeddings."""
    utts = load_corpus(cfg.train_manifest_path())
    whitener = ensure_whitener(cfg.codebook_path(), utts)
    feats = [whiten_clip(u.raw_patches, whitener).patches for u in utts]

    env_hash_before = env_hash_after = None
    envs = [None] * len(utts)
    if cfg.asr_fusion_mode == CROSS:
        ckpt_path = cfg.pretrain_ckpt_path()
        if not Path(ckpt_path).is_file():
            raise ValueError(
                f"cross-attention training needs a pretraining checkpoint at {ckpt_path}")
        env_model = _load_env_model(ckpt_path)
        if env_model.config.model_dim != cfg.env_model_dim:
            raise ValueError(
                f"pretrain.model_dim {cfg.env_model_dim} does not match the "
                f"checkpoint's {env_model.config.model_dim}")
        env_hash_before = parameter_hash(env_model.params)
        cache = cfg.out_path() / "env_cache"
        envs = [cached_env_embeddings(cache, u.name, env_model, f)
                for u, f in zip(utts, feats)]
    examples = [Utterance(f, u.label_ids, e).require_labels()
                for u, f, e in zip(utts, feats, envs)]

    model = AsrModel(conformer_config(cfg, vocab_size=len(SYMBOLS)), seed=cfg.seed)
    policy = SpecAugmentPolicy(cfg.freq_masks, cfg.freq_width,
                               cfg.time_masks, cfg.time_width)
    hyper = _hyper(cfg)
    out_dir = cfg.out_path()
    out_dir.mkdir(parents=True, exist_ok=True)
    asr_ckpt = cfg.asr_ckpt_path()
    log = RunLog(out_dir / "train_asr.log")
    steps_run = 0
    latest_wer = None
    loss = None
    try:
        for step in range(cfg.max_steps):
            losses = []
            for j in range(cfg.batch_size):
                i = (step * cfg.batch_size + j) % len(examples)
                ex = examples[i]
                aug = specaugment(ex.features, policy,
                                  substream(cfg.seed, "specaug", step, i))
                losses.append(model.loss(aug, ex.labels, ex.env))
            total = losses[0] if len(losses) == 1 else \
                ad.mul(sum(losses[1:], losses[0]), 1.0 / len(losses))
            total.backward()
            adam_step(model.trainable_params(), hyper.lr, hyper.beta1,
                      hyper.beta2, hyper.eps)
            loss = float(total.data)
            log.line(f"step={step} loss={loss:.6f}")
            steps_run += 1
            done = step + 1
            if done % cfg.checkpoint_every == 0 or done == cfg.max_steps:
                save_checkpoint(asr_ckpt, model.params, done, done, config_lines(cfg))
            if done % cfg.eval_every == 0 or done == cfg.max_steps:
                pairs, _ = _decode_corpus(model, utts, examples)
                latest_wer, counts, _ = corpus_wer(pairs)
                log.line(f"# eval step={step} {format_wer_report(latest_wer, counts)}")
                stop_at = cfg.asr_early_stop_wer
                if stop_at >= 0.0 and latest_wer <= stop_at:
                    log.line(f"# early stop: wer {latest_wer:.4f}")
                    save_checkpoint(asr_ckpt, model.params, done, done, config_lines(cfg))
                    break
    finally:
        log.close()
    if cfg.asr_fusion_mode == CROSS:
        env_hash_after = parameter_hash(env_model.params)
    return {"steps_run": steps_run, "final_loss": loss,
            "final_wer": latest_wer, "checkpoint": str(asr_ckpt),
            "log": str(log.path), "env_hash_before": env_hash_before,
            "env_hash_after": env_hash_after, "model": model}


def run_eval(cfg: RunConfig, checkpoint=None) -> dict:
    """Greedy-decode the eval manifest and report pooled corpus WER."""
    ckpt_path = Path(checkpoint) if checkpoint else cfg.asr_ckpt_path()
    if not ckpt_path.is_file():
        raise ValueError(f"ASR checkpoint not found: {ckpt_path}")
    ckpt = load_checkpoint(ckpt_path)
    snap = parse_config_lines(ckpt.config_lines, check_paths=False)
    model = AsrModel(conformer_config(snap, vocab_size=len(SYMBOLS)), seed=snap.seed)
    restore_params(model.params, ckpt)

    utts = load_corpus(cfg.eval_manifest_path())
    whitener_path = cfg.codebook_path() / "whitener.bin"
    if not whitener_path.is_file():
        raise ValueError(f"whitener not found: {whitener_path} (run the training stages first)")
    whitener = ensure_whitener(cfg.codebook_path(), utts)
    feats = [whiten_clip(u.raw_patches, whitener).patches for u in utts]
    envs = [None] * len(utts)
    if snap.asr_fusion_mode == CROSS:
        pre_path = cfg.pretrain_ckpt_path()
        if not Path(pre_path).is_file():
            raise ValueError(f"pretraining checkpoint not found: {pre_path}")
        env_model = _load_env_model(pre_path)
        cache = cfg.out_path() / "env_cache"
        envs = [cached_env_embeddings(cache, u.name, env_model, f)
                for u, f in zip(utts, feats)]

    examples = [Utterance(f, u.label_ids, e)
                for u, f, e in zip(utts, feats, envs)]
    pairs, hyps = _decode_corpus(model, utts, examples)
    rate, counts, ref_words = corpus_wer(pairs)
    out_dir = cfg.out_path()
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "hypotheses.txt").write_text("\n".join(hyps) + "\n", encoding="utf-8")
    report = format_wer_report(rate, counts)
    (out_dir / "wer_report.txt").write_text(report + "\n", encoding="utf-8")
    print(report)
    return {"wer": rate, "report": report, "reference_words": ref_words,
            "hypotheses": str(out_dir / "hypotheses.txt")}
