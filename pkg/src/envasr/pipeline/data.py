"""Shared data plumbing between the runners: feature extraction, whitener and
codebook persistence, batch assembly, and the on-disk environment-embedding
cache."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..env_encoder import EnvEncoder, MultimodalBatch, extract_env_embeddings
from ..env_encoder import EnvEmbeddings
from ..features import (VideoClip, Whitener, compute_lfbe, extract_video_patches,
                        fit_whitener, read_wav, stack_frames, whiten_clip)
from ..quantize import (Codebook, assign_tokens, load_codebook, reservoir_sample,
                        save_codebook, train_kmeans)
from ..rng import derive_seed, substream
from ..serialize import pack_tensors, read_raw_array, unpack_tensors, write_raw_array
from .corpus import labels_to_ids, load_manifest


@dataclass
class LoadedUtterance:
    name: str
    label_names: list
    label_ids: np.ndarray
    raw_patches: np.ndarray             # unwhitened (T, 192)
    video_patches: np.ndarray | None
    video_grid: tuple | None


def load_corpus(manifest_path) -> list:
    """Read every utterance of a manifest into memory as patch sequences."""
    utts = []
    for wav_path, clip_path, labels in load_manifest(manifest_path):
        wave = read_wav(wav_path)
        patches = stack_frames(compute_lfbe(wave)).patches
        video_patches = video_grid = None
        if clip_path is not None:
            seq = extract_video_patches(VideoClip(read_raw_array(clip_path)))
            video_patches, video_grid = seq.patches, seq.grid
        utts.append(LoadedUtterance(
            name=wav_path.stem,
            label_names=labels,
            label_ids=labels_to_ids(labels),
            raw_patches=patches,
            video_patches=video_patches,
            video_grid=video_grid,
        ))
    if not utts:
        raise ValueError(f"manifest is empty: {manifest_path}")
    return utts


# whitener persistence -------------------------------------------------------


def save_whitener(path, whitener: Whitener) -> None:
    lines, payload = pack_tensors([("mean", whitener.mean), ("std", whitener.std)])
    with open(path, "wb") as fh:
        fh.write((f"whitener {len(lines)}\n").encode())
        fh.write(("\n".join(lines) + "\n").encode())
        fh.write(payload)


def load_whitener(path) -> Whitener:
    with open(path, "rb") as fh:
        head = fh.readline().decode().split()
        if len(head) != 2 or head[0] != "whitener":
            raise ValueError(f"malformed whitener file: {path}")
        lines = [fh.readline().decode().strip() for _ in range(int(head[1]))]
        tensors = unpack_tensors(lines, fh.read())
    return Whitener(tensors["mean"], tensors["std"])


def ensure_whitener(codebook_dir, utts) -> Whitener:
    """Load the stored whitener, or fit one on this corpus and store it."""
    codebook_dir = Path(codebook_dir)
    path = codebook_dir / "whitener.bin"
    if path.is_file():
        return load_whitener(path)
    rows = np.concatenate([u.raw_patches for u in utts], axis=0)
    whitener = fit_whitener(rows)
    codebook_dir.mkdir(parents=True, exist_ok=True)
    save_whitener(path, whitener)
    return whitener


# codebooks -------------------------------------------------------------------


def train_corpus_codebooks(cfg, utts, whitener: Whitener):
    """Fit audio/video codebooks on (capped samples of) the corpus patches."""
    audio_rows = np.concatenate(
        [whiten_clip(u.raw_patches, whitener).patches for u in utts], axis=0)
    audio_rows = reservoir_sample(audio_rows, cfg.sample_cap,
                                  substream(cfg.seed, "sample-audio"))
    cb_audio = train_kmeans(audio_rows, cfg.k_audio, max_iters=cfg.kmeans_iters,
                            seed=derive_seed(cfg.seed, "kmeans-audio"),
                            modality="audio", vocab_offset=0)
    video_parts = [u.video_patches for u in utts if u.video_patches is not None]
    if not video_parts:
        raise ValueError("corpus has no video clips to train the video codebook")
    video_rows = reservoir_sample(np.concatenate(video_parts, axis=0),
                                  cfg.sample_cap, substream(cfg.seed, "sample-video"))
    cb_video = train_kmeans(video_rows, cfg.k_video, max_iters=cfg.kmeans_iters,
                            seed=derive_seed(cfg.seed, "kmeans-video"),
                            modality="video", vocab_offset=cfg.k_audio)
    return cb_audio, cb_video


def ensure_codebooks(cfg, utts, whitener: Whitener):
    """Load codebooks from codebook_dir, or train and save them."""
    cb_dir = cfg.codebook_path()
    audio_path, video_path = cb_dir / "audio.cb", cb_dir / "video.cb"
    if audio_path.is_file() and video_path.is_file():
        return load_codebook(audio_path), load_codebook(video_path)
    cb_audio, cb_video = train_corpus_codebooks(cfg, utts, whitener)
    cb_dir.mkdir(parents=True, exist_ok=True)
    save_codebook(audio_path, cb_audio)
    save_codebook(video_path, cb_video)
    return cb_audio, cb_video


# batches and caches -----------------------------------------------------------


def make_pretrain_batch(utt: LoadedUtterance, whitener: Whitener,
                        cb_audio: Codebook, cb_video: Codebook) -> MultimodalBatch:
    """Raw inputs, quantized labels; video tokens first to match the layout."""
    audio = whiten_clip(utt.raw_patches, whitener).patches
    audio_ids = assign_tokens(cb_audio, audio).ids
    if utt.video_patches is not None:
        video_ids = assign_tokens(cb_video, utt.video_patches).ids
        labels = np.concatenate([video_ids, audio_ids])
    else:
        labels = audio_ids
    return MultimodalBatch(audio_patches=audio, video_patches=utt.video_patches,
                           video_grid=utt.video_grid, labels=labels)


def cached_env_embeddings(cache_dir, utt_name: str, model: EnvEncoder,
                          audio_patches: np.ndarray) -> EnvEmbeddings:
    """Extract-once cache: the freeze contract makes reuse safe."""
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / f"{utt_name}.env"
    if path.is_file():
        return EnvEmbeddings(read_raw_array(path), frozen=True)
    env = extract_env_embeddings(model, audio_patches)
    write_raw_array(path, env.vectors.astype(np.float32))
    return EnvEmbeddings(read_raw_array(path), frozen=True)
