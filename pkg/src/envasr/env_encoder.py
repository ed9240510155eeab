"""Multimodal masked-prediction encoder producing environment embeddings.

Raw audio/video patches are projected to the model dimension by per-modality
stems (linear map matching the patch size, then instance normalization over
the sequence), tagged with modality and position embeddings, concatenated
(video block first, then audio), and encoded by a stack of pre-norm
transformer blocks with unrestricted attention. A single linear head over the
unified audio+video token vocabulary scores masked positions.

Masked positions have their embedded vector replaced by a learned
per-modality mask embedding; the loss is cross-entropy at masked positions
only. Once pretrained, the final block output over an audio-only sequence is
the frozen embedding sequence consumed by the ASR stage.
"""

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .features import AUDIO_PATCH_DIM, VIDEO_PATCH_DIM
from .masking import MaskSchedule, mask_params_at, sample_segmented_mask
from .optim import AdamHyper, ParameterSet, adam_step
from .rng import substream

AUDIO, VIDEO = 0, 1  # modality table rows


@dataclass
class EnvEncoderConfig:
    model_dim: int = 32
    num_blocks: int = 2
    heads: int = 4
    ff_dim: int = 0                  # 0 -> 4 * model_dim
    vocab_size: int = 24
    audio_patch_dim: int = AUDIO_PATCH_DIM
    video_patch_dim: int = VIDEO_PATCH_DIM
    max_audio_positions: int = 512
    max_video_steps: int = 64
    max_grid_rows: int = 16
    max_grid_cols: int = 16
    dtype: str = "f64"
    schedule: MaskSchedule = field(default_factory=MaskSchedule)

    def __post_init__(self):
        if self.ff_dim == 0:
            self.ff_dim = 4 * self.model_dim
        if self.model_dim % self.heads != 0:
            raise ValueError("model_dim must be divisible by heads")
        if self.dtype not in ("f32", "f64"):
            raise ValueError("dtype must be f32 or f64")

    @staticmethod
    def full(vocab_size: int = 12288) -> "EnvEncoderConfig":
        return EnvEncoderConfig(model_dim=128, num_blocks=6, heads=4,
                                vocab_size=vocab_size, dtype="f32")


@dataclass
class MultimodalBatch:
    """One training example: video patches (optional) followed by audio.

    `labels` holds one quantized token id per patch in sequence order
    (video block first). `mask` marks the positions hidden from the model.
    """

    audio_patches: np.ndarray
    video_patches: np.ndarray | None = None
    video_grid: tuple | None = None
    labels: np.ndarray | None = None
    mask: np.ndarray | None = None

    @property
    def seq_len(self) -> int:
        n_v = 0 if self.video_patches is None else self.video_patches.shape[0]
        return n_v + self.audio_patches.shape[0]

    @property
    def segment_lengths(self) -> list:
        segs = []
        if self.video_patches is not None:
            segs.append(self.video_patches.shape[0])
        segs.append(self.audio_patches.shape[0])
        return segs

    def modality_ids(self) -> np.ndarray:
        n_v = 0 if self.video_patches is None else self.video_patches.shape[0]
        return np.concatenate([
            np.full(n_v, VIDEO, dtype=np.int64),
            np.full(self.audio_patches.shape[0], AUDIO, dtype=np.int64),
        ])


@dataclass
class EnvEmbeddings:
    vectors: np.ndarray          # (L, model_dim)
    frozen: bool = True


class EnvEncoder:
    """The pretraining model. All parameters live in a ParameterSet."""

    def __init__(self, config: EnvEncoderConfig, seed: int = 0):
        self.config = config
        self.np_dtype = np.float32 if config.dtype == "f32" else np.float64
        self.params = ParameterSet()
        self.collect_attention = False
        self.last_attention = []
        rng = substream(seed, "env-init")
        d = config.model_dim
        add = self._add_param
        add(rng, "stem.audio.w", (config.audio_patch_dim, d))
        add(rng, "stem.audio.b", (d,), zero=True)
        add(rng, "stem.audio.norm.g", (d,), one=True)
        add(rng, "stem.audio.norm.b", (d,), zero=True)
        add(rng, "stem.video.w", (config.video_patch_dim, d))
        add(rng, "stem.video.b", (d,), zero=True)
        add(rng, "stem.video.norm.g", (d,), one=True)
        add(rng, "stem.video.norm.b", (d,), zero=True)
        add(rng, "embed.modality", (2, d), table=True)
        add(rng, "embed.mask", (2, d), table=True)
        add(rng, "embed.audio_pos", (config.max_audio_positions, d), table=True)
        add(rng, "embed.video_time", (config.max_video_steps, d), table=True)
        add(rng, "embed.video_space", (config.max_grid_rows * config.max_grid_cols, d),
            table=True)
        for i in range(config.num_blocks):
            pre = f"block{i}"
            add(rng, f"{pre}.attn.norm.g", (d,), one=True)
            add(rng, f"{pre}.attn.norm.b", (d,), zero=True)
            for mat in ("q", "k", "v", "o"):
                add(rng, f"{pre}.attn.w{mat}", (d, d))
                add(rng, f"{pre}.attn.b{mat}", (d,), zero=True)
            add(rng, f"{pre}.ff.norm.g", (d,), one=True)
            add(rng, f"{pre}.ff.norm.b", (d,), zero=True)
            add(rng, f"{pre}.ff.w1", (d, config.ff_dim))
            add(rng, f"{pre}.ff.b1", (config.ff_dim,), zero=True)
            add(rng, f"{pre}.ff.w2", (config.ff_dim, d))
            add(rng, f"{pre}.ff.b2", (d,), zero=True)
        add(rng, "final_norm.g", (d,), one=True)
        add(rng, "final_norm.b", (d,), zero=True)
        # small head init keeps fresh-model predictions near uniform
        add(rng, "head.w", (d, config.vocab_size), table=True)
        add(rng, "head.b", (config.vocab_size,), zero=True)

    def _add_param(self, rng, name, shape, zero=False, one=False, table=False):
        if zero:
            data = np.zeros(shape)
        elif one:
            data = np.ones(shape)
        elif table:
            data = 0.02 * rng.standard_normal(shape)
        else:
            data = rng.standard_normal(shape) / math.sqrt(shape[0])
        return self.params.add(name, data.astype(self.np_dtype))

    def _const(self, arr) -> Tensor:
        return Tensor(np.asarray(arr, dtype=self.np_dtype))

    def _stem(self, patches: np.ndarray, modality: str) -> Tensor:
        p = self.params
        h = ad.matmul(self._const(patches), p[f"stem.{modality}.w"])
        h = ad.add(h, p[f"stem.{modality}.b"])
        # instance norm over the sequence, per embedding channel
        h = ad.transpose(h)
        h = ad.instance_norm(h, p[f"stem.{modality}.norm.g"], p[f"stem.{modality}.norm.b"])
        return ad.transpose(h)

    def _mask_content(self, content: Tensor, flags: np.ndarray, modality: int) -> Tensor:
        """Swap masked rows of the projected content for the modality's mask
        embedding. Position and modality embeddings are added afterwards, so
        masked slots keep their identity."""
        if not flags.any():
            return content
        fill = ad.narrow(self.params["embed.mask"], 0, modality, 1)
        col = self._const(flags.astype(self.np_dtype)[:, None])
        return ad.add(ad.mul(content, ad.sub(self._const(1.0), col)),
                      ad.mul(fill, col))

    def embed_multimodal(self, batch: MultimodalBatch, apply_mask: bool = True) -> Tensor:
        """Patch projection + mask replacement + modality/position embeddings."""
        cfg = self.config
        p = self.params
        flags = None
        if apply_mask and batch.mask is not None:
            flags = np.asarray(batch.mask, dtype=bool)
            if flags.shape[0] != batch.seq_len:
                raise ValueError("mask length does not match sequence length")
        n_v = 0 if batch.video_patches is None else batch.video_patches.shape[0]
        parts = []
        if batch.video_patches is not None:
            if batch.video_patches.shape[1] != cfg.video_patch_dim:
                raise ValueError("video patch dimension does not match config")
            if batch.video_grid is None:
                raise ValueError("video patches need their (time, rows, cols) grid")
            t, r, c = batch.video_grid
            if t * r * c != n_v:
                raise ValueError("video grid does not match patch count")
            if t > cfg.max_video_steps or r > cfg.max_grid_rows or c > cfg.max_grid_cols:
                raise ValueError("video grid exceeds configured position tables")
            h = self._stem(batch.video_patches, "video")
            if flags is not None:
                h = self._mask_content(h, flags[:n_v], VIDEO)
            h = ad.add(h, ad.narrow(p["embed.modality"], 0, VIDEO, 1))
            time_ids = np.repeat(np.arange(t), r * c)
            space_ids = np.tile(np.arange(r)[:, None] * cfg.max_grid_cols
                                + np.arange(c)[None, :], (t, 1, 1)).reshape(-1)
            h = ad.add(h, ad.embedding(p["embed.video_time"], time_ids))
            h = ad.add(h, ad.embedding(p["embed.video_space"], space_ids))
            parts.append(h)
        n_a = batch.audio_patches.shape[0]
        if batch.audio_patches.shape[1] != cfg.audio_patch_dim:
            raise ValueError("audio patch dimension does not match config")
        if n_a > cfg.max_audio_positions:
            raise ValueError("audio sequence exceeds configured position table")
        h = self._stem(batch.audio_patches, "audio")
        if flags is not None:
            h = self._mask_content(h, flags[n_v:], AUDIO)
        h = ad.add(h, ad.narrow(p["embed.modality"], 0, AUDIO, 1))
        h = ad.add(h, ad.embedding(p["embed.audio_pos"], np.arange(n_a)))
        parts.append(h)
        return parts[0] if len(parts) == 1 else ad.concat(parts, axis=0)

    def encoder_forward(self, embedded: Tensor) -> Tensor:
        """Pre-norm transformer stack; every position attends to every other."""
        p = self.params
        cfg = self.config
        if self.collect_attention:
            self.last_attention = []
        x = embedded
        for i in range(cfg.num_blocks):
            pre = f"block{i}"
            h = ad.layer_norm(x, p[f"{pre}.attn.norm.g"], p[f"{pre}.attn.norm.b"])
            q = ad.add(ad.matmul(h, p[f"{pre}.attn.wq"]), p[f"{pre}.attn.bq"])
            k = ad.add(ad.matmul(h, p[f"{pre}.attn.wk"]), p[f"{pre}.attn.bk"])
            v = ad.add(ad.matmul(h, p[f"{pre}.attn.wv"]), p[f"{pre}.attn.bv"])
            att, weights = ad.attention(q, k, v, cfg.heads, return_weights=True)
            if self.collect_attention:
                self.last_attention.append(weights.data.copy())
            att = ad.add(ad.matmul(att, p[f"{pre}.attn.wo"]), p[f"{pre}.attn.bo"])
            x = ad.add(x, att)
            h = ad.layer_norm(x, p[f"{pre}.ff.norm.g"], p[f"{pre}.ff.norm.b"])
            h = ad.gelu(ad.add(ad.matmul(h, p[f"{pre}.ff.w1"]), p[f"{pre}.ff.b1"]))
            h = ad.add(ad.matmul(h, p[f"{pre}.ff.w2"]), p[f"{pre}.ff.b2"])
            x = ad.add(x, h)
        return ad.layer_norm(x, p["final_norm.g"], p["final_norm.b"])

    def mlm_logits(self, encoded: Tensor) -> Tensor:
        return ad.add(ad.matmul(encoded, self.params["head.w"]), self.params["head.b"])

    def mlm_loss(self, encoded: Tensor, labels: np.ndarray, mask: np.ndarray) -> Tensor:
        """Cross-entropy over the unified vocabulary at masked positions only."""
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise ValueError("mlm_loss requires at least one masked position")
        return ad.cross_entropy(self.mlm_logits(encoded), labels, ignore=~mask)

    def forward_loss(self, batch: MultimodalBatch) -> Tensor:
        encoded = self.encoder_forward(self.embed_multimodal(batch))
        return self.mlm_loss(encoded, batch.labels, batch.mask)


def draw_batch_mask(batch: MultimodalBatch, width: int, prob: float,
                    rng: np.random.Generator) -> np.ndarray:
    """Sample a non-empty segment-respecting mask (redraws the rare empty one)."""
    while True:
        plan = sample_segmented_mask(batch.segment_lengths, width, prob, rng)
        if plan.mask.any():
            return plan.mask


def pretrain_step(model: EnvEncoder, batches, hyper: AdamHyper, step: int,
                  seed: int = 0):
    """One optimization step over one or more batches. Returns (loss, ppl)."""
    if isinstance(batches, MultimodalBatch):
        batches = [batches]
    width, prob = mask_params_at(model.config.schedule, step)
    rng = substream(seed, "mask", step)
    losses = []
    for batch in batches:
        batch = replace(batch, mask=draw_batch_mask(batch, width, prob, rng))
        losses.append(model.forward_loss(batch))
    total = losses[0] if len(losses) == 1 else ad.mul(sum(losses[1:], losses[0]),
                                                      1.0 / len(losses))
    total.backward()
    adam_step(model.params, hyper.lr, hyper.beta1, hyper.beta2, hyper.eps)
    loss = float(total.data)
    return loss, math.exp(loss)


def extract_env_embeddings(model: EnvEncoder, audio_patches: np.ndarray) -> EnvEmbeddings:
    """Frozen audio-only forward pass (no video positions, no gradients)."""
    audio_patches = np.asarray(audio_patches)
    if audio_patches.ndim != 2 or audio_patches.shape[0] == 0:
        raise ValueError("need a non-empty (T, patch_dim) audio sequence")
    batch = MultimodalBatch(audio_patches=audio_patches)
    with ad.no_grad():
        encoded = model.encoder_forward(model.embed_multimodal(batch, apply_mask=False))
    return EnvEmbeddings(encoded.data.copy(), frozen=True)


def masked_accuracy(model: EnvEncoder, batches, seed: int = 0, width: int = 1,
                    prob: float = 0.3) -> float:
    """Fraction of masked tokens predicted correctly under fixed eval masks."""
    correct = 0
    total = 0
    with ad.no_grad():
        for i, batch in enumerate(batches):
            rng = substream(seed, "eval-mask", i)
            flags = draw_batch_mask(batch, width, prob, rng)
            batch = replace(batch, mask=flags)
            logits = model.mlm_logits(
                model.encoder_forward(model.embed_multimodal(batch)))
            pred = logits.data.argmax(axis=1)
            correct += int((pred[flags] == batch.labels[flags]).sum())
            total += int(flags.sum())
    return correct / max(total, 1)


def parameter_hash(params: ParameterSet) -> str:
    """SHA-256 over all parameter bytes in name order (freeze checks)."""
    digest = hashlib.sha256()
    for name, p in params.items():
        digest.update(name.encode())
        digest.update(np.ascontiguousarray(p.data).tobytes())
    return digest.hexdigest()
