"""Conformer transducer encoder with deep-fusion attention over frozen
environment embeddings.

Each block runs: half-step feed-forward, self-attention, a fusion sublayer,
the convolution module (pointwise-GLU, depthwise conv, instance norm, swish,
pointwise), a second half-step feed-forward, and a final layer norm, with
residual connections throughout. The fusion sublayer either cross-attends to
the projected environment embeddings or, in the parity baseline, runs plain
self-attention with identically shaped weights, so the two variants have
exactly the same parameter count. The environment embeddings themselves are
constants: gradients stop at the shared env adapter.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..env_encoder import EnvEmbeddings
from ..features import AUDIO_PATCH_DIM
from ..optim import ParameterSet
from ..rng import substream

CROSS = "cross_attention"
BASELINE = "self_attention_baseline"


@dataclass
class ConformerConfig:
    model_dim: int = 64
    num_blocks: int = 2
    heads: int = 4
    conv_kernel: int = 7
    subsample_kernel: int = 3
    subsample_stride: int = 2
    fusion_mode: str = CROSS
    env_dim: int = 32
    feature_dim: int = AUDIO_PATCH_DIM
    vocab_size: int = 8          # label symbols; blank is appended internally
    pred_dim: int = 0            # 0 -> model_dim
    joint_dim: int = 0           # 0 -> model_dim
    dtype: str = "f64"

    def __post_init__(self):
        if self.pred_dim == 0:
            self.pred_dim = self.model_dim
        if self.joint_dim == 0:
            self.joint_dim = self.model_dim
        if self.model_dim % self.heads != 0:
            raise ValueError("model_dim must be divisible by heads")
        if self.fusion_mode not in (CROSS, BASELINE):
            raise ValueError(f"unknown fusion_mode {self.fusion_mode!r}")
        if self.conv_kernel % 2 == 0:
            raise ValueError("conv_kernel must be odd")
        if self.dtype not in ("f32", "f64"):
            raise ValueError("dtype must be f32 or f64")

    @staticmethod
    def full(env_dim: int = 128, vocab_size: int = 8) -> "ConformerConfig":
        return ConformerConfig(model_dim=1024, num_blocks=24, heads=4,
                               conv_kernel=31, env_dim=env_dim,
                               vocab_size=vocab_size, dtype="f32")


def subsample_length(t: int, kernel: int = 3, stride: int = 2) -> int:
    if t < kernel:
        raise ValueError(f"need at least {kernel} frames to subsample, got {t}")
    return (t - kernel) // stride + 1


@dataclass
class Utterance:
    """One ASR example: whitened feature patches, label ids, and (for the
    fusion model) the frozen environment embeddings."""

    features: np.ndarray
    labels: np.ndarray
    env: EnvEmbeddings | None = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)

    def require_labels(self) -> "Utterance":
        if self.labels.size == 0:
            raise ValueError("training utterances need a non-empty label sequence")
        return self


class FusionAttention:
    """The per-block fusion sublayer (cross-attention or parity baseline)."""

    def __init__(self, params: ParameterSet, prefix: str, dim: int, heads: int,
                 mode: str, rng, dtype):
        self.heads = heads
        self.mode = mode
        self.p = params
        self.prefix = prefix
        scale = 1.0 / math.sqrt(dim)
        for mat in ("q", "k", "v", "o"):
            params.add(f"{prefix}.w{mat}",
                       (rng.standard_normal((dim, dim)) * scale).astype(dtype))
            params.add(f"{prefix}.b{mat}", np.zeros(dim, dtype=dtype))

    def __call__(self, x: Tensor, env_proj: Tensor | None) -> Tensor:
        if self.mode == CROSS:
            if env_proj is None:
                raise ValueError("cross-attention fusion requires env embeddings")
            kv = env_proj
        else:
            kv = x
        p, pre = self.p, self.prefix
        q = ad.add(ad.matmul(x, p[f"{pre}.wq"]), p[f"{pre}.bq"])
        k = ad.add(ad.matmul(kv, p[f"{pre}.wk"]), p[f"{pre}.bk"])
        v = ad.add(ad.matmul(kv, p[f"{pre}.wv"]), p[f"{pre}.bv"])
        out = ad.attention(q, k, v, self.heads)
        return ad.add(ad.matmul(out, p[f"{pre}.wo"]), p[f"{pre}.bo"])


class AsrModel:
    """Conformer transducer: subsampling stem, fusion blocks, prediction
    network, and joint network. Blank id is `vocab_size` (last logit)."""

    def __init__(self, config: ConformerConfig, seed: int = 0):
        self.config = config
        self.np_dtype = np.float32 if config.dtype == "f32" else np.float64
        self.params = ParameterSet()
        self.blank_id = config.vocab_size
        rng = substream(seed, "asr-init")
        d = config.model_dim
        dt = self.np_dtype
        add = self._add_param
        add(rng, "subsample.w", (config.subsample_kernel, config.feature_dim, d))
        add(rng, "subsample.b", (d,), zero=True)
        add(rng, "env_adapter.w", (config.env_dim, d))
        add(rng, "env_adapter.b", (d,), zero=True)
        self.fusion = []
        for i in range(config.num_blocks):
            pre = f"block{i}"
            for ff in ("ff1", "ff2"):
                add(rng, f"{pre}.{ff}.norm.g", (d,), one=True)
                add(rng, f"{pre}.{ff}.norm.b", (d,), zero=True)
                add(rng, f"{pre}.{ff}.w1", (d, 4 * d))
                add(rng, f"{pre}.{ff}.b1", (4 * d,), zero=True)
                add(rng, f"{pre}.{ff}.w2", (4 * d, d))
                add(rng, f"{pre}.{ff}.b2", (d,), zero=True)
            add(rng, f"{pre}.attn.norm.g", (d,), one=True)
            add(rng, f"{pre}.attn.norm.b", (d,), zero=True)
            for mat in ("q", "k", "v", "o"):
                add(rng, f"{pre}.attn.w{mat}", (d, d))
                add(rng, f"{pre}.attn.b{mat}", (d,), zero=True)
            add(rng, f"{pre}.fusion.norm.g", (d,), one=True)
            add(rng, f"{pre}.fusion.norm.b", (d,), zero=True)
            self.fusion.append(FusionAttention(
                self.params, f"{pre}.fusion", d, config.heads,
                config.fusion_mode, rng, dt))
            add(rng, f"{pre}.conv.norm.g", (d,), one=True)
            add(rng, f"{pre}.conv.norm.b", (d,), zero=True)
            add(rng, f"{pre}.conv.pw1.w", (d, 2 * d))
            add(rng, f"{pre}.conv.pw1.b", (2 * d,), zero=True)
            add(rng, f"{pre}.conv.dw.w", (config.conv_kernel, d), depthwise=True)
            add(rng, f"{pre}.conv.dw.b", (d,), zero=True)
            add(rng, f"{pre}.conv.inorm.g", (d,), one=True)
            add(rng, f"{pre}.conv.inorm.b", (d,), zero=True)
            add(rng, f"{pre}.conv.pw2.w", (d, d))
            add(rng, f"{pre}.conv.pw2.b", (d,), zero=True)
            add(rng, f"{pre}.out_norm.g", (d,), one=True)
            add(rng, f"{pre}.out_norm.b", (d,), zero=True)
        v1 = config.vocab_size + 1
        add(rng, "pred.embed", (v1, config.pred_dim), table=True)  # row V = start
        add(rng, "pred.w_in", (config.pred_dim, config.pred_dim))
        add(rng, "pred.w_rec", (config.pred_dim, config.pred_dim))
        add(rng, "pred.b", (config.pred_dim,), zero=True)
        add(rng, "joint.w_enc", (d, config.joint_dim))
        add(rng, "joint.w_pred", (config.pred_dim, config.joint_dim))
        add(rng, "joint.b", (config.joint_dim,), zero=True)
        add(rng, "joint.w_out", (config.joint_dim, v1))
        add(rng, "joint.b_out", (v1,), zero=True)

    def _add_param(self, rng, name, shape, zero=False, one=False, table=False,
                   depthwise=False):
        if zero:
            data = np.zeros(shape)
        elif one:
            data = np.ones(shape)
        elif table:
            data = 0.02 * rng.standard_normal(shape)
        elif depthwise:
            data = rng.standard_normal(shape) / math.sqrt(shape[0])
        else:
            fan_in = int(np.prod(shape[:-1]))
            data = rng.standard_normal(shape) / math.sqrt(fan_in)
        return self.params.add(name, data.astype(self.np_dtype))

    def _const(self, arr) -> Tensor:
        return Tensor(np.asarray(arr, dtype=self.np_dtype))

    def trainable_params(self) -> ParameterSet:
        """Everything in cross mode; the parity baseline keeps the (unused)
        env adapter in its parameter count but not in the optimizer."""
        if self.config.fusion_mode == CROSS:
            return self.params
        sub = ParameterSet()
        for name, p in self.params.items():
            if not name.startswith("env_adapter."):
                sub._params[name] = p
                sub._state[name] = self.params.state(name)
        return sub

    # encoder ---------------------------------------------------------------

    def subsample(self, features) -> Tensor:
        """Strided 1-D convolution projecting feature patches to model_dim."""
        x = features if isinstance(features, Tensor) else self._const(features)
        return ad.conv1d(x, self.params["subsample.w"], self.params["subsample.b"],
                         stride=self.config.subsample_stride)

    def project_env(self, env: EnvEmbeddings) -> Tensor:
        """Shared adapter env_dim -> model_dim; env itself stays frozen."""
        frozen = self._const(env.vectors)
        return ad.add(ad.matmul(frozen, self.params["env_adapter.w"]),
                      self.params["env_adapter.b"])

    def _ff(self, x: Tensor, prefix: str) -> Tensor:
        p = self.params
        h = ad.layer_norm(x, p[f"{prefix}.norm.g"], p[f"{prefix}.norm.b"])
        h = ad.swish(ad.add(ad.matmul(h, p[f"{prefix}.w1"]), p[f"{prefix}.b1"]))
        return ad.add(ad.matmul(h, p[f"{prefix}.w2"]), p[f"{prefix}.b2"])

    def _conv_module(self, x: Tensor, prefix: str) -> Tensor:
        p = self.params
        d = self.config.model_dim
        h = ad.layer_norm(x, p[f"{prefix}.norm.g"], p[f"{prefix}.norm.b"])
        h = ad.add(ad.matmul(h, p[f"{prefix}.pw1.w"]), p[f"{prefix}.pw1.b"])
        gate = ad.sigmoid(ad.narrow(h, 1, d, d))
        h = ad.mul(ad.narrow(h, 1, 0, d), gate)
        h = ad.depthwise_conv1d(h, p[f"{prefix}.dw.w"], p[f"{prefix}.dw.b"])
        h = ad.transpose(h)
        h = ad.instance_norm(h, p[f"{prefix}.inorm.g"], p[f"{prefix}.inorm.b"])
        h = ad.swish(ad.transpose(h))
        return ad.add(ad.matmul(h, p[f"{prefix}.pw2.w"]), p[f"{prefix}.pw2.b"])

    def block(self, i: int, x: Tensor, env_proj: Tensor | None) -> Tensor:
        p = self.params
        pre = f"block{i}"
        x = ad.add(x, ad.mul(self._ff(x, f"{pre}.ff1"), 0.5))
        h = ad.layer_norm(x, p[f"{pre}.attn.norm.g"], p[f"{pre}.attn.norm.b"])
        q = ad.add(ad.matmul(h, p[f"{pre}.attn.wq"]), p[f"{pre}.attn.bq"])
        k = ad.add(ad.matmul(h, p[f"{pre}.attn.wk"]), p[f"{pre}.attn.bk"])
        v = ad.add(ad.matmul(h, p[f"{pre}.attn.wv"]), p[f"{pre}.attn.bv"])
        att = ad.attention(q, k, v, self.config.heads)
        x = ad.add(x, ad.add(ad.matmul(att, p[f"{pre}.attn.wo"]), p[f"{pre}.attn.bo"]))
        h = ad.layer_norm(x, p[f"{pre}.fusion.norm.g"], p[f"{pre}.fusion.norm.b"])
        x = ad.add(x, self.fusion[i](h, env_proj))
        x = ad.add(x, self._conv_module(x, f"{pre}.conv"))
        x = ad.add(x, ad.mul(self._ff(x, f"{pre}.ff2"), 0.5))
        return ad.layer_norm(x, p[f"{pre}.out_norm.g"], p[f"{pre}.out_norm.b"])

    def encode(self, features, env: EnvEmbeddings | None = None) -> Tensor:
        if self.config.fusion_mode == CROSS and env is None:
            raise ValueError("cross-attention model needs env embeddings")
        x = self.subsample(features)
        env_proj = self.project_env(env) if self.config.fusion_mode == CROSS else None
        for i in range(self.config.num_blocks):
            x = self.block(i, x, env_proj)
        return x

    # prediction and joint networks ------------------------------------------

    def predict_states(self, labels: np.ndarray) -> Tensor:
        """(U+1, pred_dim) label-context states g_0..g_U (g_0 from the start
        symbol)."""
        p = self.params
        labels = np.asarray(labels, dtype=np.int64)
        tokens = np.concatenate([[self.blank_id], labels])  # start symbol row
        emb = ad.embedding(p["pred.embed"], tokens)
        states = []
        h = None
        for u in range(tokens.size):
            z = ad.add(ad.matmul(ad.narrow(emb, 0, u, 1), p["pred.w_in"]), p["pred.b"])
            if h is not None:
                z = ad.add(z, ad.matmul(h, p["pred.w_rec"]))
            h = ad.tanh(z)
            states.append(h)
        return states[0] if len(states) == 1 else ad.concat(states, axis=0)

    def joint_log_probs(self, enc: Tensor, pred: Tensor) -> Tensor:
        """(T, U+1, V+1) log-probabilities from the tanh joint network."""
        p = self.params
        t = enc.data.shape[0]
        u1 = pred.data.shape[0]
        e = ad.reshape(ad.matmul(enc, p["joint.w_enc"]), (t, 1, self.config.joint_dim))
        g = ad.reshape(ad.matmul(pred, p["joint.w_pred"]), (1, u1, self.config.joint_dim))
        h = ad.tanh(ad.add(ad.add(e, g), p["joint.b"]))
        h = ad.reshape(h, (t * u1, self.config.joint_dim))
        logits = ad.add(ad.matmul(h, p["joint.w_out"]), p["joint.b_out"])
        return ad.log_softmax(ad.reshape(logits, (t, u1, self.config.vocab_size + 1)))

    def loss(self, features, labels: np.ndarray, env: EnvEmbeddings | None = None) -> Tensor:
        from .transducer import rnnt_loss

        enc = self.encode(features, env)
        pred = self.predict_states(labels)
        return rnnt_loss(self.joint_log_probs(enc, pred), labels)

    # numpy fast paths used by greedy decoding --------------------------------

    def pred_start_np(self) -> np.ndarray:
        p = self.params
        return np.tanh(p["pred.embed"].data[self.blank_id] @ p["pred.w_in"].data
                       + p["pred.b"].data)

    def pred_step_np(self, state: np.ndarray, label: int) -> np.ndarray:
        p = self.params
        return np.tanh(p["pred.embed"].data[label] @ p["pred.w_in"].data
                       + state @ p["pred.w_rec"].data + p["pred.b"].data)

    def joint_logits_np(self, enc_t: np.ndarray, state: np.ndarray) -> np.ndarray:
        p = self.params
        h = np.tanh(enc_t @ p["joint.w_enc"].data + state @ p["joint.w_pred"].data
                    + p["joint.b"].data)
        return h @ p["joint.w_out"].data + p["joint.b_out"].data


def build_models(config: ConformerConfig, seed: int = 0):
    """The fusion model and its parameter-parity baseline, sharing init."""
    fusion = AsrModel(replace(config, fusion_mode=CROSS), seed=seed)
    baseline = AsrModel(replace(config, fusion_mode=BASELINE), seed=seed)
    return fusion, baseline
