"""Transducer (RNN-T) loss and greedy decoding.

The loss is the negative log of the total probability of every monotonic
alignment of U label emissions and T blank advances, computed by a forward
dynamic program in log space over a T x (U+1) lattice:

    alpha[t, u] = logadd(alpha[t-1, u] + blank(t-1, u),
                         alpha[t, u-1] + label(t, u-1))
    loss = -(alpha[T-1, U] + blank(T-1, U))

The matching backward recursion gives completion probabilities beta, and the
gradient w.r.t. each lattice log-probability is its alignment-occupancy
weight exp(alpha + logp + beta' - loglik). The blank symbol is the last
vocabulary index.
"""

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor

NEG_INF = -np.inf


def _check_lattice_inputs(log_probs: np.ndarray, labels: np.ndarray):
    if log_probs.ndim != 3:
        raise ValueError("log_probs must have shape (T, U+1, V+1)")
    t, u1, v1 = log_probs.shape
    if t < 1 or u1 != labels.size + 1:
        raise ValueError(f"lattice shape {log_probs.shape} does not match "
                         f"{labels.size} labels")
    if not np.all(np.isfinite(log_probs)):
        raise ValueError("non-finite joint log-probabilities")
    if labels.size and (labels.min() < 0 or labels.max() >= v1 - 1):
        raise ValueError("labels must lie in [0, V) with blank = V")


def rnnt_alphas(log_probs: np.ndarray, labels: np.ndarray):
    """Forward DP. Returns (alpha (T, U+1), log-likelihood)."""
    t_len, u1, v1 = log_probs.shape
    blank = v1 - 1
    alpha = np.full((t_len, u1), NEG_INF)
    alpha[0, 0] = 0.0
    for t in range(1, t_len):
        alpha[t, 0] = alpha[t - 1, 0] + log_probs[t - 1, 0, blank]
    for u in range(1, u1):
        alpha[0, u] = alpha[0, u - 1] + log_probs[0, u - 1, labels[u - 1]]
        for t in range(1, t_len):
            alpha[t, u] = np.logaddexp(
                alpha[t - 1, u] + log_probs[t - 1, u, blank],
                alpha[t, u - 1] + log_probs[t, u - 1, labels[u - 1]],
            )
    return alpha, alpha[-1, -1] + log_probs[-1, -1, blank]


def rnnt_betas(log_probs: np.ndarray, labels: np.ndarray):
    """Backward DP. beta[t, u] completes from (t, u); beta[0, 0] is the
    log-likelihood."""
    t_len, u1, v1 = log_probs.shape
    blank = v1 - 1
    beta = np.full((t_len, u1), NEG_INF)
    beta[-1, -1] = log_probs[-1, -1, blank]
    for t in range(t_len - 2, -1, -1):
        beta[t, -1] = beta[t + 1, -1] + log_probs[t, -1, blank]
    for u in range(u1 - 2, -1, -1):
        beta[-1, u] = beta[-1, u + 1] + log_probs[-1, u, labels[u]]
        for t in range(t_len - 2, -1, -1):
            beta[t, u] = np.logaddexp(
                beta[t + 1, u] + log_probs[t, u, blank],
                beta[t, u + 1] + log_probs[t, u, labels[u]],
            )
    return beta, beta[0, 0]


def rnnt_grad(log_probs: np.ndarray, labels: np.ndarray,
              alpha: np.ndarray, beta: np.ndarray, loglik: float) -> np.ndarray:
    """d(-loglik)/d(log_probs): negative alignment occupancies."""
    t_len, u1, v1 = log_probs.shape
    blank = v1 - 1
    grad = np.zeros_like(log_probs)
    # blank transitions (t, u) -> (t+1, u); the final blank exits the lattice
    occ = np.full((t_len, u1), NEG_INF)
    occ[:-1, :] = alpha[:-1, :] + log_probs[:-1, :, blank] + beta[1:, :]
    occ[-1, -1] = alpha[-1, -1] + log_probs[-1, -1, blank]
    grad[:, :, blank] = -np.exp(occ - loglik)
    # label emissions (t, u) -> (t, u+1)
    for u in range(u1 - 1):
        occ_u = alpha[:, u] + log_probs[:, u, labels[u]] + beta[:, u + 1]
        grad[:, u, labels[u]] = -np.exp(occ_u - loglik)
    return grad


@dataclass
class TransducerLattice:
    """The T x (U+1) x (V+1) joint lattice with its forward/backward sums."""

    log_probs: np.ndarray
    labels: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    loglik: float


def make_lattice(log_probs: np.ndarray, labels) -> TransducerLattice:
    labels = np.asarray(labels, dtype=np.int64)
    log_probs = np.asarray(log_probs, dtype=np.float64)
    _check_lattice_inputs(log_probs, labels)
    norm = np.log(np.exp(log_probs).sum(axis=-1))
    if np.abs(norm).max() > 1e-6:
        raise ValueError("each lattice vector must be a normalized log-distribution")
    alpha, ll_f = rnnt_alphas(log_probs, labels)
    beta, _ = rnnt_betas(log_probs, labels)
    return TransducerLattice(log_probs, labels, alpha, beta, float(ll_f))


def rnnt_loss(log_probs: Tensor, labels) -> Tensor:
    """Differentiable transducer loss on (T, U+1, V+1) log-probabilities."""
    labels = np.asarray(labels, dtype=np.int64)
    lp = log_probs.data
    _check_lattice_inputs(lp, labels)
    alpha, loglik = rnnt_alphas(lp, labels)
    out = ad._node(np.asarray(-loglik, dtype=lp.dtype), (log_probs,))

    def backward():
        beta, _ = rnnt_betas(lp, labels)
        g = rnnt_grad(lp, labels, alpha, beta, loglik)
        ad._accum(log_probs, out.grad * g)

    return ad._finish(out, backward, "rnnt_loss")


def greedy_decode(model, features, env=None, max_symbols_per_frame: int = 10):
    """Standard RNN-T greedy loop: emit argmax labels until blank, with a
    per-frame emission cap. Accepts (features, env) or an Utterance."""
    from .conformer import Utterance

    if isinstance(features, Utterance):
        features, env = features.features, features.env
    with ad.no_grad():
        enc = model.encode(features, env).data
    state = model.pred_start_np()
    blank = model.blank_id
    out = []
    for t in range(enc.shape[0]):
        emitted = 0
        while emitted < max_symbols_per_frame:
            k = int(model.joint_logits_np(enc[t], state).argmax())
            if k == blank:
                break
            out.append(k)
            state = model.pred_step_np(state, k)
            emitted += 1
    return out
