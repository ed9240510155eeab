"""Per-modality k-means codebooks and the unified discrete vocabulary.

Audio and video patches are quantized by separate codebooks whose id ranges
are disjoint and contiguous: audio ids start at 0, video ids at K_audio.
Training is Lloyd's algorithm with k-means++ seeding; empty clusters are
re-seeded to the point currently farthest from its assigned center.
"""

from dataclasses import dataclass

import numpy as np

from .rng import substream
from .serialize import pack_tensors, unpack_tensors

MODALITIES = ("audio", "video")

# named codebook size presets: per-modality (k_audio, k_video)
K_PRESETS = {"toy": (64, 128), "full": (4096, 8192)}


@dataclass
class Codebook:
    centers: np.ndarray          # (K, D)
    modality: str
    vocab_offset: int
    seed: int = 0

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.float64)
        if self.centers.ndim != 2 or self.centers.shape[0] < 1:
            raise ValueError("codebook centers must be a (K, D) matrix with K >= 1")
        if not np.all(np.isfinite(self.centers)):
            raise ValueError("codebook centers must be finite")
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")
        if self.vocab_offset < 0:
            raise ValueError("vocab_offset must be non-negative")
        if self.modality == "audio" and self.vocab_offset != 0:
            raise ValueError("audio codebook must sit at vocab offset 0")

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]


@dataclass
class TokenSeq:
    ids: np.ndarray
    segments: list               # [(modality, length), ...] in sequence order

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if sum(n for _, n in self.segments) != self.ids.size:
            raise ValueError("segment lengths do not cover the id sequence")

    @staticmethod
    def concat(parts: list) -> "TokenSeq":
        ids = np.concatenate([p.ids for p in parts]) if parts else np.zeros(0, np.int64)
        segments = [seg for p in parts for seg in p.segments]
        return TokenSeq(ids, segments)


def _squared_distances(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """(N, K) squared Euclidean distances, clamped at zero."""
    d2 = (
        (x * x).sum(axis=1)[:, None]
        - 2.0 * (x @ centers.T)
        + (centers * centers).sum(axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    best = _squared_distances(x, centers[:1]).ravel()
    for j in range(1, k):
        total = best.sum()
        if total <= 0.0:
            pick = rng.integers(n)
        else:
            pick = rng.choice(n, p=best / total)
        centers[j] = x[pick]
        best = np.minimum(best, _squared_distances(x, centers[j : j + 1]).ravel())
    return centers


def lloyd(x: np.ndarray, k: int, max_iters: int, rng: np.random.Generator):
    """Lloyd iterations. Returns (centers, assignments, distortion trace).

    The trace starts at the distortion of the k-means++ initialization and
    appends one value per iteration; it is non-increasing.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < k:
        raise ValueError(f"k-means needs at least k={k} vectors, got {n}")
    centers = _kmeans_pp_init(x, k, rng)
    d2 = _squared_distances(x, centers)
    assign = d2.argmin(axis=1)
    trace = [float(d2[np.arange(n), assign].mean())]
    for _ in range(max_iters):
        current = d2[np.arange(n), assign].copy()
        for j in range(k):
            members = assign == j
            if members.any():
                centers[j] = x[members].mean(axis=0)
            else:
                # re-seed the empty cluster to the farthest point
                far = int(current.argmax())
                centers[j] = x[far]
                current[far] = 0.0
        d2 = _squared_distances(x, centers)
        new_assign = d2.argmin(axis=1)
        trace.append(float(d2[np.arange(n), new_assign].mean()))
        if np.array_equal(new_assign, assign):
            assign = new_assign
            break
        assign = new_assign
    return centers, assign, trace


def train_kmeans(vectors: np.ndarray, k: int, max_iters: int = 50, seed: int = 0,
                 modality: str = "audio", vocab_offset: int = 0) -> Codebook:
    rng = substream(seed, f"kmeans-{modality}")
    centers, _, _ = lloyd(np.asarray(vectors, dtype=np.float64), k, max_iters, rng)
    return Codebook(centers, modality, vocab_offset, seed=seed)


def assign_tokens(cb: Codebook, vectors: np.ndarray) -> TokenSeq:
    """Nearest center by squared Euclidean distance; ties pick the lowest id."""
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != cb.dim:
        raise ValueError(f"expected (N, {cb.dim}) vectors, got {x.shape}")
    ids = _squared_distances(x, cb.centers).argmin(axis=1) + cb.vocab_offset
    return TokenSeq(ids, [(cb.modality, x.shape[0])])


def unified_vocab_size(cb_audio: Codebook, cb_video: Codebook) -> int:
    if cb_audio.vocab_offset != 0:
        raise ValueError("audio ids must start at 0")
    if cb_video.vocab_offset != cb_audio.k:
        raise ValueError(
            f"video offset {cb_video.vocab_offset} overlaps audio range [0, {cb_audio.k})"
        )
    return cb_audio.k + cb_video.k


def reservoir_sample(rows, cap: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample of at most `cap` rows from an iterable of vectors."""
    kept = []
    for i, row in enumerate(rows):
        if i < cap:
            kept.append(np.asarray(row, dtype=np.float64))
        else:
            j = int(rng.integers(i + 1))
            if j < cap:
                kept[j] = np.asarray(row, dtype=np.float64)
    if not kept:
        raise ValueError("no vectors to sample")
    return np.stack(kept)


def save_codebook(path, cb: Codebook) -> None:
    lines, payload = pack_tensors([("centers", cb.centers)])
    with open(path, "wb") as fh:
        fh.write(f"{cb.modality} {cb.k} {cb.dim} {cb.vocab_offset} {cb.seed}\n".encode())
        fh.write((lines[0] + "\n").encode())
        fh.write(payload)


def load_codebook(path) -> Codebook:
    with open(path, "rb") as fh:
        head = fh.readline().decode().split()
        if len(head) != 5:
            raise ValueError(f"malformed codebook manifest in {path}")
        modality, k, dim, offset, seed = head[0], *map(int, head[1:])
        record = fh.readline().decode().strip()
        payload = fh.read()
    centers = unpack_tensors([record], payload)["centers"]
    if centers.shape != (k, dim):
        raise ValueError(f"codebook payload shape {centers.shape} != ({k}, {dim})")
    return Codebook(centers, modality, offset, seed=seed)
