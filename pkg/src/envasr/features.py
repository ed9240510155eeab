"""Audio and video front ends.

Audio: 16 kHz mono waveforms -> 64-dim log mel-filterbank energies
(25 ms Hann window, 10 ms hop, 512-point FFT) -> non-overlapping stacks of 3
frames (192-dim patches), whitened with global statistics and clipped to
[-1.2, 1.2].

Video: float [0,1] clips at 256x256 (after center_crop_resize) -> flattened
non-overlapping tubelets of 3 frames x 16x16 pixels x RGB (2304-dim patches).
"""

import wave as wave_mod
from dataclasses import dataclass

import numpy as np

SAMPLE_RATE = 16000
FRAME_LENGTH = 400   # 25 ms at 16 kHz
FRAME_SHIFT = 160    # 10 ms
N_FFT = 512
N_MELS = 64
LOG_FLOOR = 1e-10
CLIP_BOUND = 1.2
STACK = 3            # LFBE frames per audio patch
TUBE_FRAMES = 3      # video frames per tubelet
TUBE_PIXELS = 16
AUDIO_PATCH_DIM = STACK * N_MELS
VIDEO_PATCH_DIM = TUBE_FRAMES * TUBE_PIXELS * TUBE_PIXELS * 3
STD_FLOOR = 1e-6


@dataclass
class AudioWave:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate != SAMPLE_RATE:
            raise ValueError(f"AudioWave must be {SAMPLE_RATE} Hz (resample first)")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")
        if self.samples.size and (self.samples.min() < -1.0 or self.samples.max() > 1.0):
            raise ValueError("waveform samples must lie in [-1, 1]")


@dataclass
class LfbeFrames:
    frames: np.ndarray            # (T, 64)
    frame_shift_ms: int = 10
    frame_length_ms: int = 25


@dataclass
class AudioPatchSeq:
    patches: np.ndarray           # (T', 192)
    whitened: bool = False


@dataclass
class VideoClip:
    frames: np.ndarray            # (F, H, W, 3) in [0, 1]
    frame_rate: float = 6.0


@dataclass
class VideoPatchSeq:
    patches: np.ndarray           # (N, 2304)
    grid: tuple                   # (time_steps, rows, cols)


@dataclass
class Whitener:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.maximum(np.asarray(self.std, dtype=np.float64), STD_FLOOR)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int = N_MELS, n_fft: int = N_FFT,
                   sample_rate: int = SAMPLE_RATE, fmin: float = 0.0,
                   fmax: float = 8000.0):
    """Triangular mel filters. Returns (weights (bins, n_mels), centers_hz)."""
    points = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    bins = n_fft // 2 + 1
    freqs = np.arange(bins) * sample_rate / n_fft
    weights = np.zeros((bins, n_mels))
    for j in range(n_mels):
        lo, center, hi = points[j], points[j + 1], points[j + 2]
        up = (freqs - lo) / max(center - lo, 1e-12)
        down = (hi - freqs) / max(hi - center, 1e-12)
        weights[:, j] = np.clip(np.minimum(up, down), 0.0, 1.0)
    return weights, points[1:-1]


_MEL_WEIGHTS, MEL_CENTERS_HZ = mel_filterbank()


def compute_lfbe(wave: AudioWave) -> LfbeFrames:
    """Log mel-filterbank energies from a 16 kHz waveform."""
    x = wave.samples
    if x.size < FRAME_LENGTH:
        raise ValueError(f"waveform too short: {x.size} < {FRAME_LENGTH} samples")
    n_frames = (x.size - FRAME_LENGTH) // FRAME_SHIFT + 1
    window = np.hanning(FRAME_LENGTH)
    idx = np.arange(FRAME_LENGTH)[None, :] + FRAME_SHIFT * np.arange(n_frames)[:, None]
    frames = x[idx] * window
    spec = np.fft.rfft(frames, n=N_FFT, axis=1)
    power = spec.real**2 + spec.imag**2
    energies = power @ _MEL_WEIGHTS
    return LfbeFrames(np.log(np.maximum(energies, LOG_FLOOR)))


def stack_frames(frames: LfbeFrames) -> AudioPatchSeq:
    """Concatenate non-overlapping groups of 3 frames; remainder is dropped."""
    f = frames.frames
    t = f.shape[0]
    if t < STACK:
        raise ValueError(f"need at least {STACK} frames, got {t}")
    n = t // STACK
    return AudioPatchSeq(f[: n * STACK].reshape(n, STACK * f.shape[1]), whitened=False)


def fit_whitener(rows: np.ndarray) -> Whitener:
    """Global per-dimension mean/std over a (n, d) matrix of patch rows."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise ValueError("fit_whitener needs a matrix with at least 2 rows")
    return Whitener(rows.mean(axis=0), rows.std(axis=0))


def whiten_clip(patches, whitener: Whitener) -> AudioPatchSeq:
    """(x - mean) / std, then clamp to [-1.2, 1.2]."""
    rows = patches.patches if isinstance(patches, AudioPatchSeq) else np.asarray(patches)
    if rows.shape[-1] != whitener.mean.shape[0]:
        raise ValueError("whitener dimension mismatch")
    z = (rows - whitener.mean) / whitener.std
    return AudioPatchSeq(np.clip(z, -CLIP_BOUND, CLIP_BOUND), whitened=True)


def extract_video_patches(clip: VideoClip) -> VideoPatchSeq:
    """Flatten non-overlapping 3x16x16 (x RGB) tubelets, time-major order."""
    x = np.asarray(clip.frames, dtype=np.float64)
    if x.ndim != 4 or x.shape[3] != 3:
        raise ValueError("clip must have shape (F, H, W, 3)")
    f, h, w, c = x.shape
    if f % TUBE_FRAMES != 0:
        raise ValueError(f"frame count {f} not divisible by {TUBE_FRAMES}")
    if h % TUBE_PIXELS != 0 or w % TUBE_PIXELS != 0:
        raise ValueError(f"spatial dims {h}x{w} not divisible by {TUBE_PIXELS}")
    t, r, cols = f // TUBE_FRAMES, h // TUBE_PIXELS, w // TUBE_PIXELS
    x = x.reshape(t, TUBE_FRAMES, r, TUBE_PIXELS, cols, TUBE_PIXELS, c)
    x = x.transpose(0, 2, 4, 1, 3, 5, 6)
    return VideoPatchSeq(x.reshape(t * r * cols, VIDEO_PATCH_DIM), grid=(t, r, cols))


def truncate_to_tubelets(frames: np.ndarray) -> np.ndarray:
    """Drop trailing frames so the count divides the tubelet depth (3)."""
    f = frames.shape[0]
    if f < TUBE_FRAMES:
        raise ValueError(f"need at least {TUBE_FRAMES} frames, got {f}")
    return frames[: (f // TUBE_FRAMES) * TUBE_FRAMES]


def center_crop_resize(frames: np.ndarray, size: int = 256) -> VideoClip:
    """Resize the short side to `size` (bilinear) then center-crop size x size."""
    x = np.asarray(frames, dtype=np.float64)
    f, h, w, _ = x.shape
    scale = size / min(h, w)
    nh, nw = max(size, round(h * scale)), max(size, round(w * scale))
    if (nh, nw) != (h, w):
        x = _bilinear_resize(x, nh, nw)
    top = (nh - size) // 2
    left = (nw - size) // 2
    return VideoClip(x[:, top : top + size, left : left + size, :])


def _bilinear_resize(x: np.ndarray, nh: int, nw: int) -> np.ndarray:
    f, h, w, c = x.shape
    ys = (np.arange(nh) + 0.5) * h / nh - 0.5
    xs = (np.arange(nw) + 0.5) * w / nw - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[None, :, None, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, None, :, None]
    top = x[:, y0][:, :, x0] * (1 - wx) + x[:, y0][:, :, x1] * wx
    bot = x[:, y1][:, :, x0] * (1 - wx) + x[:, y1][:, :, x1] * wx
    return top * (1 - wy) + bot * wy


def resample_linear(samples: np.ndarray, rate_in: int, rate_out: int = SAMPLE_RATE) -> np.ndarray:
    if rate_in == rate_out:
        return np.asarray(samples, dtype=np.float64)
    x = np.asarray(samples, dtype=np.float64)
    n_out = int(round(x.size * rate_out / rate_in))
    t_out = np.arange(n_out) * (rate_in / rate_out)
    return np.interp(t_out, np.arange(x.size), x)


def read_wav(path) -> AudioWave:
    """PCM16 mono WAV; resamples by linear interpolation if not 16 kHz."""
    with wave_mod.open(str(path), "rb") as fh:
        if fh.getnchannels() != 1:
            raise ValueError(f"expected mono audio in {path}")
        if fh.getsampwidth() != 2:
            raise ValueError(f"expected 16-bit PCM in {path}")
        rate = fh.getframerate()
        raw = fh.readframes(fh.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if rate != SAMPLE_RATE:
        samples = np.clip(resample_linear(samples, rate), -1.0, 1.0)
    return AudioWave(samples)


def write_wav(path, samples: np.ndarray, sample_rate: int = SAMPLE_RATE) -> None:
    scaled = np.round(np.asarray(samples, dtype=np.float64) * 32768.0)
    pcm = np.clip(scaled, -32768, 32767).astype("<i2")
    with wave_mod.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(sample_rate)
        fh.writeframes(pcm.tobytes())
