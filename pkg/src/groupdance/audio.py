"""Per-frame music features on the 30 fps motion clock.

Each frame is a 438-dim vector: 20 MFCCs, 20 MFCC deltas, 12 chroma bins,
a 384-lag onset tempogram, the onset envelope, and a binary beat channel.
`extract_features` computes them from a raw mono waveform with plain
scipy/numpy DSP; synthetic feature generation (synthkit) bypasses audio
entirely and is what the test-suite runs on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft
import scipy.signal

from .errors import ValidationError

FEATURE_DIM = 438
FRAME_RATE = 30.0

_DEFAULT_RANGES = {
    "mfcc": (0, 20),
    "mfcc_delta": (20, 40),
    "chroma": (40, 52),
    "tempogram": (52, 436),
    "onset_env": (436, 437),
    "beat_onehot": (437, 438),
}


@dataclass(frozen=True)
class FeatureLayout:
    """Named channel ranges partitioning [0, 438)."""

    ranges: dict = field(default_factory=lambda: dict(_DEFAULT_RANGES))

    def __post_init__(self):
        spans = sorted(self.ranges.values())
        if spans[0][0] != 0 or spans[-1][1] != FEATURE_DIM:
            raise ValidationError("channel ranges must cover [0, 438)")
        for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
            if a1 != b0:
                raise ValidationError("channel ranges must partition [0, 438) exactly")

    def slice(self, name: str) -> slice:
        lo, hi = self.ranges[name]
        return slice(lo, hi)

    def width(self, name: str) -> int:
        lo, hi = self.ranges[name]
        return hi - lo


LAYOUT = FeatureLayout()


class MusicFeatureSequence:
    """T x 438 feature matrix aligned to the motion clock."""

    def __init__(self, feats: np.ndarray, fps: float = FRAME_RATE):
        feats = np.asarray(feats, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[1] != FEATURE_DIM:
            raise ValidationError(f"expected (T, {FEATURE_DIM}) features, got {feats.shape}")
        if feats.shape[0] < 1:
            raise ValidationError("need at least one feature frame")
        if not np.isfinite(feats).all():
            raise ValidationError("features contain non-finite values")
        if fps <= 0:
            raise ValidationError("fps must be positive")
        self.feats = feats
        self.fps = float(fps)

    @property
    def n_frames(self) -> int:
        return self.feats.shape[0]

    def channel(self, name: str) -> np.ndarray:
        return self.feats[:, LAYOUT.slice(name)]


class BeatSequence:
    """Strictly increasing beat frame indices within a clip of T frames."""

    def __init__(self, frames, total_frames: int):
        frames = np.asarray(frames, dtype=np.int64).reshape(-1)
        if frames.size and not (np.diff(frames) > 0).all():
            raise ValidationError("beat frames must be strictly increasing")
        if frames.size and (frames[0] < 0 or frames[-1] >= total_frames):
            raise ValidationError("beat frames out of clip range")
        self.frames = frames
        self.total_frames = int(total_frames)

    def __len__(self):
        return self.frames.size

    def __iter__(self):
        return iter(self.frames)


def music_beats(m: MusicFeatureSequence) -> BeatSequence:
    """Support of the binary beat channel."""
    return BeatSequence(np.flatnonzero(m.channel("beat_onehot")[:, 0] > 0.5), m.n_frames)


# -- waveform feature extraction ----------------------------------------------

_N_FFT = 1024
_N_MELS = 40


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def _mel_filterbank(sr: int, n_fft: int, n_mels: int) -> np.ndarray:
    freqs = np.linspace(0, sr / 2, n_fft // 2 + 1)
    pts = _mel_to_hz(np.linspace(_hz_to_mel(0), _hz_to_mel(sr / 2), n_mels + 2))
    fb = np.zeros((n_mels, freqs.size))
    for i in range(n_mels):
        lo, mid, hi = pts[i], pts[i + 1], pts[i + 2]
        up = (freqs - lo) / max(mid - lo, 1e-9)
        down = (hi - freqs) / max(hi - mid, 1e-9)
        fb[i] = np.maximum(0.0, np.minimum(up, down))
    return fb


def _frame_centers(n_samples: int, sr: int) -> np.ndarray:
    """Sample index of each 30 fps frame center (no cumulative drift)."""
    t = int(round(n_samples / sr * FRAME_RATE))
    return np.round(np.arange(t) * sr / FRAME_RATE).astype(np.int64)


def _frame_signal(wave: np.ndarray, centers: np.ndarray, n_fft: int) -> np.ndarray:
    half = n_fft // 2
    padded = np.pad(wave, half, mode="reflect")
    idx = centers[:, None] + np.arange(n_fft)[None, :]
    return padded[idx]


def _tempogram(onset: np.ndarray, win: int) -> np.ndarray:
    """Windowed onset autocorrelation, lags 1..win per frame, (T, win)."""
    t = onset.size
    half = win // 2
    padded = np.pad(onset, half, mode="constant")
    window = np.hanning(win)
    out = np.empty((t, win))
    nfft = scipy.fft.next_fast_len(2 * win)
    for f in range(t):
        seg = padded[f:f + win] * window
        spec = np.abs(scipy.fft.rfft(seg, nfft)) ** 2
        ac = scipy.fft.irfft(spec, nfft)[:win]
        out[f] = ac / ac[0] if ac[0] > 1e-12 else 0.0
    return out


def _pick_beats(onset: np.ndarray) -> np.ndarray:
    """Peak-pick the onset envelope at an autocorrelation-estimated tempo."""
    if onset.max() <= 1e-6:
        return np.empty(0, dtype=np.int64)
    ac = np.correlate(onset, onset, mode="full")[onset.size - 1:]
    lo, hi = 8, min(45, onset.size - 1)  # ~40 to 225 BPM at 30 fps
    if hi <= lo:
        return np.empty(0, dtype=np.int64)
    period = lo + int(np.argmax(ac[lo:hi + 1]))
    thresh = onset.mean() + 0.5 * onset.std()
    min_gap = max(2, period // 2)
    order = np.argsort(onset)[::-1]
    chosen: list[int] = []
    for f in order:
        if onset[f] < thresh:
            break
        if all(abs(f - c) >= min_gap for c in chosen):
            chosen.append(int(f))
    return np.array(sorted(chosen), dtype=np.int64)


def extract_features(wave: np.ndarray, sr: int, layout: FeatureLayout = LAYOUT) -> MusicFeatureSequence:
    """Compute the 438-dim feature sequence from a mono waveform.

    One row per 1/30 s; requires at least one analysis window (1024 samples)
    of audio. Digital silence yields a zero onset envelope and no beats.
    """
    wave = np.asarray(wave, dtype=np.float64).reshape(-1)
    if wave.size == 0:
        raise ValidationError("empty audio")
    if sr <= 0:
        raise ValidationError("sample rate must be positive")
    if wave.size < _N_FFT:
        raise ValidationError(f"audio shorter than one analysis window ({_N_FFT} samples)")

    centers = _frame_centers(wave.size, sr)
    frames = _frame_signal(wave, centers, _N_FFT) * np.hanning(_N_FFT)
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    t = centers.size

    mel = power @ _mel_filterbank(sr, _N_FFT, _N_MELS).T
    logmel = np.log(mel + 1e-10)
    mfcc = scipy.fft.dct(logmel, type=2, norm="ortho", axis=1)[:, :20]
    mfcc_delta = np.vstack([np.zeros((1, 20)), np.diff(mfcc, axis=0)])

    freqs = np.linspace(0, sr / 2, _N_FFT // 2 + 1)
    chroma = np.zeros((t, 12))
    audible = freqs > 30.0
    midi = 69.0 + 12.0 * np.log2(np.where(audible, freqs, 440.0) / 440.0)
    pitch_class = np.mod(np.round(midi), 12).astype(np.int64)
    for pc in range(12):
        sel = audible & (pitch_class == pc)
        chroma[:, pc] = power[:, sel].sum(axis=1)
    peak = chroma.max(axis=1, keepdims=True)
    chroma = np.where(peak > 1e-12, chroma / np.maximum(peak, 1e-12), 0.0)

    # spectral flux on the mel bands, normalized to peak 1
    flux = np.zeros(t)
    if t > 1:
        flux[1:] = np.maximum(logmel[1:] - logmel[:-1], 0.0).sum(axis=1)
    if flux.max() > 1e-12:
        flux = flux / flux.max()

    tgram = _tempogram(flux, layout.width("tempogram"))
    beats = _pick_beats(flux)
    onehot = np.zeros(t)
    onehot[beats] = 1.0

    feats = np.zeros((t, FEATURE_DIM))
    feats[:, layout.slice("mfcc")] = mfcc
    feats[:, layout.slice("mfcc_delta")] = mfcc_delta
    feats[:, layout.slice("chroma")] = chroma
    feats[:, layout.slice("tempogram")] = tgram
    feats[:, layout.slice("onset_env")] = flux[:, None]
    feats[:, layout.slice("beat_onehot")] = onehot[:, None]
    return MusicFeatureSequence(feats)
