"""Log-mel time/frequency maps.

A 1 s window (16000 samples) is cut into 98 analysis frames of 30 ms
(480 samples) every 10 ms (160 samples). Each frame is Hann-windowed, its
512-point magnitude spectrum is pooled by 40 triangular mel filters spanning
20-7600 Hz and the result is ``log(x + 1e-10)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft
import scipy.signal
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import InputError
from .stream import HOP, WINDOW
from .wav import SAMPLE_RATE

FRAME_LEN = 480
FRAME_HOP = 160
N_FFT = 512
N_MELS = 40
F_MIN, F_MAX = 20.0, 7600.0
LOG_FLOOR = 1e-10
FRAMES_PER_WINDOW = (WINDOW - FRAME_LEN) // FRAME_HOP + 1  # 98
COLUMNS_PER_HOP = HOP // FRAME_HOP  # 20


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(n_mels: int = N_MELS, f_min: float = F_MIN, f_max: float = F_MAX) -> np.ndarray:
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    return edges[1:-1]


def mel_filterbank(n_mels: int = N_MELS, n_fft: int = N_FFT, rate: int = SAMPLE_RATE,
                   f_min: float = F_MIN, f_max: float = F_MAX) -> np.ndarray:
    """(n_mels, n_fft//2 + 1) triangular weights with unit peak, linear in Hz."""
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling))


_FBANK = mel_filterbank()
_HANN = scipy.signal.get_window("hann", FRAME_LEN)  # periodic


def log_mel_columns(samples: np.ndarray, n_dct: int | None = None) -> np.ndarray:
    """Feature columns for every 10 ms analysis frame of ``samples``: (40, n)."""
    x = np.asarray(samples, dtype=np.float64)
    if len(x) < FRAME_LEN:
        raise InputError(f"need at least {FRAME_LEN} samples, got {len(x)}")
    frames = sliding_window_view(x, FRAME_LEN)[::FRAME_HOP] * _HANN
    mag = np.abs(np.fft.rfft(frames, n=N_FFT, axis=1))
    feats = np.log(mag @ _FBANK.T + LOG_FLOOR).T
    if n_dct is not None:
        feats = scipy.fft.dct(feats, type=2, norm="ortho", axis=0)[:n_dct]
    return np.ascontiguousarray(feats)


def mfcc(window: np.ndarray, n_dct: int | None = None) -> np.ndarray:
    """40 x 98 log-mel map of exactly one second of audio.

    ``n_dct`` switches to cepstral coefficients (DCT-II of the log-mels,
    first ``n_dct`` kept), giving an ``n_dct x 98`` map.
    """
    window = np.asarray(window)
    if window.shape != (WINDOW,):
        raise InputError(f"mfcc needs exactly {WINDOW} samples, got {window.shape}")
    return log_mel_columns(window, n_dct)


def stream_windows(samples: np.ndarray, n_dct: int | None = None) -> np.ndarray:
    """All 1 s / 200 ms window maps of a stream: (n_windows, bins, 98).

    The analysis grid of each window coincides with the stream's own grid, so
    windows are slices of one pass over the stream.
    """
    cols = log_mel_columns(samples, n_dct)
    n_win = (len(samples) - WINDOW) // HOP + 1
    if n_win < 1:
        raise InputError("stream shorter than one window")
    return np.stack([cols[:, k * COLUMNS_PER_HOP:k * COLUMNS_PER_HOP + FRAMES_PER_WINDOW]
                     for k in range(n_win)])


@dataclass
class FeatureNormalizer:
    """Per-coefficient mean/std, fitted on training audio and then frozen."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, streams, n_dct: int | None = None) -> FeatureNormalizer:
        total = None
        sq = None
        count = 0
        for s in streams:
            cols = log_mel_columns(s, n_dct)
            total = cols.sum(axis=1) if total is None else total + cols.sum(axis=1)
            sq = (cols ** 2).sum(axis=1) if sq is None else sq + (cols ** 2).sum(axis=1)
            count += cols.shape[1]
        if not count:
            raise InputError("cannot fit feature statistics on no audio")
        mean = total / count
        var = np.maximum(sq / count - mean ** 2, 0.0)
        return cls(mean, np.sqrt(var) + 1e-5)

    @classmethod
    def identity(cls, bins: int = N_MELS) -> FeatureNormalizer:
        return cls(np.zeros(bins), np.ones(bins))

    def __call__(self, fmap: np.ndarray) -> np.ndarray:
        return (fmap - self.mean[:, None]) / self.std[:, None]
