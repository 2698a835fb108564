"""Stream synthesis (noise + one located word), framing and frame labels."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..errors import InputError
from .labels import BG_NOISE, LABELS
from .wav import SAMPLE_RATE, to_pcm16

log = logging.getLogger(__name__)

WINDOW_SECONDS = 1.0
HOP_SECONDS = 0.2
WINDOW = SAMPLE_RATE  # samples
HOP = SAMPLE_RATE // 5  # 200 ms


@dataclass(frozen=True)
class WordSpan:
    label: str
    start: float
    end: float

    def __post_init__(self):
        if self.label not in LABELS or self.label == BG_NOISE:
            raise InputError(f"span label must be a word or 'unknown', got {self.label!r}")
        if not 0.0 <= self.start < self.end:
            raise InputError(f"span needs 0 <= start < end, got [{self.start}, {self.end}]")

    @property
    def center(self) -> float:
        return 0.5 * (self.start + self.end)

    def to_json(self) -> dict:
        return {"label": self.label, "start": self.start, "end": self.end}

    @classmethod
    def from_json(cls, d: dict) -> WordSpan:
        return cls(str(d["label"]), float(d["start"]), float(d["end"]))


@dataclass
class SynthResult:
    samples: np.ndarray
    span: WordSpan
    snr_db: float
    gain: float
    noise_offset: int
    word_start: int
    clip_fraction: float
    noise_part: np.ndarray
    word_part: np.ndarray

    @property
    def duration(self) -> float:
        return len(self.samples) / SAMPLE_RATE


def measure_snr_db(word_part: np.ndarray, noise_part: np.ndarray, start: int, stop: int) -> float:
    """10 log10(word power / noise power) over samples [start, stop)."""
    pw = float(np.mean(word_part[start:stop] ** 2))
    pn = float(np.mean(noise_part[start:stop] ** 2))
    return 10.0 * np.log10(pw / pn)


def synthesize_stream(noise: np.ndarray, word: np.ndarray, rng: np.random.Generator, label: str = "unknown",
                      min_snr_db: float = 5.0, max_snr_db: float = 20.0, min_dur: float = 1.0,
                      max_dur: float = 3.0, quantize: bool = True) -> SynthResult:
    """Crop noise to a random 1-3 s stream and add ``word`` at a random offset.

    The word is scaled so that its power over its own span is ``snr_db`` above
    the noise power over the same span, ``snr_db ~ U[min_snr_db, max_snr_db]``.
    With silent noise the word is added unscaled and ``snr_db`` is inf.
    """
    noise = np.asarray(noise, dtype=np.float64)
    word = np.asarray(word, dtype=np.float64)
    if not 0 < min_dur <= max_dur:
        raise InputError(f"need 0 < min_dur <= max_dur, got {min_dur}, {max_dur}")
    if min_snr_db > max_snr_db:
        raise InputError(f"need min_snr_db <= max_snr_db, got {min_snr_db}, {max_snr_db}")
    n = int(round(rng.uniform(min_dur, max_dur) * SAMPLE_RATE))
    w = len(word)
    if w == 0:
        raise InputError("empty word clip")
    if w > n:
        raise InputError(f"word of {w} samples does not fit a {n}-sample stream")
    if len(noise) < n:
        raise InputError(f"noise clip of {len(noise)} samples is shorter than the {n}-sample stream")
    offset = int(rng.integers(0, len(noise) - n + 1))
    start = int(rng.integers(0, n - w + 1))
    snr_db = float(rng.uniform(min_snr_db, max_snr_db))
    noise_part = noise[offset:offset + n].copy()
    pw = float(np.mean(word ** 2))
    pn = float(np.mean(noise_part[start:start + w] ** 2))
    if pw == 0.0:
        raise InputError("silent word clip")
    if pn == 0.0:
        gain, snr_db = 1.0, float("inf")
    else:
        gain = float(np.sqrt(pn * 10.0 ** (snr_db / 10.0) / pw))
    word_part = np.zeros(n)
    word_part[start:start + w] = gain * word
    mix = noise_part + word_part
    clipped = np.abs(mix) > 1.0
    clip_fraction = float(np.mean(clipped))
    if clip_fraction:
        log.warning("synthesized stream clipped on %.4f%% of samples", 100.0 * clip_fraction)
    mix = np.clip(mix, -1.0, 1.0)
    if quantize:
        mix = to_pcm16(mix).astype(np.float64) / 32768.0
    span = WordSpan(label, start / SAMPLE_RATE, (start + w) / SAMPLE_RATE)
    return SynthResult(mix, span, snr_db, gain, offset, start, clip_fraction, noise_part, word_part)


def frame_count(n_samples: int) -> int:
    if n_samples < WINDOW:
        raise InputError(f"stream of {n_samples} samples is shorter than one {WINDOW}-sample window")
    return (n_samples - WINDOW) // HOP + 1


def frame_stream(samples_or_duration) -> list[float]:
    """Start times (s) of the 1 s windows taken every 200 ms.

    Accepts a sample array or a duration in seconds (rounded to samples).
    """
    if np.ndim(samples_or_duration) == 0:
        n = int(round(float(samples_or_duration) * SAMPLE_RATE))
    else:
        n = len(samples_or_duration)
    return [k * HOP / SAMPLE_RATE for k in range(frame_count(n))]


def _exact(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def label_frame(span: WordSpan | None, frame_start, window=WINDOW_SECONDS) -> str:
    """Word label if the window holds at least half of the span, else bg-noise.

    The comparison is done on exact rationals (floats are converted without
    rounding), so a 50 % overlap is never lost to rounding.
    """
    if span is None:
        return BG_NOISE
    s, e = _exact(span.start), _exact(span.end)
    f0 = _exact(frame_start)
    f1 = f0 + _exact(window)
    overlap = max(Fraction(0), min(e, f1) - max(s, f0))
    return span.label if 2 * overlap >= e - s else BG_NOISE


def label_frame_samples(label: str, start: int, end: int, frame_start: int, window: int = WINDOW) -> str:
    """Integer-sample version of :func:`label_frame`."""
    overlap = max(0, min(end, frame_start + window) - max(start, frame_start))
    return label if 2 * overlap >= end - start else BG_NOISE


def synthesize_long_stream(noise: np.ndarray, words: list[tuple[str, np.ndarray]], rng: np.random.Generator,
                           min_snr_db: float = 5.0, max_snr_db: float = 20.0,
                           quantize: bool = True) -> tuple[np.ndarray, list[WordSpan], list[float]]:
    """Place several words in one noise recording, one per equal-length slot.

    Slot k spans ``[k*L/n, (k+1)*L/n)`` of the ``L`` noise samples; each word
    sits at a uniform offset inside its slot, so spans never overlap. SNR is
    drawn and applied per word, as in :func:`synthesize_stream`.
    """
    noise = np.asarray(noise, dtype=np.float64)
    n = len(noise)
    if not words:
        raise InputError("need at least one word")
    slot = n // len(words)
    mix = noise.copy()
    spans, snrs = [], []
    for k, (label, word) in enumerate(words):
        word = np.asarray(word, dtype=np.float64)
        w = len(word)
        if w == 0 or w > slot:
            raise InputError(f"word {k} ({w} samples) does not fit a {slot}-sample slot")
        start = k * slot + int(rng.integers(0, slot - w + 1))
        snr_db = float(rng.uniform(min_snr_db, max_snr_db))
        pn = float(np.mean(noise[start:start + w] ** 2))
        pw = float(np.mean(word ** 2))
        if pw == 0.0:
            raise InputError("silent word clip")
        if pn == 0.0:
            gain, snr_db = 1.0, float("inf")
        else:
            gain = float(np.sqrt(pn * 10.0 ** (snr_db / 10.0) / pw))
        mix[start:start + w] += gain * word
        spans.append(WordSpan(label, start / SAMPLE_RATE, (start + w) / SAMPLE_RATE))
        snrs.append(snr_db)
    clip_fraction = float(np.mean(np.abs(mix) > 1.0))
    if clip_fraction:
        log.warning("long stream clipped on %.4f%% of samples", 100.0 * clip_fraction)
    mix = np.clip(mix, -1.0, 1.0)
    if quantize:
        mix = to_pcm16(mix).astype(np.float64) / 32768.0
    return mix, spans, snrs
